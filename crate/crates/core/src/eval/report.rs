use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::replay::{EvalSettings, TaskResult};
use super::{EvalMode, MatchPolicy};
use crate::dataset::{Complexity, Difficulty, TaskRecord};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("verdict vectors differ in length ({benchmark} vs {human})")]
pub struct FidelityError {
    pub benchmark: usize,
    pub human: usize,
}

/// Fraction of pairs on which the two verdicts agree.
pub fn fidelity(benchmark: &[bool], human: &[bool]) -> Result<f64, FidelityError> {
    if benchmark.len() != human.len() {
        return Err(FidelityError {
            benchmark: benchmark.len(),
            human: human.len(),
        });
    }
    if benchmark.is_empty() {
        return Ok(0.0);
    }
    let agree = benchmark.iter().zip(human).filter(|(a, b)| a == b).count();
    Ok(agree as f64 / benchmark.len() as f64)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Rates over the (task, run) pairs of one task class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub pairs: usize,
    pub steps: usize,
    pub action_accuracy: f64,
    pub tsr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Totals {
    pub cost_usd: f64,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub reasoning_tokens: u64,
    pub exchanges: usize,
    pub est_latency_s: f64,
    pub cost_per_task_usd: f64,
    pub est_latency_per_task_s: f64,
    pub reasoning_tokens_per_task: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReflectionStats {
    /// Steps on which reflection ran.
    pub reflected: usize,
    /// Steps the reflector judged wrong.
    pub flagged: usize,
    /// Flagged steps whose original prediction was indeed wrong.
    pub flagged_true_errors: usize,
    /// Flagged wrong predictions that the re-prediction fixed.
    pub errors_corrected: usize,
    /// Flagged correct predictions that the re-prediction broke.
    pub correct_broken: usize,
    /// Re-predictions that differ from the original.
    pub changed: usize,
    /// Unreadable verdicts, treated as approval.
    pub malformed: usize,
}

/// Aggregate of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: EvalMode,
    pub policy: MatchPolicy,
    pub n_tasks: usize,
    pub n_runs: usize,
    /// False when the run was cancelled before every pair finished.
    pub complete: bool,
    pub steps: usize,
    pub action_accuracy: f64,
    pub tsr: f64,
    pub action_accuracy_wo_open_finish: f64,
    pub tsr_wo_open_finish: f64,
    pub by_difficulty: BTreeMap<Difficulty, Breakdown>,
    pub by_complexity: BTreeMap<Complexity, Breakdown>,
    pub fidelity: Option<f64>,
    pub totals: Totals,
    pub reflection_stats: ReflectionStats,
    pub history_fallbacks: usize,
    pub step_errors: usize,
    pub results: Vec<TaskResult>,
}

fn breakdown<'a>(results: impl Iterator<Item = &'a TaskResult>) -> Breakdown {
    let (mut pairs, mut ok, mut steps, mut matched) = (0, 0, 0, 0);
    for r in results {
        pairs += 1;
        ok += usize::from(r.success);
        steps += r.outcomes.len();
        matched += r.outcomes.iter().filter(|o| o.matched).count();
    }
    Breakdown {
        pairs,
        steps,
        action_accuracy: ratio(matched, steps),
        tsr: ratio(ok, pairs),
    }
}

impl RunReport {
    /// Reduces per-pair results. Rates are over the pairs present, the
    /// expected pair count is `tasks × n_runs`.
    pub fn aggregate(tasks: &[TaskRecord], results: Vec<TaskResult>, settings: &EvalSettings, complete: bool) -> Self {
        let outcomes = || results.iter().flat_map(|r| r.outcomes.iter());
        let steps = outcomes().count();
        let matched = outcomes().filter(|o| o.matched).count();
        let core_steps = outcomes().filter(|o| o.counts_without_open_finish()).count();
        let core_matched = outcomes()
            .filter(|o| o.counts_without_open_finish() && o.matched)
            .count();
        let pairs = results.len();

        let mut by_difficulty = BTreeMap::new();
        let mut by_complexity = BTreeMap::new();
        for d in [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard] {
            by_difficulty.insert(d, breakdown(results.iter().filter(|r| r.task_class.difficulty == d)));
        }
        for c in [Complexity::Simple, Complexity::Moderate, Complexity::Complex] {
            by_complexity.insert(c, breakdown(results.iter().filter(|r| r.task_class.complexity == c)));
        }

        let mut bench = Vec::new();
        let mut human = Vec::new();
        for r in &results {
            let verdict = tasks
                .iter()
                .find(|t| t.task_id == r.task_id)
                .and_then(|t| t.human_verdicts.as_ref())
                .and_then(|v| v.get(r.run));
            if let Some(&h) = verdict {
                bench.push(r.success);
                human.push(h);
            }
        }
        let fidelity = (!bench.is_empty()).then(|| fidelity(&bench, &human).expect("paired verdicts"));

        let mut totals = Totals::default();
        for r in &results {
            totals.cost_usd += r.cost_usd;
            totals.est_latency_s += r.est_latency_s;
            for ex in r.exchanges() {
                totals.exchanges += 1;
                totals.tokens_in += ex.tokens_in;
                totals.tokens_out += ex.tokens_out;
                totals.reasoning_tokens += ex.reasoning_tokens;
            }
        }
        if pairs > 0 {
            totals.cost_per_task_usd = totals.cost_usd / pairs as f64;
            totals.est_latency_per_task_s = totals.est_latency_s / pairs as f64;
            totals.reasoning_tokens_per_task = totals.reasoning_tokens as f64 / pairs as f64;
        }

        let mut rs = ReflectionStats::default();
        for o in outcomes() {
            let Some(original_ok) = o.original_matched else { continue };
            rs.reflected += 1;
            rs.malformed += usize::from(o.reflection_malformed);
            if o.reflection_flagged {
                rs.flagged += 1;
                rs.changed += usize::from(o.reflection_changed);
                if !original_ok {
                    rs.flagged_true_errors += 1;
                    rs.errors_corrected += usize::from(o.matched);
                } else if !o.matched {
                    rs.correct_broken += 1;
                }
            }
        }

        RunReport {
            mode: settings.mode,
            policy: settings.policy,
            n_tasks: tasks.len(),
            n_runs: settings.n_runs,
            complete,
            steps,
            action_accuracy: ratio(matched, steps),
            tsr: ratio(results.iter().filter(|r| r.success).count(), pairs),
            action_accuracy_wo_open_finish: ratio(core_matched, core_steps),
            tsr_wo_open_finish: ratio(results.iter().filter(|r| r.success_wo_open_finish).count(), pairs),
            by_difficulty,
            by_complexity,
            fidelity,
            totals,
            reflection_stats: rs,
            history_fallbacks: outcomes().filter(|o| o.history_fallback).count(),
            step_errors: outcomes().filter(|o| o.error.is_some()).count(),
            results,
        }
    }

    pub fn success_verdicts(&self) -> Vec<bool> {
        self.results.iter().map(|r| r.success).collect()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}%", x * 100.0)
}

/// Aligned text: a Technique/A.Acc/Cost/TSR row for the run, then the
/// open/finish-excluded variant and the task-class breakdowns.
pub fn render_report_table(label: &str, report: &RunReport) -> String {
    let mut rows: Vec<[String; 4]> = vec![[
        "Technique".into(),
        "A.Acc".into(),
        "Cost".into(),
        "TSR".into(),
    ]];
    rows.push([
        label.to_owned(),
        pct(report.action_accuracy),
        format!("${:.4}", report.totals.cost_per_task_usd),
        pct(report.tsr),
    ]);
    rows.push([
        format!("{label} (w/o Open & Finish)"),
        pct(report.action_accuracy_wo_open_finish),
        "-".into(),
        pct(report.tsr_wo_open_finish),
    ]);
    let mut breakdown_rows: Vec<(String, &Breakdown)> = Vec::new();
    for (d, b) in &report.by_difficulty {
        breakdown_rows.push((format!("  difficulty={}", serde_json::to_value(d).unwrap().as_str().unwrap()), b));
    }
    for (c, b) in &report.by_complexity {
        breakdown_rows.push((format!("  complexity={}", serde_json::to_value(c).unwrap().as_str().unwrap()), b));
    }
    for (name, b) in breakdown_rows {
        if b.pairs > 0 {
            rows.push([name, pct(b.action_accuracy), "-".into(), pct(b.tsr)]);
        }
    }
    let widths: Vec<usize> = (0..4)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "mode: {}  tasks: {}  runs: {}{}",
        report.mode.as_str(),
        report.n_tasks,
        report.n_runs,
        if report.complete { "" } else { "  (INCOMPLETE)" }
    );
    for (i, r) in rows.iter().enumerate() {
        let line = format!(
            "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}",
            r[0],
            r[1],
            r[2],
            r[3],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2],
            w3 = widths[3]
        );
        let _ = writeln!(out, "{}", line.trim_end());
        if i == 0 {
            let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 6));
        }
    }
    if let Some(f) = report.fidelity {
        let _ = writeln!(out, "fidelity vs human verdicts: {}", pct(f));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fidelity_examples() {
        assert_eq!(fidelity(&[true, false, true], &[true, true, true]).unwrap(), 2.0 / 3.0);
        assert_eq!(fidelity(&[true, false], &[true, false]).unwrap(), 1.0);
        assert_eq!(fidelity(&[true, false], &[false, true]).unwrap(), 0.0);
        assert!(fidelity(&[true], &[]).is_err());
    }
}
