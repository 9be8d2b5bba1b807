//! Acceptance suite. Every criterion runs with mock model clients and no
//! network, prints one PASS/FAIL line, and the binary exits non-zero when
//! any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use replaybench::agent::{
    AgentConfig, Exemplar, HistoryTechnique, MockPolicy, ModelExchange, ModularAgent, ReplayMockClient, Role,
};
use replaybench::dataset::{classify_task, compute_stats, Complexity, Difficulty, TaskRecord};
use replaybench::eval::{evaluate_run, EvalMode, EvalSettings};
use replaybench::metrics::{cost_of, estimate_latency, pareto_front, EfficiencyPoint, LatencyModel, ParetoAxis, PriceTable};
use replaybench::screen::ParserTechnique;
use replaybench::sweep::{full_grid, grid_argmax, incremental_sweep, Choice, Slot, Summary, SweepPlan};
use replaybench::synth::{synth_tasks, write_dataset, SynthSpec};
use replaybench::{load_dataset, RunReport};

use common::golden;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn replay(
    tasks: &[TaskRecord],
    config: &AgentConfig,
    client: ReplayMockClient,
    mode: EvalMode,
    n_runs: usize,
) -> RunReport {
    let client = Arc::new(client);
    let mut settings = EvalSettings::new(mode);
    settings.history = config.history;
    settings.n_runs = n_runs;
    settings.workers = 4;
    evaluate_run(tasks, |_, _| Box::new(ModularAgent::new(config.clone(), client.clone())), &settings, None).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn oracle_law() -> Outcome {
    let tasks = common::fixtures();
    let config = AgentConfig::simplest("gpt-4.1");
    assert_eq!(config.parser, ParserTechnique::A11yHtml);
    let start = Instant::now();
    let mut got = Vec::new();
    for mode in [EvalMode::MultiBranch, EvalMode::SinglePath] {
        let r = replay(&tasks, &config, ReplayMockClient::new(MockPolicy::Oracle, 1), mode, 1);
        got.push((mode, r.action_accuracy, r.tsr));
    }
    let secs = start.elapsed().as_secs_f64();
    let exact = got.iter().all(|&(_, acc, tsr)| acc == 1.0 && tsr == 1.0);
    check(exact && secs < 5.0, format!("{got:?} in {secs:.2}s"))
}

fn branch_separation() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let spec = SynthSpec { n_tasks: 12, min_steps: 2, max_steps: 8, elements_per_screen: 5, alternatives: 2, seed: 3 };
    let tasks = write_dataset(tmp.path(), &spec).unwrap();
    assert!(tasks.iter().all(|t| t.steps.iter().all(|s| s.valid_actions.len() >= 2)));
    let config = AgentConfig::simplest("gpt-4.1");
    let multi = replay(&tasks, &config, ReplayMockClient::new(MockPolicy::AltPath, 1), EvalMode::MultiBranch, 1);
    let single = replay(&tasks, &config, ReplayMockClient::new(MockPolicy::AltPath, 1), EvalMode::SinglePath, 1);
    check(
        multi.tsr == 1.0 && single.tsr == 0.0,
        format!("multi-branch TSR {} vs single-path TSR {}", multi.tsr, single.tsr),
    )
}

/// Expected TSR by direct simulation: each step independently succeeds with
/// probability 1 - p, and a task succeeds when all its steps do.
fn simulated_tsr(step_counts: &[usize], p: f64, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for &n in step_counts {
        let wins = (0..trials).filter(|_| (0..n).all(|_| rng.random::<f64>() >= p)).count();
        total += wins as f64 / trials as f64;
    }
    total / step_counts.len() as f64
}

fn noisy_calibration() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let tasks = write_dataset(tmp.path(), &SynthSpec::calibration(11)).unwrap();
    let steps: usize = tasks.iter().map(|t| t.steps.len()).sum();
    assert!(steps >= 500, "{steps} steps");
    let counts: Vec<usize> = tasks.iter().map(|t| t.steps.len()).collect();
    let config = AgentConfig::simplest("gpt-4.1");
    let n_runs = 10;
    let mut lines = Vec::new();
    let mut ok = true;
    for p in [0.1, 0.2] {
        let r = replay(&tasks, &config, ReplayMockClient::new(MockPolicy::Noisy { p }, 5), EvalMode::MultiBranch, n_runs);
        let expected = simulated_tsr(&counts, p, 20_000, 77);
        ok &= (r.action_accuracy - (1.0 - p)).abs() <= 0.05 && (r.tsr - expected).abs() <= 0.05;
        lines.push(format!("p={p}: A.Acc {:.4} (want {:.2}), TSR {:.4} (oracle {expected:.4})", r.action_accuracy, 1.0 - p, r.tsr));
    }
    check(ok, format!("{steps} steps x {n_runs} runs; {}", lines.join("; ")))
}

fn task_with(template: &TaskRecord, steps: usize, ui: u32) -> TaskRecord {
    let mut t = template.clone();
    let step = t.steps[0].clone();
    t.steps = (0..steps)
        .map(|i| {
            let mut s = step.clone();
            s.index = i;
            s.ui_count = Some(ui);
            s
        })
        .collect();
    t
}

fn taxonomy_boundaries() -> Outcome {
    let template = &common::fixtures()[0];
    let difficulty = [(4, Difficulty::Easy), (5, Difficulty::Medium), (11, Difficulty::Medium), (12, Difficulty::Hard)];
    let complexity = [(25, Complexity::Simple), (26, Complexity::Moderate), (40, Complexity::Moderate), (41, Complexity::Complex)];
    let mut wrong = Vec::new();
    for &(steps, d) in &difficulty {
        for &(ui, c) in &complexity {
            let class = classify_task(&task_with(template, steps, ui));
            if class.difficulty != d || class.complexity != c {
                wrong.push(format!("{steps} steps x {ui} UIs -> {class:?}"));
            }
        }
    }
    check(wrong.is_empty(), format!("{} instances; mismatches {wrong:?}", difficulty.len() * complexity.len()))
}

fn exchange(role: Role, model: &str, tokens_in: u64, tokens_out: u64) -> ModelExchange {
    ModelExchange {
        role,
        model: model.into(),
        prompt_hash: String::new(),
        response_text: String::new(),
        tokens_in,
        tokens_out,
        reasoning_tokens: 0,
        wall_time_s: 0.0,
    }
}

fn economics() -> Outcome {
    let prices = PriceTable::builtin();
    let latency = LatencyModel::from_prices(&prices);
    let cost = cost_of(&[exchange(Role::Actor, "gpt-4.1", 1000, 100)], &prices).unwrap();
    let lat = estimate_latency(&[exchange(Role::Actor, "gpt-4.1", 500, 61)], &latency, HistoryTechnique::RawTrace).unwrap();
    let want_lat = 0.839 + 61.0 / 60.7;
    // 0.713 + 100/71.5 is about 2.11 s, inside the 3 s window.
    let summary = exchange(Role::Summarizer, "gpt-4.1-mini", 800, 100);
    let pre = estimate_latency(std::slice::from_ref(&summary), &latency, HistoryTechnique::PreAction).unwrap();
    let post = estimate_latency(std::slice::from_ref(&summary), &latency, HistoryTechnique::PostAction).unwrap();
    check(
        (cost - 0.0028).abs() <= 1e-9 && (lat - want_lat).abs() <= 1e-6 && pre == 0.0 && post > 0.0,
        format!("cost ${cost:.10}, latency {lat:.6}s (want {want_lat:.6}), pre-action summary {pre}s, post-action {post:.3}s"),
    )
}

fn sweep_oracle() -> Outcome {
    let pool = vec![Exemplar {
        observation: "0. Button text=\"OK\" [clickable]".into(),
        action: serde_json::json!({"action type": "click", "index": 0}),
    }];
    let plan = SweepPlan::standard(AgentConfig::simplest("gpt-4.1"), pool);
    let sizes: Vec<usize> = Slot::ALL.iter().map(|s| plan.candidates[s].len()).collect();
    assert_eq!(sizes, [6, 3, 3, 2]);
    let sum: usize = sizes.iter().sum();
    let mut failures = Vec::new();
    let mut calls_seen = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights: Vec<(Choice, f64)> =
            Slot::ALL.iter().flat_map(|s| plan.candidates[s].clone()).map(|c| (c, rng.random::<f64>())).collect();
        let objective = |c: &AgentConfig| -> Result<Summary, String> {
            let tsr: f64 = Slot::ALL
                .iter()
                .map(|s| weights.iter().find(|(w, _)| *w == Choice::of(c, *s)).unwrap().1)
                .sum::<f64>()
                / 4.0;
            Ok(Summary { action_accuracy: tsr, tsr, cost_per_task_usd: 0.01, est_latency_per_task_s: 1.0 })
        };
        let mut calls = 0;
        let result = incremental_sweep(&plan, |c| {
            calls += 1;
            objective(c)
        })
        .unwrap();
        let grid = full_grid(&plan, 108, objective).unwrap();
        let (best, _) = grid_argmax(&plan, &grid).unwrap();
        // The winner of one slot is carried into the next, whose trace
        // reuses its result instead of calling the evaluator again.
        let reused = result.trace.iter().filter(|e| e.reused).count();
        if grid.len() != 108
            || *best != result.final_config
            || result.trace.len() != sum
            || calls != result.evaluations
            || calls + reused != sum
        {
            failures.push(seed);
        }
        calls_seen = calls;
    }
    check(
        failures.is_empty(),
        format!("20 seeded objectives; {sum} evaluations per sweep ({calls_seen} evaluator calls), grid 108; failing seeds {failures:?}"),
    )
}

/// Undominated under the same rule as the library, by all-pairs comparison.
fn dominated(p: &EfficiencyPoint, q: &EfficiencyPoint, axis: ParetoAxis) -> bool {
    let (ep, eq) = (p.expense(axis), q.expense(axis));
    eq <= ep && q.tsr >= p.tsr && (eq < ep || q.tsr > p.tsr)
}

fn pareto_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut bad = Vec::new();
    for instance in 0..100 {
        let n = rng.random_range(1..40);
        // Coarse values force ties in expense and TSR.
        let points: Vec<EfficiencyPoint> = (0..n)
            .map(|i| EfficiencyPoint {
                label: format!("p{i}"),
                tsr: rng.random_range(0..20) as f64 / 20.0,
                cost_per_task_usd: rng.random_range(0..15) as f64 / 100.0,
                est_latency_per_task_s: rng.random_range(0..15) as f64 / 2.0,
            })
            .collect();
        for axis in [ParetoAxis::Cost, ParetoAxis::Latency] {
            let mut want: Vec<&EfficiencyPoint> =
                points.iter().filter(|p| !points.iter().any(|q| dominated(p, q, axis))).collect();
            want.sort_by(|a, b| a.expense(axis).total_cmp(&b.expense(axis)));
            let got = pareto_front(&points, axis);
            let got_labels: Vec<&str> = got.iter().map(|p| p.label.as_str()).collect();
            let want_labels: Vec<&str> = want.iter().map(|p| p.label.as_str()).collect();
            if got_labels != want_labels {
                bad.push((instance, axis));
            }
        }
    }
    check(bad.is_empty(), format!("100 instances x 2 axes; mismatches {bad:?}"))
}

fn eval_cli(out: &Path) -> i32 {
    let data = common::dataset_dir();
    let args = [
        "replaybench", "eval", "--dataset", data.to_str().unwrap(), "--mock-model", "noisy:0.2", "--seed", "42",
        "--n-runs", "3", "--workers", "4", "--output", out.to_str().unwrap(),
    ];
    replaybench::cli::run(args, &mut Vec::new(), &mut Vec::new())
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let codes = (eval_cli(&a), eval_cli(&b));
    let ra = std::fs::read(a.join("report.json")).unwrap();
    let rb = std::fs::read(b.join("report.json")).unwrap();
    check(codes == (0, 0) && ra == rb, format!("exit codes {codes:?}; report.json {} bytes, identical: {}", ra.len(), ra == rb))
}

fn parser_goldens() -> Outcome {
    let encoded = golden::check_encodings();
    let overlaid = golden::check_overlays();
    golden::check_ui_counts();
    Ok(format!("{encoded} screens encoded (html, list, index maps bijective), {overlaid} SoM overlays"))
}

fn stats() -> Outcome {
    golden::check_stats();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let min = rng.random_range(1..6);
        let spec = SynthSpec {
            n_tasks: rng.random_range(1..15),
            min_steps: min,
            max_steps: min + rng.random_range(0..8),
            elements_per_screen: rng.random_range(1..9),
            alternatives: rng.random_range(0..5),
            seed: rng.random(),
        };
        let s = compute_stats(&synth_tasks(&spec)).unwrap();
        if !golden::identity_holds(&s) {
            return Err(format!("identity fails for {spec:?}"));
        }
    }
    Ok("fixture golden matches; identity holds on 200 random synthetic datasets".into())
}

fn reflection_accounting() -> Outcome {
    let tasks = load_dataset(common::dataset_dir()).unwrap();
    let mut config = AgentConfig::simplest("gpt-4.1");
    config.reflection = true;
    config.model_roles.insert(Role::Reflector, "gpt-4.1".into());
    let client = ReplayMockClient::new(MockPolicy::Noisy { p: 0.2 }, 3).with_reflector_flag_rate(0.5);
    let r = replay(&tasks, &config, client, EvalMode::MultiBranch, 4);
    let outcomes: Vec<_> = r.results.iter().flat_map(|t| &t.outcomes).collect();
    let flagged_events = outcomes.iter().filter(|o| o.reflection_flagged).count();
    let mut law_broken = 0;
    let mut reflected = 0;
    for o in &outcomes {
        let actors = o.exchanges.iter().filter(|e| e.role == Role::Actor).count();
        let reflectors = o.exchanges.iter().filter(|e| e.role == Role::Reflector).count();
        let parsed = o.original_matched.is_some();
        reflected += usize::from(parsed);
        let want = if parsed { (1 + usize::from(o.reflection_flagged), 1) } else { (1, 0) };
        law_broken += usize::from((actors, reflectors) != want || o.exchanges.len() != actors + reflectors);
    }
    let s = &r.reflection_stats;
    let true_errors = outcomes.iter().filter(|o| o.reflection_flagged && o.original_matched == Some(false)).count();
    let rate = flagged_events as f64 / reflected.max(1) as f64;
    check(
        s.flagged == flagged_events
            && s.reflected == reflected
            && s.flagged_true_errors == true_errors
            && law_broken == 0
            && (rate - 0.5).abs() <= 0.1,
        format!(
            "flagged {} = {flagged_events} events over {reflected} reflected steps (rate {rate:.3}); call-count law broken on {law_broken} steps",
            s.flagged
        ),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("oracle law", oracle_law),
        ("multi-branch vs single-path separation", branch_separation),
        ("noisy-agent calibration", noisy_calibration),
        ("taxonomy boundaries", taxonomy_boundaries),
        ("economics exactness", economics),
        ("sweep oracle", sweep_oracle),
        ("pareto oracle", pareto_oracle),
        ("determinism", determinism),
        ("parser goldens", parser_goldens),
        ("stats", stats),
        ("reflection accounting", reflection_accounting),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS [{:>2}] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{:>2}] {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
