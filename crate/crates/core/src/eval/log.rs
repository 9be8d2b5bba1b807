use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::report::RunReport;
use crate::agent::{AgentStep, AgentTurn, EndToEndAgent};
use crate::dataset::Prediction;

/// One line of `predictions.ndjson`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub task_id: String,
    pub run: usize,
    pub step: usize,
    pub prompt_hash: Option<String>,
    pub raw_response: Option<String>,
    pub predicted: Prediction,
    pub matched: bool,
}

pub fn prediction_log(report: &RunReport) -> Vec<PredictionRecord> {
    report
        .results
        .iter()
        .flat_map(|r| {
            r.outcomes.iter().map(move |o| PredictionRecord {
                task_id: r.task_id.clone(),
                run: r.run,
                step: o.step,
                prompt_hash: o.prompt_hash.clone(),
                raw_response: o.raw_response.clone(),
                predicted: o.predicted.clone(),
                matched: o.matched,
            })
        })
        .collect()
}

pub fn write_prediction_log<W: Write>(records: &[PredictionRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_prediction_log<R: BufRead>(input: R) -> std::io::Result<Vec<PredictionRecord>> {
    let mut records = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(std::io::Error::other)?);
    }
    Ok(records)
}

/// Replays logged predictions without any model call, e.g. to re-score a
/// run under another mode or policy.
#[derive(Debug, Clone, Default)]
pub struct ReplayAgent {
    by_step: BTreeMap<usize, Prediction>,
}

impl ReplayAgent {
    pub fn new(records: &[PredictionRecord], task_id: &str, run: usize) -> Self {
        Self {
            by_step: records
                .iter()
                .filter(|r| r.task_id == task_id && r.run == run)
                .map(|r| (r.step, r.predicted.clone()))
                .collect(),
        }
    }
}

impl EndToEndAgent for ReplayAgent {
    fn act(&mut self, step: &AgentStep<'_>) -> AgentTurn {
        match self.by_step.get(&step.step) {
            Some(prediction) => AgentTurn {
                prediction: prediction.clone(),
                ..AgentTurn::action(crate::dataset::Action::finish())
            },
            None => AgentTurn::failed(format!("no logged prediction for step {}", step.step)),
        }
    }
}
