//! How much single-path scoring underestimates an agent that takes valid
//! but non-default routes. The same predictions are scored both ways.

use std::sync::Arc;

use replaybench::agent::{AgentConfig, MockPolicy, ModularAgent, ReplayMockClient};
use replaybench::eval::{evaluate_run, EvalMode, EvalSettings};
use replaybench::synth::{write_dataset, SynthSpec};

pub fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = SynthSpec { n_tasks: 10, min_steps: 3, max_steps: 7, elements_per_screen: 5, alternatives: 2, seed: 1 };
    let tasks = write_dataset(tmp.path(), &spec).unwrap();
    let config = AgentConfig::simplest("gpt-4.1");

    for policy in [MockPolicy::Oracle, MockPolicy::AltPath, MockPolicy::Noisy { p: 0.1 }] {
        let client = Arc::new(ReplayMockClient::new(policy, 3));
        let mut row = Vec::new();
        for mode in [EvalMode::MultiBranch, EvalMode::SinglePath] {
            let report = evaluate_run(
                &tasks,
                |_, _| Box::new(ModularAgent::new(config.clone(), client.clone())),
                &EvalSettings::new(mode),
                None,
            )
            .unwrap();
            row.push((report.action_accuracy, report.tsr));
        }
        let gap = (row[0].1 - row[1].1) * 100.0;
        println!(
            "{policy:?}: multi-branch A.Acc {:.1}% TSR {:.1}% | single-path A.Acc {:.1}% TSR {:.1}% | gap {gap:.1} pp",
            row[0].0 * 100.0,
            row[0].1 * 100.0,
            row[1].0 * 100.0,
            row[1].1 * 100.0
        );
    }
}
