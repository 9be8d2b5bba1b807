//! Replay the fixture dataset with an agent that always answers the default
//! action, then with one that errs 20% of the time, and print both reports.

use std::path::PathBuf;
use std::sync::Arc;

use replaybench::agent::{AgentConfig, MockPolicy, ModularAgent, ReplayMockClient};
use replaybench::eval::{evaluate_run, render_report_table, EvalMode, EvalSettings};
use replaybench::load_dataset;

pub fn main() {
    let tasks = load_dataset(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/dataset")).unwrap();
    let config = AgentConfig::simplest("gpt-4.1");
    let mut settings = EvalSettings::new(EvalMode::MultiBranch);
    settings.n_runs = 3;
    settings.workers = 4;

    for (label, policy) in [("oracle", MockPolicy::Oracle), ("noisy 0.2", MockPolicy::Noisy { p: 0.2 })] {
        let client = Arc::new(ReplayMockClient::new(policy, 7));
        let report = evaluate_run(
            &tasks,
            |_, _| Box::new(ModularAgent::new(config.clone(), client.clone())),
            &settings,
            None,
        )
        .unwrap();
        println!("{}", render_report_table(label, &report));
        if let Some(f) = report.fidelity {
            println!("agreement with human success labels: {:.1}%\n", f * 100.0);
        }
    }
}
