//! Tune one module at a time against the fixture dataset with a noisy mock
//! model, then check the answer against the full grid.

use std::path::PathBuf;
use std::sync::Arc;

use replaybench::agent::{AgentConfig, MockPolicy, ModularAgent, ReplayMockClient, Role};
use replaybench::eval::{evaluate_run, EvalMode, EvalSettings};
use replaybench::load_dataset;
use replaybench::screen::ParserTechnique;
use replaybench::sweep::{emit_table, full_grid, grid_argmax, incremental_sweep, Choice, Slot, Summary, SweepPlan};

pub fn main() {
    let tasks = load_dataset(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/dataset")).unwrap();
    let mut base = AgentConfig::simplest("gpt-4.1");
    base.model_roles.insert(Role::Summarizer, "gpt-4.1-mini".into());
    let mut plan = SweepPlan::standard(base, Vec::new());
    // No few-shot exemplars here, and only the text parsers.
    plan.candidates.get_mut(&Slot::Inference).unwrap().truncate(2);
    plan.candidates.insert(
        Slot::Parser,
        vec![Choice::Parser(ParserTechnique::A11yHtml), Choice::Parser(ParserTechnique::A11yList)],
    );

    let client = Arc::new(ReplayMockClient::new(MockPolicy::Noisy { p: 0.15 }, 11).with_reflector_flag_rate(0.2));
    let evaluate = |config: &AgentConfig| -> Result<Summary, String> {
        let mut settings = EvalSettings::new(EvalMode::MultiBranch);
        settings.history = config.history;
        settings.n_runs = 2;
        settings.workers = 4;
        let report = evaluate_run(&tasks, |_, _| Box::new(ModularAgent::new(config.clone(), client.clone())), &settings, None)
            .map_err(|e| e.to_string())?;
        Ok(Summary::from(&report))
    };

    // The mock errs on the same steps whatever the configuration, so most
    // slots tie on TSR and the cheaper technique wins.
    let result = incremental_sweep(&plan, evaluate).unwrap();
    print!("{}", emit_table(&result));
    println!("chosen: {} after {} evaluations", result.final_config.label(), result.evaluations);

    let grid = full_grid(&plan, 64, evaluate).unwrap();
    let (best, summary) = grid_argmax(&plan, &grid).unwrap();
    println!("grid best of {}: {} (TSR {:.3})", grid.len(), best.label(), summary.tsr);
}
