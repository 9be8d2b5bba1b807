//! Propose extra valid actions with a (mock) generator model, then settle
//! them with a three-annotator majority vote.

use std::collections::BTreeMap;
use std::path::PathBuf;

use replaybench::agent::{MockPolicy, ReplayMockClient};
use replaybench::annotation::{generate_candidates, resolve_votes, AnnotatorDecision, Vote};
use replaybench::dataset::{AnnotatedAction, Provenance};
use replaybench::load_dataset;

pub fn main() {
    let tasks = load_dataset(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/dataset")).unwrap();
    let task = &tasks[0];
    let step = &task.steps[1];
    let client = ReplayMockClient::new(MockPolicy::Random, 5);
    let (set, exchange) = generate_candidates(task, step, &client, "gpt-4.1").unwrap();
    println!("{}: {} candidate(s), {} dropped, {} tokens in", task.task_id, set.candidates.len(), set.dropped, exchange.tokens_in);

    let default = step.default_action().clone();
    let pool: Vec<AnnotatedAction> = set
        .candidates
        .iter()
        .filter(|a| **a != default.action)
        .map(|a| AnnotatedAction::new(a.clone(), false, Provenance::LlmCandidate))
        .collect();

    // Annotator i keeps every candidate except the i-th.
    let decisions: Vec<AnnotatorDecision> = (0..3)
        .map(|i| AnnotatorDecision {
            annotator_id: format!("annotator-{i}"),
            task_id: task.task_id.clone(),
            step: step.index,
            verdicts: pool
                .iter()
                .enumerate()
                .map(|(j, a)| (a.action.key(), if i == j { Vote::Drop } else { Vote::Keep }))
                .collect::<BTreeMap<_, _>>(),
            additions: Vec::new(),
            version: 0,
        })
        .collect();
    let resolution = resolve_votes(&default, &pool, &decisions, 3, 2).unwrap();
    for t in &resolution.vote_tally {
        println!("  {} {}/{} {}", if t.kept { "keep" } else { "drop" }, t.keeps, t.of, t.action);
    }
    println!("valid set after the vote: {} action(s)", resolution.final_actions.len());
}
