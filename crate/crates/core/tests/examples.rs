//! Every example must build and run to completion.

#[path = "../examples/parse_screen.rs"]
mod parse_screen;

#[test]
fn parse_screen_runs() {
    parse_screen::main();
}

#[path = "../examples/som_overlay.rs"]
mod som_overlay;

#[test]
fn som_overlay_runs() {
    som_overlay::main();
}

#[path = "../examples/replay_oracle.rs"]
mod replay_oracle;

#[test]
fn replay_oracle_runs() {
    replay_oracle::main();
}

#[path = "../examples/branch_vs_single.rs"]
mod branch_vs_single;

#[test]
fn branch_vs_single_runs() {
    branch_vs_single::main();
}

#[path = "../examples/cost_latency.rs"]
mod cost_latency;

#[test]
fn cost_latency_runs() {
    cost_latency::main();
}

#[path = "../examples/incremental_sweep.rs"]
mod incremental_sweep;

#[test]
fn incremental_sweep_runs() {
    incremental_sweep::main();
}

#[path = "../examples/candidate_votes.rs"]
mod candidate_votes;

#[test]
fn candidate_votes_runs() {
    candidate_votes::main();
}


#[test]
fn annotation_service_runs() {
    annotation_service::main();
}

#[path = "../examples/end_to_end_adapter.rs"]
mod end_to_end_adapter;

#[test]
fn end_to_end_adapter_runs() {
    end_to_end_adapter::main();
}

#[path = "../examples/dataset_stats.rs"]
mod dataset_stats;

#[test]
fn dataset_stats_runs() {
    dataset_stats::main();
}

#[path = "../examples/cli_pipeline.rs"]
mod cli_pipeline;

#[test]
fn cli_pipeline_runs() {
    cli_pipeline::main();
}
