//! Frozen outputs from an independent Python oracle: screen encodings, SoM
//! overlay pixels and dataset statistics.

mod common;

use proptest::prelude::*;
use replaybench::dataset::compute_stats;
use replaybench::synth::{synth_tasks, SynthSpec};

use common::golden;

#[test]
fn encodings_match_goldens() {
    assert_eq!(golden::check_encodings(), 38);
}

#[test]
fn som_overlay_matches_goldens() {
    assert_eq!(golden::check_overlays(), 38);
}

#[test]
fn ui_counts_agree_with_the_list_filter() {
    golden::check_ui_counts();
}

#[test]
fn stats_match_golden() {
    golden::check_stats();
}

proptest! {
    #[test]
    fn avg_actions_identity(n_tasks in 1usize..12, min in 1usize..6, extra in 0usize..6,
                            elements in 1usize..8, alternatives in 0usize..6, seed in any::<u64>()) {
        let spec = SynthSpec { n_tasks, min_steps: min, max_steps: min + extra, elements_per_screen: elements, alternatives, seed };
        let tasks = synth_tasks(&spec);
        let stats = compute_stats(&tasks).unwrap();
        prop_assert!(golden::identity_holds(&stats));
        let actions: usize = tasks.iter().map(|t| t.n_annotated_actions()).sum();
        prop_assert_eq!(stats.n_annotated_actions, actions);
    }
}
