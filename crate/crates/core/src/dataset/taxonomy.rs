use serde::{Deserialize, Serialize};

use super::TaskRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Complexity {
    Simple,
    Moderate,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaskClass {
    pub difficulty: Difficulty,
    pub complexity: Complexity,
}

/// ≤4 steps easy, 5–11 medium, ≥12 hard.
pub fn difficulty_for(steps: usize) -> Difficulty {
    match steps {
        0..=4 => Difficulty::Easy,
        5..=11 => Difficulty::Medium,
        _ => Difficulty::Hard,
    }
}

/// Mean UI elements per screen: ≤25 simple, ≤40 moderate, above that complex.
pub fn complexity_for(mean_ui: f64) -> Complexity {
    if mean_ui <= 25.0 {
        Complexity::Simple
    } else if mean_ui <= 40.0 {
        Complexity::Moderate
    } else {
        Complexity::Complex
    }
}

/// Classifies a loaded task. Steps without a `ui_count` count as zero
/// elements; [`crate::dataset::load_dataset`] always fills them.
pub fn classify_task(task: &TaskRecord) -> TaskClass {
    let steps = task.steps.len();
    let total: u64 = task
        .steps
        .iter()
        .map(|s| u64::from(s.ui_count.unwrap_or(0)))
        .sum();
    let mean = if steps == 0 { 0.0 } else { total as f64 / steps as f64 };
    TaskClass {
        difficulty: difficulty_for(steps),
        complexity: complexity_for(mean),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn boundaries_are_inclusive() {
        assert_eq!(difficulty_for(4), Difficulty::Easy);
        assert_eq!(difficulty_for(5), Difficulty::Medium);
        assert_eq!(difficulty_for(11), Difficulty::Medium);
        assert_eq!(difficulty_for(12), Difficulty::Hard);
        assert_eq!(complexity_for(25.0), Complexity::Simple);
        assert_eq!(complexity_for(25.5), Complexity::Moderate);
        assert_eq!(complexity_for(40.0), Complexity::Moderate);
        assert_eq!(complexity_for(40.5), Complexity::Complex);
    }

    proptest! {
        #[test]
        fn difficulty_monotone(steps in 0usize..40) {
            prop_assert!(difficulty_for(steps) <= difficulty_for(steps + 1));
        }

        #[test]
        fn complexity_monotone(mean in 0.0f64..80.0, bump in 0.0f64..10.0) {
            prop_assert!(complexity_for(mean) <= complexity_for(mean + bump));
        }
    }
}
