use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{classify_task, Complexity, Difficulty, TaskRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyCount {
    pub difficulty: Difficulty,
    pub complexity: Complexity,
    pub count: usize,
}

/// Dataset-level statistics (the Avg. Steps / UIs / Actions columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_apps: usize,
    pub n_tasks: usize,
    pub n_screens: usize,
    pub n_annotated_actions: usize,
    pub avg_steps: f64,
    /// Mean list-filtered element count per screen.
    pub avg_uis: f64,
    pub avg_actions_per_step: f64,
    /// Non-empty (difficulty, complexity) cells in sorted order.
    pub taxonomy_histogram: Vec<TaxonomyCount>,
    pub apps: BTreeSet<String>,
    pub total_uis: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("no tasks to summarize")]
    Empty,
    #[error("task {task_id} step {step} has no ui_count")]
    MissingUiCount { task_id: String, step: usize },
}

pub fn compute_stats(tasks: &[TaskRecord]) -> Result<DatasetStats, StatsError> {
    if tasks.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut apps = BTreeSet::new();
    let mut n_screens = 0usize;
    let mut n_actions = 0usize;
    let mut total_uis = 0u64;
    let mut histogram: BTreeMap<(Difficulty, Complexity), usize> = BTreeMap::new();
    for task in tasks {
        apps.insert(task.app.clone());
        for step in &task.steps {
            let count = step.ui_count.ok_or_else(|| StatsError::MissingUiCount {
                task_id: task.task_id.clone(),
                step: step.index,
            })?;
            total_uis += u64::from(count);
            n_actions += step.valid_actions.len();
        }
        n_screens += task.steps.len();
        let class = classify_task(task);
        *histogram
            .entry((class.difficulty, class.complexity))
            .or_default() += 1;
    }
    Ok(DatasetStats::from_counts(
        apps,
        tasks.len(),
        n_screens,
        n_actions,
        total_uis,
        histogram,
    ))
}

impl DatasetStats {
    fn from_counts(
        apps: BTreeSet<String>,
        n_tasks: usize,
        n_screens: usize,
        n_annotated_actions: usize,
        total_uis: u64,
        histogram: BTreeMap<(Difficulty, Complexity), usize>,
    ) -> Self {
        let per_screen = |x: f64| if n_screens == 0 { 0.0 } else { x / n_screens as f64 };
        Self {
            n_apps: apps.len(),
            n_tasks,
            n_screens,
            n_annotated_actions,
            avg_steps: n_screens as f64 / n_tasks as f64,
            avg_uis: per_screen(total_uis as f64),
            avg_actions_per_step: per_screen(n_annotated_actions as f64),
            taxonomy_histogram: histogram
                .into_iter()
                .map(|((difficulty, complexity), count)| TaxonomyCount {
                    difficulty,
                    complexity,
                    count,
                })
                .collect(),
            apps,
            total_uis,
        }
    }

    /// Count-weighted combination of the statistics of two disjoint task lists.
    pub fn merge(&self, other: &DatasetStats) -> DatasetStats {
        let mut histogram: BTreeMap<(Difficulty, Complexity), usize> = BTreeMap::new();
        for cell in self.taxonomy_histogram.iter().chain(&other.taxonomy_histogram) {
            *histogram.entry((cell.difficulty, cell.complexity)).or_default() += cell.count;
        }
        DatasetStats::from_counts(
            self.apps.union(&other.apps).cloned().collect(),
            self.n_tasks + other.n_tasks,
            self.n_screens + other.n_screens,
            self.n_annotated_actions + other.n_annotated_actions,
            self.total_uis + other.total_uis,
            histogram,
        )
    }

    /// Aligned two-column text table.
    pub fn render_table(&self) -> String {
        let mut rows = vec![
            ("# Apps".to_owned(), self.n_apps.to_string()),
            ("# Tasks".to_owned(), self.n_tasks.to_string()),
            ("# Screens".to_owned(), self.n_screens.to_string()),
            ("# Annotated actions".to_owned(), self.n_annotated_actions.to_string()),
            ("Avg. steps".to_owned(), format!("{:.2}", self.avg_steps)),
            ("Avg. UIs".to_owned(), format!("{:.2}", self.avg_uis)),
            ("Avg. actions".to_owned(), format!("{:.2}", self.avg_actions_per_step)),
        ];
        for cell in &self.taxonomy_histogram {
            rows.push((
                format!("{:?}/{:?}", cell.difficulty, cell.complexity).to_lowercase(),
                cell.count.to_string(),
            ));
        }
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            out.push_str(&format!("{k:<width$}  {v:>8}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Action, AnnotatedAction, Provenance, StepRecord, TaskSource};

    fn task(id: &str, app: &str, sizes: &[usize], ui: u32) -> TaskRecord {
        TaskRecord {
            task_id: id.into(),
            goal: "g".into(),
            app: app.into(),
            source: TaskSource::Custom,
            starts_from_launcher: false,
            human_verdicts: None,
            steps: sizes
                .iter()
                .enumerate()
                .map(|(i, &n)| StepRecord {
                    index: i,
                    screenshot: "s.png".into(),
                    a11y: "a.xml".into(),
                    ui_count: Some(ui),
                    valid_actions: (0..n)
                        .map(|k| AnnotatedAction::new(Action::NavigateBack, k == 0, Provenance::HumanAdded))
                        .collect(),
                })
                .collect(),
            dir: Default::default(),
        }
    }

    #[test]
    fn two_step_arithmetic() {
        let stats = compute_stats(&[task("t", "A", &[2, 4], 10)]).unwrap();
        assert_eq!(stats.avg_actions_per_step, 3.0);
        assert_eq!(stats.avg_steps, 2.0);
        assert_eq!(stats.avg_uis, 10.0);
        assert_eq!(stats.n_annotated_actions, 6);
    }

    #[test]
    fn empty_and_missing_counts() {
        assert_eq!(compute_stats(&[]), Err(StatsError::Empty));
        let mut t = task("t", "A", &[1], 3);
        t.steps[0].ui_count = None;
        assert!(matches!(compute_stats(&[t]), Err(StatsError::MissingUiCount { .. })));
    }

    #[test]
    fn table_lists_histogram_cells() {
        let stats = compute_stats(&[task("t", "A", &[1, 1], 30)]).unwrap();
        let table = stats.render_table();
        assert!(table.contains("easy/moderate"));
        assert!(table.contains("Avg. actions"));
    }
}
