//! Multi-branch dataset schema, loading, taxonomy and statistics.
//!
//! On disk a dataset is a directory with a `manifest.json` listing task
//! directories; each task directory holds `task.json`, `screenshots/NNN.png`
//! and `a11y/NNN.xml`.

mod action;
mod load;
mod stats;
mod taxonomy;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use action::{Action, ActionKind, ActionShapeError, Direction, ElementId, Prediction};
pub use load::{
    load_dataset, save_task, validate_dataset, write_manifest, LoadError, Manifest, ValidationReport,
    Violation, ViolationKind, MANIFEST_FILE, TASK_FILE,
};
pub(crate) use load::write_atomic;
pub use stats::{compute_stats, DatasetStats, StatsError, TaxonomyCount};
pub use taxonomy::{classify_task, complexity_for, difficulty_for, Complexity, Difficulty, TaskClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    SourceDataset,
    LlmCandidate,
    HumanAdded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskSource {
    Llamatouch,
    Mobilegpt,
    Metagui,
    AndroidworldStatic,
    Custom,
}

/// One member of a step's valid-action set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedAction {
    pub is_default: bool,
    pub provenance: Provenance,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub text_alternatives: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub app_aliases: Vec<String>,
}

impl AnnotatedAction {
    pub fn new(action: Action, is_default: bool, provenance: Provenance) -> Self {
        Self {
            is_default,
            provenance,
            action,
            text_alternatives: Vec::new(),
            app_aliases: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub index: usize,
    /// Relative to the task directory.
    pub screenshot: PathBuf,
    /// Relative to the task directory.
    pub a11y: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ui_count: Option<u32>,
    pub valid_actions: Vec<AnnotatedAction>,
}

impl StepRecord {
    /// The single default action; panics on a record that skipped validation.
    pub fn default_action(&self) -> &AnnotatedAction {
        self.valid_actions
            .iter()
            .find(|a| a.is_default)
            .expect("validated step has a default action")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskRecord {
    pub task_id: String,
    pub goal: String,
    pub app: String,
    pub source: TaskSource,
    pub starts_from_launcher: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_verdicts: Option<Vec<bool>>,
    pub steps: Vec<StepRecord>,
    /// Directory the task was loaded from; file references resolve against it.
    #[serde(skip)]
    pub dir: PathBuf,
}

impl TaskRecord {
    pub fn screenshot_path(&self, step: &StepRecord) -> PathBuf {
        self.dir.join(&step.screenshot)
    }

    pub fn a11y_path(&self, step: &StepRecord) -> PathBuf {
        self.dir.join(&step.a11y)
    }

    pub fn with_dir(mut self, dir: impl AsRef<Path>) -> Self {
        self.dir = dir.as_ref().to_path_buf();
        self
    }

    pub fn n_annotated_actions(&self) -> usize {
        self.steps.iter().map(|s| s.valid_actions.len()).sum()
    }
}
