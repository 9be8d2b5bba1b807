use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ActionKind, StepRecord, TaskRecord};
use crate::screen::{parse_a11y, UiTree};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TASK_FILE: &str = "task.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    /// Task directories, relative to the dataset root.
    pub tasks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    Schema(String),
    DuplicateTask,
    EmptySteps,
    StepIndex { expected: usize, found: usize },
    DanglingReference(PathBuf),
    A11yParse(String),
    DefaultCount(usize),
    EmptyValidSet,
    InvalidAction(String),
    UnresolvedElement(String),
    UiCountMismatch { cached: u32, counted: u32 },
    MissingFinish,
    MissingOpenApp,
}

/// One dataset problem, located by task and (when applicable) step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub task_id: String,
    pub step: Option<usize>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "task {}", self.task_id)?;
        if let Some(step) = self.step {
            write!(f, " step {step}")?;
        }
        f.write_str(": ")?;
        match &self.kind {
            ViolationKind::Schema(detail) => write!(f, "schema violation: {detail}"),
            ViolationKind::DuplicateTask => f.write_str("task id listed more than once"),
            ViolationKind::EmptySteps => f.write_str("task has no steps"),
            ViolationKind::StepIndex { expected, found } => {
                write!(f, "step index {found} out of order (expected {expected})")
            }
            ViolationKind::DanglingReference(path) => {
                write!(f, "dangling file reference {}", path.display())
            }
            ViolationKind::A11yParse(detail) => write!(f, "unreadable a11y dump: {detail}"),
            ViolationKind::DefaultCount(0) => f.write_str("no default action"),
            ViolationKind::DefaultCount(n) => write!(f, "{n} default actions (multi-default)"),
            ViolationKind::EmptyValidSet => f.write_str("empty valid-action set"),
            ViolationKind::InvalidAction(detail) => write!(f, "invalid action: {detail}"),
            ViolationKind::UnresolvedElement(id) => {
                write!(f, "element id {id:?} not present in the a11y dump")
            }
            ViolationKind::UiCountMismatch { cached, counted } => {
                write!(f, "cached ui_count {cached} but the dump lists {counted} elements")
            }
            ViolationKind::MissingFinish => f.write_str("final step has no finish action"),
            ViolationKind::MissingOpenApp => {
                f.write_str("task starts from the launcher but step 0 has no open app action")
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {}: {detail}", path.display())]
    Manifest { path: PathBuf, detail: String },
    #[error("{} dataset violation(s); first: {}", .0.len(), .0[0])]
    Invalid(Vec<Violation>),
}

/// Outcome of validating a dataset root: the tasks that passed and every
/// violation found in the ones that did not.
#[derive(Debug, Default)]
pub struct ValidationReport {
    pub tasks: Vec<TaskRecord>,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Loads every task listed in the manifest, failing on any violation.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<Vec<TaskRecord>, LoadError> {
    let report = validate_dataset(root)?;
    if report.violations.is_empty() {
        Ok(report.tasks)
    } else {
        Err(LoadError::Invalid(report.violations))
    }
}

/// Validates every listed task, collecting all violations instead of
/// stopping at the first. Only manifest-level failures are returned as errors.
pub fn validate_dataset(root: impl AsRef<Path>) -> Result<ValidationReport, LoadError> {
    let root = root.as_ref();
    let manifest_path = root.join(MANIFEST_FILE);
    let raw = fs::read_to_string(&manifest_path).map_err(|source| LoadError::Io {
        path: manifest_path.clone(),
        source,
    })?;
    let manifest: Manifest = serde_json::from_str(&raw).map_err(|e| LoadError::Manifest {
        path: manifest_path.clone(),
        detail: e.to_string(),
    })?;

    let mut report = ValidationReport::default();
    let mut seen = HashSet::new();
    for entry in &manifest.tasks {
        if !seen.insert(entry.clone()) {
            report.violations.push(Violation {
                task_id: entry.clone(),
                step: None,
                kind: ViolationKind::DuplicateTask,
            });
            continue;
        }
        let dir = root.join(entry);
        match load_task(&dir, entry) {
            Ok(task) => report.tasks.push(task),
            Err(mut violations) => report.violations.append(&mut violations),
        }
    }
    Ok(report)
}

fn load_task(dir: &Path, entry: &str) -> Result<TaskRecord, Vec<Violation>> {
    let task_path = dir.join(TASK_FILE);
    let at = |step: Option<usize>, kind| Violation {
        task_id: entry.to_owned(),
        step,
        kind,
    };
    let raw = fs::read_to_string(&task_path)
        .map_err(|_| vec![at(None, ViolationKind::DanglingReference(task_path.clone()))])?;
    let mut task: TaskRecord = serde_json::from_str(&raw)
        .map_err(|e| vec![at(None, ViolationKind::Schema(e.to_string()))])?;
    task.dir = dir.to_path_buf();

    let mut violations = Vec::new();
    let id = task.task_id.clone();
    let mut push = |step: Option<usize>, kind: ViolationKind| {
        violations.push(Violation {
            task_id: id.clone(),
            step,
            kind,
        })
    };

    if task.steps.is_empty() {
        push(None, ViolationKind::EmptySteps);
    }
    for (position, step) in task.steps.iter_mut().enumerate() {
        if step.index != position {
            push(
                Some(step.index),
                ViolationKind::StepIndex {
                    expected: position,
                    found: step.index,
                },
            );
        }
        for kind in check_step_shape(step) {
            push(Some(step.index), kind);
        }
        let shot = dir.join(&step.screenshot);
        if !shot.is_file() {
            push(Some(step.index), ViolationKind::DanglingReference(shot));
        }
        let dump = dir.join(&step.a11y);
        let tree = match fs::read(&dump) {
            Ok(bytes) => match parse_a11y(&bytes) {
                Ok(tree) => Some(tree),
                Err(e) => {
                    push(Some(step.index), ViolationKind::A11yParse(e.to_string()));
                    None
                }
            },
            Err(_) => {
                push(Some(step.index), ViolationKind::DanglingReference(dump));
                None
            }
        };
        if let Some(tree) = tree {
            for kind in resolve_targets(step, &tree) {
                push(Some(step.index), kind);
            }
        }
    }
    if let Some(last) = task.steps.last() {
        if !last
            .valid_actions
            .iter()
            .any(|a| a.action.kind() == ActionKind::Finish)
        {
            push(Some(last.index), ViolationKind::MissingFinish);
        }
    }
    if task.starts_from_launcher {
        if let Some(first) = task.steps.first() {
            if !first
                .valid_actions
                .iter()
                .any(|a| a.action.kind() == ActionKind::OpenApp)
            {
                push(Some(first.index), ViolationKind::MissingOpenApp);
            }
        }
    }

    if violations.is_empty() {
        Ok(task)
    } else {
        Err(violations)
    }
}

fn check_step_shape(step: &StepRecord) -> Vec<ViolationKind> {
    let mut out = Vec::new();
    if step.valid_actions.is_empty() {
        out.push(ViolationKind::EmptyValidSet);
        return out;
    }
    let defaults = step.valid_actions.iter().filter(|a| a.is_default).count();
    if defaults != 1 {
        out.push(ViolationKind::DefaultCount(defaults));
    }
    for annotated in &step.valid_actions {
        let kind = annotated.action.kind();
        if !annotated.text_alternatives.is_empty() && kind != ActionKind::Input {
            out.push(ViolationKind::InvalidAction(format!(
                "text_alternatives on a {} action",
                kind.wire_name()
            )));
        }
        if annotated
            .text_alternatives
            .iter()
            .any(|alt| crate::eval::normalize_text(alt).is_empty())
        {
            out.push(ViolationKind::InvalidAction(
                "empty text alternative".to_owned(),
            ));
        }
        if !annotated.app_aliases.is_empty() && kind != ActionKind::OpenApp {
            out.push(ViolationKind::InvalidAction(format!(
                "app_aliases on a {} action",
                kind.wire_name()
            )));
        }
    }
    out
}

/// Checks click/input targets against the dump and fills a missing
/// `ui_count` from the list filter.
fn resolve_targets(step: &mut StepRecord, tree: &UiTree) -> Vec<ViolationKind> {
    let ids: BTreeSet<&str> = tree.nodes().map(|n| n.canonical_id.as_str()).collect();
    let mut out = Vec::new();
    for annotated in &step.valid_actions {
        if let Some(target) = annotated.action.target() {
            if !ids.contains(target.as_str()) {
                out.push(ViolationKind::UnresolvedElement(target.0.clone()));
            }
        }
    }
    let counted = tree.listed_count() as u32;
    match step.ui_count {
        Some(cached) if cached != counted => {
            out.push(ViolationKind::UiCountMismatch { cached, counted })
        }
        Some(_) => {}
        None => step.ui_count = Some(counted),
    }
    out
}

/// Writes `task.json` into `task.dir` atomically (temp file + rename).
pub fn save_task(task: &TaskRecord) -> std::io::Result<()> {
    let body = serde_json::to_string_pretty(task).map_err(std::io::Error::other)?;
    write_atomic(&task.dir.join(TASK_FILE), body.as_bytes())
}

pub fn write_manifest(root: &Path, manifest: &Manifest) -> std::io::Result<()> {
    let body = serde_json::to_string_pretty(manifest).map_err(std::io::Error::other)?;
    write_atomic(&root.join(MANIFEST_FILE), body.as_bytes())
}

pub(crate) fn write_atomic(path: &Path, body: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(body)?;
        if !body.ends_with(b"\n") {
            file.write_all(b"\n")?;
        }
        file.sync_all()?;
    }
    fs::rename(tmp, path)
}
