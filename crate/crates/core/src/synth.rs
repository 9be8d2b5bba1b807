//! Synthetic datasets for calibration runs, property tests and examples.
//!
//! Screens are a column of buttons over a flat background. Every step but
//! the last has a click default; the last step's default is finish.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{Rgba, RgbaImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{
    save_task, write_manifest, Action, AnnotatedAction, Direction, ElementId, Manifest, Provenance, StepRecord, TaskRecord, TaskSource,
};

const SCREEN_W: u32 = 360;
const SCREEN_H: u32 = 640;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthSpec {
    pub n_tasks: usize,
    /// Inclusive range of steps per task (finish step included).
    pub min_steps: usize,
    pub max_steps: usize,
    pub elements_per_screen: usize,
    /// Non-default valid actions per step.
    pub alternatives: usize,
    pub seed: u64,
}

impl SynthSpec {
    /// About 540 steps: 60 tasks of 9 steps, two alternatives each.
    pub fn calibration(seed: u64) -> Self {
        Self {
            n_tasks: 60,
            min_steps: 9,
            max_steps: 9,
            elements_per_screen: 6,
            alternatives: 2,
            seed,
        }
    }

    pub fn small(seed: u64) -> Self {
        Self {
            n_tasks: 4,
            min_steps: 2,
            max_steps: 5,
            elements_per_screen: 4,
            alternatives: 1,
            seed,
        }
    }
}

fn button_id(k: usize) -> ElementId {
    ElementId::new(format!("com.example.synth:id/button_{k}"))
}

/// Accessibility dump with `n` clickable buttons stacked vertically.
pub fn screen_xml(n: usize, title: &str) -> String {
    let mut xml = String::from("<?xml version='1.0' encoding='UTF-8' standalone='yes' ?>\n<hierarchy rotation=\"0\">\n");
    xml.push_str(&format!(
        "  <node index=\"0\" class=\"android.widget.FrameLayout\" resource-id=\"\" text=\"\" content-desc=\"\" clickable=\"false\" enabled=\"true\" scrollable=\"false\" bounds=\"[0,0][{SCREEN_W},{SCREEN_H}]\">\n"
    ));
    xml.push_str(&format!(
        "    <node index=\"0\" class=\"android.widget.TextView\" resource-id=\"com.example.synth:id/title\" text=\"{title}\" content-desc=\"\" clickable=\"false\" enabled=\"true\" scrollable=\"false\" bounds=\"[16,16][344,56]\" />\n"
    ));
    for k in 0..n {
        let top = 72 + k as u32 * 56;
        xml.push_str(&format!(
            "    <node index=\"{}\" class=\"android.widget.Button\" resource-id=\"com.example.synth:id/button_{k}\" text=\"Option {k}\" content-desc=\"\" clickable=\"true\" enabled=\"true\" scrollable=\"false\" bounds=\"[16,{top}][344,{}]\" />\n",
            k + 1,
            top + 48
        ));
    }
    xml.push_str("  </node>\n</hierarchy>\n");
    xml
}

/// Matching screenshot: one grey bar per button.
pub fn screen_png(n: usize) -> Vec<u8> {
    let mut img = RgbaImage::from_pixel(SCREEN_W, SCREEN_H, Rgba([250, 250, 250, 255]));
    for k in 0..n as u32 {
        let top = 72 + k * 56;
        for y in top + 4..top + 44 {
            for x in 20..340 {
                img.put_pixel(x, y, Rgba([120, 130, 200, 255]));
            }
        }
    }
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).expect("png encoding to memory");
    out.into_inner()
}

fn step_actions(rng: &mut ChaCha8Rng, spec: &SynthSpec, last: bool) -> Vec<AnnotatedAction> {
    let n = spec.elements_per_screen.max(1);
    let mut out = Vec::new();
    if last {
        out.push(AnnotatedAction::new(Action::finish(), true, Provenance::SourceDataset));
        if spec.alternatives > 0 {
            out.push(AnnotatedAction::new(Action::NavigateBack, false, Provenance::HumanAdded));
        }
        return out;
    }
    let default = rng.random_range(0..n);
    out.push(AnnotatedAction::new(
        Action::Click {
            target: button_id(default),
        },
        true,
        Provenance::SourceDataset,
    ));
    let mut k = default;
    for _ in 0..spec.alternatives.min(n - 1) {
        k = (k + 1) % n;
        out.push(AnnotatedAction::new(
            Action::Click { target: button_id(k) },
            false,
            Provenance::HumanAdded,
        ));
    }
    if spec.alternatives >= n {
        out.push(AnnotatedAction::new(
            Action::Scroll {
                direction: Direction::Up,
            },
            false,
            Provenance::LlmCandidate,
        ));
    }
    out
}

/// Builds the task records without touching the filesystem; `ui_count` is
/// filled, file references point to where [`write_dataset`] puts them.
pub fn synth_tasks(spec: &SynthSpec) -> Vec<TaskRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.n_tasks)
        .map(|t| {
            let steps = rng.random_range(spec.min_steps.max(1)..=spec.max_steps.max(spec.min_steps.max(1)));
            TaskRecord {
                task_id: format!("synth_{t:04}"),
                goal: format!("Reach screen {steps} of synthetic flow {t}"),
                app: format!("Synth{}", t % 3),
                source: TaskSource::Custom,
                starts_from_launcher: false,
                human_verdicts: None,
                steps: (0..steps)
                    .map(|s| StepRecord {
                        index: s,
                        screenshot: PathBuf::from("screen.png"),
                        a11y: PathBuf::from(format!("a11y/{s:03}.xml")),
                        ui_count: Some(spec.elements_per_screen as u32 + 1),
                        valid_actions: step_actions(&mut rng, spec, s + 1 == steps),
                    })
                    .collect(),
                dir: PathBuf::new(),
            }
        })
        .collect()
}

/// Writes a loadable dataset under `root` and returns the task records.
/// All steps of a task share one screenshot file.
pub fn write_dataset(root: &Path, spec: &SynthSpec) -> std::io::Result<Vec<TaskRecord>> {
    fs::create_dir_all(root)?;
    let png = screen_png(spec.elements_per_screen);
    let mut tasks = synth_tasks(spec);
    for task in &mut tasks {
        task.dir = root.join(&task.task_id);
        fs::create_dir_all(task.dir.join("a11y"))?;
        fs::write(task.dir.join("screen.png"), &png)?;
        for step in &task.steps {
            let title = format!("{} step {}", task.task_id, step.index);
            fs::write(task.dir.join(&step.a11y), screen_xml(spec.elements_per_screen, &title))?;
        }
        save_task(task)?;
    }
    write_manifest(
        root,
        &Manifest {
            tasks: tasks.iter().map(|t| t.task_id.clone()).collect(),
        },
    )?;
    Ok(tasks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::load_dataset;

    #[test]
    fn written_dataset_loads() {
        let dir = tempfile::tempdir().unwrap();
        let written = write_dataset(dir.path(), &SynthSpec::small(3)).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(loaded.len(), written.len());
        for (a, b) in loaded.iter().zip(&written) {
            assert_eq!(a.steps, b.steps);
        }
    }

    #[test]
    fn calibration_size() {
        let tasks = synth_tasks(&SynthSpec::calibration(1));
        assert!(tasks.iter().map(|t| t.steps.len()).sum::<usize>() >= 500);
    }
}
