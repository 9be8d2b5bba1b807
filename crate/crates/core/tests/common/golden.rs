//! Checks against frozen outputs of an independent Python oracle: screen
//! encodings, SoM overlay pixels and dataset statistics.

use std::collections::{BTreeMap, HashSet};

use replaybench::dataset::{compute_stats, DatasetStats};
use replaybench::screen::{encode_html, encode_list, overlay_som, parse_a11y, IndexMap, UiElementList};
use serde::Deserialize;
use sha2::{Digest, Sha256};

#[derive(Deserialize)]
struct ScreenGolden {
    a11y: String,
    screenshot: String,
    html: String,
    html_ids: Vec<(usize, String)>,
    list: String,
    list_ids: Vec<(usize, String)>,
    som_sha256: String,
}

fn goldens() -> BTreeMap<String, ScreenGolden> {
    let text = std::fs::read_to_string(super::fixture_dir().join("goldens/screens.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn ids(map: &IndexMap) -> Vec<(usize, String)> {
    map.iter().map(|(i, id)| (i, id.as_str().to_owned())).collect()
}

fn assert_bijective(name: &str, map: &IndexMap) {
    let mut seen = HashSet::new();
    for (i, (index, id)) in map.iter().enumerate() {
        assert_eq!(index, i, "{name}: indexes are dense from 0");
        assert!(seen.insert(id.clone()), "{name}: {id} listed twice");
        assert_eq!(map.presentation(id), Some(index), "{name}: inverse of {id}");
        assert_eq!(map.canonical(index), Some(id), "{name}: forward of {index}");
    }
    assert_eq!(map.canonical(map.len()), None);
}

/// Returns the number of screens checked.
pub fn check_encodings() -> usize {
    let all = goldens();
    assert_eq!(all.len(), 38);
    for (name, g) in &all {
        let xml = std::fs::read(super::fixture_dir().join(&g.a11y)).unwrap();
        let tree = parse_a11y(&xml).unwrap();
        let (html, html_map) = encode_html(&tree);
        assert_eq!(html, g.html, "{name}: html");
        assert_eq!(ids(&html_map), g.html_ids, "{name}: html ids");
        let (list, list_map) = encode_list(&tree);
        assert_eq!(list, g.list, "{name}: list");
        assert_eq!(ids(&list_map), g.list_ids, "{name}: list ids");
        assert_bijective(name, &html_map);
        assert_bijective(name, &list_map);
    }
    all.len()
}

pub fn check_overlays() -> usize {
    let all = goldens();
    for (name, g) in &all {
        let xml = std::fs::read(super::fixture_dir().join(&g.a11y)).unwrap();
        let png = std::fs::read(super::fixture_dir().join(&g.screenshot)).unwrap();
        let list = UiElementList::from_tree(&parse_a11y(&xml).unwrap());
        let img = image::load_from_memory(&png).unwrap().to_rgba8();
        let out = overlay_som(&img, &list, 1.0).unwrap();
        assert_eq!(hex::encode(Sha256::digest(out.as_raw())), g.som_sha256, "{name}: overlay pixels");
    }
    all.len()
}

pub fn check_ui_counts() {
    for task in super::fixtures() {
        for step in &task.steps {
            let tree = parse_a11y(&std::fs::read(task.a11y_path(step)).unwrap()).unwrap();
            assert_eq!(Some(tree.listed_count() as u32), step.ui_count, "{} step {}", task.task_id, step.index);
        }
    }
}

#[derive(Deserialize)]
struct ExpectedStats {
    n_apps: usize,
    n_tasks: usize,
    n_screens: usize,
    n_annotated_actions: usize,
    avg_steps: f64,
    avg_uis: f64,
    avg_actions_per_step: f64,
    taxonomy_histogram: Vec<serde_json::Value>,
}

pub fn check_stats() {
    let text = std::fs::read_to_string(super::fixture_dir().join("expected_stats.json")).unwrap();
    let want: ExpectedStats = serde_json::from_str(&text).unwrap();
    let got = compute_stats(&super::fixtures()).unwrap();
    assert_eq!(got.n_apps, want.n_apps);
    assert_eq!(got.n_tasks, want.n_tasks);
    assert_eq!(got.n_screens, want.n_screens);
    assert_eq!(got.n_annotated_actions, want.n_annotated_actions);
    assert!((got.avg_steps - want.avg_steps).abs() < 1e-12);
    assert!((got.avg_uis - want.avg_uis).abs() < 1e-12);
    assert!((got.avg_actions_per_step - want.avg_actions_per_step).abs() < 1e-12);
    let cells = |v: Vec<serde_json::Value>| -> BTreeMap<(String, String), u64> {
        v.into_iter()
            .map(|c| {
                let key = (c["difficulty"].as_str().unwrap().to_owned(), c["complexity"].as_str().unwrap().to_owned());
                (key, c["count"].as_u64().unwrap())
            })
            .collect()
    };
    let hist = serde_json::to_value(&got.taxonomy_histogram).unwrap();
    let got_cells = cells(hist.as_array().unwrap().clone());
    assert_eq!(got_cells.len(), got.taxonomy_histogram.len(), "one entry per cell");
    assert_eq!(got_cells, cells(want.taxonomy_histogram));
    assert_eq!(got_cells.values().sum::<u64>(), got.n_tasks as u64);
}

/// avg_actions_per_step · n_screens = n_annotated_actions, and likewise for
/// avg_steps.
pub fn identity_holds(stats: &DatasetStats) -> bool {
    let lhs = stats.avg_actions_per_step * stats.n_screens as f64;
    (lhs - stats.n_annotated_actions as f64).abs() < 1e-9 * stats.n_annotated_actions.max(1) as f64
        && (stats.avg_steps * stats.n_tasks as f64 - stats.n_screens as f64).abs() < 1e-9 * stats.n_screens as f64
}
