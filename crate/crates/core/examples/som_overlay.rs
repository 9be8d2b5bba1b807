//! Draw set-of-mark boxes and indexes on a screenshot. Set SOM_OUT to keep
//! the PNG; otherwise it goes to a temporary directory.

use std::path::PathBuf;

use replaybench::screen::{overlay_som, parse_a11y, UiElementList};

pub fn main() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/screens");
    let tree = parse_a11y(&std::fs::read(dir.join("notes_home.xml")).unwrap()).unwrap();
    let list = UiElementList::from_tree(&tree);
    let shot = image::open(dir.join("notes_home.png")).unwrap().to_rgba8();

    // Models often get a downscaled image; the marks follow the scale.
    let small = image::imageops::resize(&shot, shot.width() / 2, shot.height() / 2, image::imageops::FilterType::Triangle);
    let marked = overlay_som(&small, &list, 0.5).unwrap();

    let tmp = tempfile::tempdir().unwrap();
    let out = std::env::var_os("SOM_OUT").map(PathBuf::from).unwrap_or_else(|| tmp.path().join("som.png"));
    marked.save(&out).unwrap();
    println!("{} marks on a {}x{} image -> {}", list.elements.len(), marked.width(), marked.height(), out.display());
    for e in &list.elements {
        let label = e.label();
        println!("  [{}] {} {:?}", e.index, e.class_name, label);
    }
}
