#![allow(dead_code)]

pub mod golden;

use std::path::PathBuf;

use replaybench::{load_dataset, TaskRecord};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn dataset_dir() -> PathBuf {
    fixture_dir().join("dataset")
}

pub fn fixtures() -> Vec<TaskRecord> {
    load_dataset(dataset_dir()).unwrap()
}

/// Copies the fixture dataset somewhere writable.
pub fn scratch_dataset() -> (tempfile::TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let dst = tmp.path().join("dataset");
    copy_dir(&dataset_dir(), &dst);
    (tmp, dst)
}

fn copy_dir(src: &std::path::Path, dst: &std::path::Path) {
    std::fs::create_dir_all(dst).unwrap();
    for entry in std::fs::read_dir(src).unwrap() {
        let entry = entry.unwrap();
        let to = dst.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &to);
        } else {
            std::fs::copy(entry.path(), &to).unwrap();
        }
    }
}
