//! Generate a synthetic dataset on disk, validate it, and print the
//! statistics table next to the fixture set's.

use std::path::PathBuf;

use replaybench::dataset::{compute_stats, validate_dataset};
use replaybench::load_dataset;
use replaybench::synth::{write_dataset, SynthSpec};

pub fn main() {
    let tmp = tempfile::tempdir().unwrap();
    write_dataset(tmp.path(), &SynthSpec::small(4)).unwrap();
    let report = validate_dataset(tmp.path()).unwrap();
    println!("synthetic: {} task(s), {} violation(s)", report.tasks.len(), report.violations.len());
    print!("{}", compute_stats(&report.tasks).unwrap().render_table());

    let fixtures = load_dataset(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/dataset")).unwrap();
    println!("\nfixtures:");
    print!("{}", compute_stats(&fixtures).unwrap().render_table());
}
