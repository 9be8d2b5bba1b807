//! The command line end to end, in process: validate, evaluate with a mock
//! model, and render the saved report against a baseline.

use std::path::PathBuf;

use replaybench::cli::run;

fn replaybench(args: &[&str]) -> i32 {
    let mut argv = vec!["replaybench"];
    argv.extend_from_slice(args);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(argv, &mut out, &mut err);
    print!("{}{}", String::from_utf8_lossy(&out), String::from_utf8_lossy(&err));
    code
}

pub fn main() {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/dataset");
    let data = data.to_str().unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let base = tmp.path().join("base");
    let refl = tmp.path().join("reflect");

    assert_eq!(replaybench(&["validate", data]), 0);
    assert_eq!(replaybench(&["eval", "--dataset", data, "--mock-model", "noisy:0.2", "--output", base.to_str().unwrap()]), 0);
    let reflect = [
        "eval", "--dataset", data, "--mock-model", "noisy:0.2", "--set", "agent.reflection=true",
        "--set", "mock_reflector_flag_rate=0.3", "--output", refl.to_str().unwrap(),
    ];
    assert_eq!(replaybench(&reflect), 0);
    let report = refl.join("report.json");
    let baseline = base.join("report.json");
    assert_eq!(
        replaybench(&["report", report.to_str().unwrap(), "--label", "reflection", "--baseline", baseline.to_str().unwrap()]),
        0
    );
}
