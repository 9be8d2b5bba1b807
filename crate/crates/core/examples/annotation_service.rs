//! Run the annotation REST backend on a copy of the fixture dataset and
//! drive one step through it the way the annotation UI would.

use std::path::{Path, PathBuf};

use replaybench::annotation::{AnnotationClient, AnnotationServer, AnnotatorDecision, ClientError, Vote, VotePolicy};

fn copy_dir(src: &Path, dst: &Path) {
    std::fs::create_dir_all(dst).unwrap();
    for entry in std::fs::read_dir(src).unwrap() {
        let entry = entry.unwrap();
        let to = dst.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &to);
        } else {
            std::fs::copy(entry.path(), to).unwrap();
        }
    }
}

pub fn main() {
    let tmp = tempfile::tempdir().unwrap();
    copy_dir(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/dataset"), tmp.path());
    let server = AnnotationServer::start(tmp.path(), "127.0.0.1:0", VotePolicy::default()).unwrap();
    let client = AnnotationClient::new(&server.url());
    println!("serving on {}", server.url());

    let task = client.tasks().unwrap().remove(0);
    let view = client.step(&task.task_id, 0).unwrap();
    println!("{:?} step 0: {} element(s), {} candidate(s)", task.goal, view.elements.len(), view.candidates.len());

    let mut version = view.version;
    for (n, who) in ["ana", "bo", "cy"].into_iter().enumerate() {
        let decision = AnnotatorDecision {
            annotator_id: who.into(),
            task_id: String::new(),
            step: 0,
            verdicts: view
                .candidates
                .iter()
                .map(|c| (c.key.clone(), if n == 2 { Vote::Drop } else { Vote::Keep }))
                .collect(),
            additions: Vec::new(),
            version,
        };
        version = client.decide(&task.task_id, 0, &decision).unwrap();
    }

    // A client holding an old version is told to reload.
    let stale = AnnotatorDecision {
        annotator_id: "ana".into(),
        task_id: String::new(),
        step: 0,
        verdicts: Default::default(),
        additions: Vec::new(),
        version: 0,
    };
    if let Err(ClientError::Conflict { current_version }) = client.decide(&task.task_id, 0, &stale) {
        println!("stale write rejected, step is at version {current_version}");
    }

    let resolution = client.resolve(&task.task_id, 0).unwrap();
    println!("resolved: {} valid action(s)", resolution.final_actions.len());
    let progress = client.progress().unwrap();
    println!("{} of {} step(s) resolved", progress.resolved, progress.steps);
}
