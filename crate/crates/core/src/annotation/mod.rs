//! Dataset construction after the default trajectory exists: LLM candidate
//! generation, human keep/drop/add decisions, majority voting, and the HTTP
//! backend the annotation UI talks to.

mod candidates;
mod service;
mod votes;

pub use candidates::{generate_candidates, parse_candidates, CandidateError, CandidateSet};
pub use service::{
    candidate_path, journal_path, read_candidate_set, write_candidate_set, AnnotationClient, AnnotationServer,
    AnnotationStore, CandidateView, ClientError, ElementView, Progress, ServeError, StepView, StoreError, TaskSummary,
    VotePolicy, ANNOTATIONS_DIR,
};
pub use votes::{resolve_votes, AnnotatorDecision, Tally, Vote, VoteError, VoteResolution};
