//! HTTP backend for annotators: step views, keep/drop/add decisions with
//! optimistic versioning, vote resolution back into `task.json`.
//!
//! Layout under the dataset root:
//!
//! * `annotations/candidates/<task>/<NNN>.json` – [`CandidateSet`] per step,
//!   written by [`write_candidate_set`].
//! * `annotations/<task>.journal.ndjson` – every accepted decision and
//!   resolution, appended in order. State is rebuilt from it on start.
//!
//! A resolution closes the step's round: later decisions start a re-vote over
//! the resolved set.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::candidates::CandidateSet;
use super::votes::{resolve_votes, AnnotatorDecision, VoteError, VoteResolution};
use crate::dataset::{load_dataset, save_task, write_atomic, Action, AnnotatedAction, LoadError, Provenance, TaskRecord};
use crate::screen::{parse_a11y, Rect, UiElementList};

pub const ANNOTATIONS_DIR: &str = "annotations";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VotePolicy {
    pub k: usize,
    pub threshold: usize,
}

impl Default for VotePolicy {
    fn default() -> Self {
        Self { k: 3, threshold: 2 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {detail}")]
    Journal { path: PathBuf, line: usize, detail: String },
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("task {task} has no step {step}")]
    UnknownStep { task: String, step: usize },
    #[error("stale version {sent}, step is at {current}")]
    Conflict { sent: u64, current: u64 },
    #[error("rejected decision: {0}")]
    BadDecision(String),
    #[error(transparent)]
    Vote(#[from] VoteError),
}

impl StoreError {
    fn status(&self) -> u16 {
        match self {
            StoreError::UnknownTask(_) | StoreError::UnknownStep { .. } => 404,
            StoreError::Conflict { .. } => 409,
            StoreError::BadDecision(_) | StoreError::Vote(_) => 400,
            _ => 500,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn candidate_path(root: &Path, task_id: &str, step: usize) -> PathBuf {
    root.join(ANNOTATIONS_DIR)
        .join("candidates")
        .join(task_id)
        .join(format!("{step:03}.json"))
}

pub fn journal_path(root: &Path, task_id: &str) -> PathBuf {
    root.join(ANNOTATIONS_DIR).join(format!("{task_id}.journal.ndjson"))
}

pub fn write_candidate_set(root: &Path, set: &CandidateSet) -> std::io::Result<()> {
    let path = candidate_path(root, &set.task_id, set.step);
    fs::create_dir_all(path.parent().expect("candidate path has a parent"))?;
    let body = serde_json::to_vec_pretty(set).map_err(std::io::Error::other)?;
    write_atomic(&path, &body)
}

pub fn read_candidate_set(root: &Path, task_id: &str, step: usize) -> std::io::Result<Option<CandidateSet>> {
    let path = candidate_path(root, task_id, step);
    match fs::read(&path) {
        Ok(bytes) => serde_json::from_slice(&bytes).map(Some).map_err(std::io::Error::other),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum JournalEntry {
    Decision(AnnotatorDecision),
    Resolve {
        task_id: String,
        step: usize,
        resolution: VoteResolution,
    },
}

#[derive(Debug, Clone, Default)]
struct StepState {
    version: u64,
    /// Latest decision per annotator in the open round.
    decisions: BTreeMap<String, AnnotatorDecision>,
    resolved: bool,
}

/// One votable item in a step view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateView {
    pub key: String,
    pub action: Action,
    pub provenance: Provenance,
    /// Annotators who proposed it, for surfaced additions.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub proposed_by: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementView {
    pub presentation_index: usize,
    pub canonical_id: String,
    pub bbox: [i32; 4],
    pub label: String,
}

impl ElementView {
    fn new(index: usize, id: &str, r: Rect, label: &str) -> Self {
        Self {
            presentation_index: index,
            canonical_id: id.to_owned(),
            bbox: [r.left, r.top, r.right, r.bottom],
            label: label.to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepView {
    pub task_id: String,
    pub step: usize,
    pub goal: String,
    pub screenshot_b64: String,
    pub elements: Vec<ElementView>,
    pub default_action: AnnotatedAction,
    pub candidates: Vec<CandidateView>,
    pub decisions_so_far: Vec<AnnotatorDecision>,
    pub version: u64,
    pub resolved: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task_id: String,
    pub goal: String,
    pub app: String,
    pub n_steps: usize,
    pub resolved_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub tasks: usize,
    pub steps: usize,
    pub resolved: usize,
    pub pending: usize,
    /// Steps with enough decisions to resolve but not yet resolved.
    pub ready: usize,
    pub decisions: usize,
}

/// Annotation state over one dataset. Not synchronized; the server wraps it
/// in a mutex so writes to a step are serialized.
pub struct AnnotationStore {
    root: PathBuf,
    policy: VotePolicy,
    tasks: BTreeMap<String, TaskRecord>,
    steps: BTreeMap<(String, usize), StepState>,
}

impl AnnotationStore {
    pub fn open(root: impl AsRef<Path>, policy: VotePolicy) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        let tasks: BTreeMap<String, TaskRecord> =
            load_dataset(&root)?.into_iter().map(|t| (t.task_id.clone(), t)).collect();
        let mut steps = BTreeMap::new();
        for task in tasks.values() {
            for s in &task.steps {
                steps.insert((task.task_id.clone(), s.index), StepState::default());
            }
            let path = journal_path(&root, &task.task_id);
            let file = match fs::File::open(&path) {
                Ok(f) => f,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => continue,
                Err(e) => return Err(io_err(&path)(e)),
            };
            for (n, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(io_err(&path))?;
                if line.trim().is_empty() {
                    continue;
                }
                let bad = |detail: String| StoreError::Journal {
                    path: path.clone(),
                    line: n + 1,
                    detail,
                };
                let entry: JournalEntry = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
                let (task_id, step) = match &entry {
                    JournalEntry::Decision(d) => (d.task_id.clone(), d.step),
                    JournalEntry::Resolve { task_id, step, .. } => (task_id.clone(), *step),
                };
                let state = steps
                    .get_mut(&(task_id, step))
                    .ok_or_else(|| bad(format!("no step {step} in this task")))?;
                apply(state, entry);
            }
        }
        Ok(Self {
            root,
            policy,
            tasks,
            steps,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn task(&self, task_id: &str) -> Option<&TaskRecord> {
        self.tasks.get(task_id)
    }

    pub fn tasks(&self) -> Vec<TaskSummary> {
        self.tasks
            .values()
            .map(|t| TaskSummary {
                task_id: t.task_id.clone(),
                goal: t.goal.clone(),
                app: t.app.clone(),
                n_steps: t.steps.len(),
                resolved_steps: t
                    .steps
                    .iter()
                    .filter(|s| self.steps[&(t.task_id.clone(), s.index)].resolved)
                    .count(),
            })
            .collect()
    }

    pub fn progress(&self) -> Progress {
        let resolved = self.steps.values().filter(|s| s.resolved).count();
        Progress {
            tasks: self.tasks.len(),
            steps: self.steps.len(),
            resolved,
            pending: self.steps.len() - resolved,
            ready: self
                .steps
                .values()
                .filter(|s| !s.resolved && s.decisions.len() >= self.policy.k)
                .count(),
            decisions: self.steps.values().map(|s| s.decisions.len()).sum(),
        }
    }

    fn locate(&self, task_id: &str, step: usize) -> Result<(&TaskRecord, &StepState), StoreError> {
        let task = self
            .tasks
            .get(task_id)
            .ok_or_else(|| StoreError::UnknownTask(task_id.to_owned()))?;
        let state = self
            .steps
            .get(&(task_id.to_owned(), step))
            .ok_or_else(|| StoreError::UnknownStep {
                task: task_id.to_owned(),
                step,
            })?;
        Ok((task, state))
    }

    /// The round's base pool: LLM candidates plus the step's current
    /// non-default actions, default excluded, first occurrence wins.
    fn pool(&self, task: &TaskRecord, step: usize) -> Result<Vec<AnnotatedAction>, StoreError> {
        let record = &task.steps[step];
        let default_key = record.default_action().action.key();
        let mut out: Vec<AnnotatedAction> = Vec::new();
        let mut push = |a: AnnotatedAction| {
            let key = a.action.key();
            if key != default_key && out.iter().all(|o| o.action.key() != key) {
                out.push(a);
            }
        };
        for a in record.valid_actions.iter().filter(|a| !a.is_default) {
            push(a.clone());
        }
        let path = candidate_path(&self.root, &task.task_id, step);
        if let Some(set) = read_candidate_set(&self.root, &task.task_id, step).map_err(io_err(&path))? {
            for c in set.candidates {
                push(AnnotatedAction::new(c, false, Provenance::LlmCandidate));
            }
        }
        Ok(out)
    }

    fn elements(task: &TaskRecord, step: usize) -> Result<UiElementList, StoreError> {
        let path = task.a11y_path(&task.steps[step]);
        let xml = fs::read(&path).map_err(io_err(&path))?;
        let tree = parse_a11y(&xml).map_err(|e| StoreError::Io {
            path: path.clone(),
            source: std::io::Error::other(e.to_string()),
        })?;
        Ok(UiElementList::from_tree(&tree))
    }

    pub fn step_view(&self, task_id: &str, step: usize) -> Result<StepView, StoreError> {
        let (task, state) = self.locate(task_id, step)?;
        let record = &task.steps[step];
        let shot = task.screenshot_path(record);
        let png = fs::read(&shot).map_err(io_err(&shot))?;
        let list = Self::elements(task, step)?;
        let mut candidates: Vec<CandidateView> = self
            .pool(task, step)?
            .into_iter()
            .map(|a| CandidateView {
                key: a.action.key(),
                action: a.action,
                provenance: a.provenance,
                proposed_by: Vec::new(),
            })
            .collect();
        let default_key = record.default_action().action.key();
        for d in state.decisions.values() {
            for a in &d.additions {
                let key = a.key();
                if key == default_key {
                    continue;
                }
                match candidates.iter_mut().find(|c| c.key == key) {
                    Some(c) if c.provenance == Provenance::HumanAdded && !c.proposed_by.is_empty() => {
                        c.proposed_by.push(d.annotator_id.clone())
                    }
                    Some(_) => {}
                    None => candidates.push(CandidateView {
                        key,
                        action: a.clone(),
                        provenance: Provenance::HumanAdded,
                        proposed_by: vec![d.annotator_id.clone()],
                    }),
                }
            }
        }
        Ok(StepView {
            task_id: task.task_id.clone(),
            step,
            goal: task.goal.clone(),
            screenshot_b64: base64::engine::general_purpose::STANDARD.encode(png),
            elements: list
                .elements
                .iter()
                .map(|e| ElementView::new(e.index, e.canonical_id.as_str(), e.bounds, e.label()))
                .collect(),
            default_action: record.default_action().clone(),
            candidates,
            decisions_so_far: state.decisions.values().cloned().collect(),
            version: state.version,
            resolved: state.resolved,
        })
    }

    /// Records a decision if `decision.version` is current; returns the new
    /// version. Verdict keys must name a votable item, every base candidate
    /// needs a verdict, and additions must target elements on the screen.
    pub fn submit(&mut self, mut decision: AnnotatorDecision) -> Result<u64, StoreError> {
        let (task, state) = self.locate(&decision.task_id, decision.step)?;
        if decision.version != state.version {
            return Err(StoreError::Conflict {
                sent: decision.version,
                current: state.version,
            });
        }
        if decision.annotator_id.trim().is_empty() {
            return Err(StoreError::BadDecision("empty annotator_id".into()));
        }
        let list = Self::elements(task, decision.step)?;
        for a in &decision.additions {
            a.check().map_err(|e| StoreError::BadDecision(e.to_string()))?;
            if let Some(target) = a.target() {
                if list.index_map.presentation(target).is_none() {
                    return Err(StoreError::BadDecision(format!("{a} targets an element not on this screen")));
                }
            }
        }
        let pool = self.pool(task, decision.step)?;
        let mut votable: Vec<String> = pool.iter().map(|a| a.action.key()).collect();
        for d in state.decisions.values().filter(|d| d.annotator_id != decision.annotator_id) {
            votable.extend(d.additions.iter().map(Action::key));
        }
        votable.extend(decision.additions.iter().map(Action::key));
        if let Some(unknown) = decision.verdicts.keys().find(|k| !votable.contains(k)) {
            return Err(StoreError::BadDecision(format!("verdict on unknown item {unknown}")));
        }
        for a in &pool {
            let key = a.action.key();
            if !decision.verdicts.contains_key(&key) && !decision.additions.iter().any(|x| x.key() == key) {
                return Err(StoreError::BadDecision(format!("no verdict on candidate {key}")));
            }
        }
        decision.version = state.version;
        self.append(&decision.task_id.clone(), &JournalEntry::Decision(decision.clone()))?;
        let state = self
            .steps
            .get_mut(&(decision.task_id.clone(), decision.step))
            .expect("located above");
        apply(state, JournalEntry::Decision(decision));
        Ok(state.version)
    }

    /// Tallies the open round, rewrites the step's valid set in `task.json`
    /// as default plus survivors, and journals the resolution.
    pub fn resolve(&mut self, task_id: &str, step: usize) -> Result<VoteResolution, StoreError> {
        let (task, state) = self.locate(task_id, step)?;
        let decisions: Vec<AnnotatorDecision> = state.decisions.values().cloned().collect();
        let pool = self.pool(task, step)?;
        let default = task.steps[step].default_action().clone();
        let resolution = resolve_votes(&default, &pool, &decisions, self.policy.k, self.policy.threshold)?;
        let mut updated = task.clone();
        updated.steps[step].valid_actions = resolution.final_actions.clone();
        save_task(&updated).map_err(io_err(&updated.dir.join(crate::dataset::TASK_FILE)))?;
        self.tasks.insert(task_id.to_owned(), updated);
        self.append(
            task_id,
            &JournalEntry::Resolve {
                task_id: task_id.to_owned(),
                step,
                resolution: resolution.clone(),
            },
        )?;
        let state = self.steps.get_mut(&(task_id.to_owned(), step)).expect("located above");
        apply(
            state,
            JournalEntry::Resolve {
                task_id: task_id.to_owned(),
                step,
                resolution: resolution.clone(),
            },
        );
        Ok(resolution)
    }

    fn append(&self, task_id: &str, entry: &JournalEntry) -> Result<(), StoreError> {
        let path = journal_path(&self.root, task_id);
        let mut line = serde_json::to_vec(entry).expect("journal entries serialize");
        line.push(b'\n');
        let write = || -> std::io::Result<()> {
            fs::create_dir_all(path.parent().expect("journal path has a parent"))?;
            let mut f = fs::OpenOptions::new().create(true).append(true).open(&path)?;
            f.write_all(&line)?;
            f.sync_data()
        };
        write().map_err(io_err(&path))
    }
}

fn apply(state: &mut StepState, entry: JournalEntry) {
    match entry {
        JournalEntry::Decision(d) => {
            state.decisions.insert(d.annotator_id.clone(), d);
            state.version += 1;
            state.resolved = false;
        }
        JournalEntry::Resolve { .. } => {
            state.decisions.clear();
            state.version += 1;
            state.resolved = true;
        }
    }
}

/// Running REST service. Dropping it stops accepting requests.
pub struct AnnotationServer {
    server: Arc<tiny_http::Server>,
    addr: SocketAddr,
    workers: Vec<JoinHandle<()>>,
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {detail}")]
    Bind { addr: String, detail: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl AnnotationServer {
    pub fn start(root: impl AsRef<Path>, addr: &str, policy: VotePolicy) -> Result<Self, ServeError> {
        let store = AnnotationStore::open(root, policy)?;
        Self::with_store(store, addr, 4)
    }

    pub fn with_store(store: AnnotationStore, addr: &str, workers: usize) -> Result<Self, ServeError> {
        let server = tiny_http::Server::http(addr).map_err(|e| ServeError::Bind {
            addr: addr.to_owned(),
            detail: e.to_string(),
        })?;
        let bound = server.server_addr().to_ip().ok_or_else(|| ServeError::Bind {
            addr: addr.to_owned(),
            detail: "not an IP listener".into(),
        })?;
        let server = Arc::new(server);
        let store = Arc::new(Mutex::new(store));
        let workers = (0..workers.max(1))
            .map(|_| {
                let server = Arc::clone(&server);
                let store = Arc::clone(&store);
                std::thread::spawn(move || {
                    for request in server.incoming_requests() {
                        handle(request, &store);
                    }
                })
            })
            .collect();
        Ok(Self {
            server,
            addr: bound,
            workers,
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the server is unblocked from another thread.
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    pub fn unblocker(&self) -> impl Fn() + Send + Sync + 'static {
        let server = Arc::clone(&self.server);
        move || server.unblock()
    }
}

impl Drop for AnnotationServer {
    fn drop(&mut self) {
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
    }
}

type Reply = (u16, Value);

fn route(method: &tiny_http::Method, url: &str, body: &str, store: &Mutex<AnnotationStore>) -> Reply {
    use tiny_http::Method::{Get, Post};
    let path = url.split('?').next().unwrap_or_default().trim_end_matches('/');
    let parts: Vec<&str> = path.split('/').filter(|p| !p.is_empty()).collect();
    let mut store = store.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
    let ok = |v: Result<Value, StoreError>| match v {
        Ok(v) => (200, v),
        Err(e) => error_reply(&e),
    };
    let step_of = |raw: &str| raw.parse::<usize>().ok();
    match (method, parts.as_slice()) {
        (Get, ["tasks"]) => (200, json!(store.tasks())),
        (Get, ["progress"]) => (200, json!(store.progress())),
        (Get, ["tasks", id, "steps", n]) => match step_of(n) {
            Some(n) => ok(store.step_view(id, n).map(|v| json!(v))),
            None => (400, json!({"error": format!("bad step {n}")})),
        },
        (Post, ["tasks", id, "steps", n, "decision"]) => {
            let Some(n) = step_of(n) else {
                return (400, json!({"error": format!("bad step {n}")}));
            };
            let mut decision: AnnotatorDecision = match serde_json::from_str(body) {
                Ok(d) => d,
                Err(e) => return (400, json!({"error": e.to_string()})),
            };
            decision.task_id = (*id).to_owned();
            decision.step = n;
            ok(store.submit(decision).map(|version| json!({"version": version})))
        }
        (Post, ["tasks", id, "steps", n, "resolve"]) => match step_of(n) {
            Some(n) => ok(store.resolve(id, n).map(|r| json!(r))),
            None => (400, json!({"error": format!("bad step {n}")})),
        },
        _ => (404, json!({"error": format!("no route for {method} {path}")})),
    }
}

fn error_reply(e: &StoreError) -> Reply {
    let mut body = json!({"error": e.to_string()});
    if let StoreError::Conflict { current, .. } = e {
        body["current_version"] = json!(current);
    }
    (e.status(), body)
}

fn handle(mut request: tiny_http::Request, store: &Mutex<AnnotationStore>) {
    let mut body = String::new();
    let (status, value) = match request.as_reader().read_to_string(&mut body) {
        Ok(_) => route(request.method(), request.url(), &body, store),
        Err(e) => (400, json!({"error": format!("body is not UTF-8: {e}")})),
    };
    let header = tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header");
    let response = tiny_http::Response::from_string(value.to_string())
        .with_status_code(status)
        .with_header(header);
    let _ = request.respond(response);
}

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("version conflict, step is at {current_version}")]
    Conflict { current_version: u64 },
    #[error("HTTP {status}: {error}")]
    Status { status: u16, error: String },
    #[error(transparent)]
    Transport(#[from] ureq::Error),
    #[error("malformed reply: {0}")]
    Malformed(String),
}

/// Thin client for the REST protocol.
#[derive(Clone)]
pub struct AnnotationClient {
    base: String,
    agent: ureq::Agent,
}

impl AnnotationClient {
    pub fn new(base_url: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(std::time::Duration::from_secs(30)))
            .build()
            .into();
        Self {
            base: base_url.trim_end_matches('/').to_owned(),
            agent,
        }
    }

    fn finish<T: serde::de::DeserializeOwned>(
        resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    ) -> Result<T, ClientError> {
        let mut resp = resp?;
        let status = resp.status().as_u16();
        let value: Value = resp.body_mut().read_json().map_err(|e| ClientError::Malformed(e.to_string()))?;
        match status {
            200 => serde_json::from_value(value).map_err(|e| ClientError::Malformed(e.to_string())),
            409 => Err(ClientError::Conflict {
                current_version: value["current_version"].as_u64().unwrap_or_default(),
            }),
            _ => Err(ClientError::Status {
                status,
                error: value["error"].as_str().unwrap_or_default().to_owned(),
            }),
        }
    }

    pub fn tasks(&self) -> Result<Vec<TaskSummary>, ClientError> {
        Self::finish(self.agent.get(format!("{}/tasks", self.base)).call())
    }

    pub fn progress(&self) -> Result<Progress, ClientError> {
        Self::finish(self.agent.get(format!("{}/progress", self.base)).call())
    }

    pub fn step(&self, task_id: &str, step: usize) -> Result<StepView, ClientError> {
        Self::finish(self.agent.get(format!("{}/tasks/{task_id}/steps/{step}", self.base)).call())
    }

    /// Returns the step's new version.
    pub fn decide(&self, task_id: &str, step: usize, decision: &AnnotatorDecision) -> Result<u64, ClientError> {
        #[derive(Deserialize)]
        struct Accepted {
            version: u64,
        }
        let body = json!({
            "annotator_id": decision.annotator_id,
            "verdicts": decision.verdicts,
            "additions": decision.additions,
            "version": decision.version,
        });
        let url = format!("{}/tasks/{task_id}/steps/{step}/decision", self.base);
        Self::finish::<Accepted>(self.agent.post(url).send_json(&body)).map(|a| a.version)
    }

    pub fn resolve(&self, task_id: &str, step: usize) -> Result<VoteResolution, ClientError> {
        let url = format!("{}/tasks/{task_id}/steps/{step}/resolve", self.base);
        Self::finish(self.agent.post(url).send_json(json!({})))
    }
}
