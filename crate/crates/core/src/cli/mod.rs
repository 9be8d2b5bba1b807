//! The `replaybench` command line.
//!
//! Exit codes: 0 ok, 1 validation failure or dataset violation, 2 I/O
//! (missing files, unwritable output, bind failure), 3 remote-model failure,
//! 4 version conflict or grid cap exceeded, 130 interrupted.
//!
//! `eval` and `sweep` read an optional JSON run configuration. Nested objects
//! are flattened to dotted keys so any field can be overridden with
//! `--set key=value`; dedicated flags win over both.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::agent::{
    AgentConfig, AgentStep, AgentTurn, EndToEndAgent, InferenceStyle, MockPolicy, ModelClient, ModularAgent,
    OpenAiCompatClient, ProcessAgent, ReplayMockClient, Role,
};
use crate::annotation::{
    generate_candidates, write_candidate_set, AnnotationServer, AnnotationStore, CandidateError, StoreError, VoteError,
    VotePolicy,
};
use crate::dataset::{compute_stats, load_dataset, validate_dataset, LoadError, TaskRecord};
use crate::eval::{
    evaluate_run, prediction_log, render_report_table, write_prediction_log, EvalMode, EvalSettings, MatchPolicy,
    RunReport,
};
use crate::metrics::{
    cost_efficiency, latency_efficiency, pareto_front, write_points_csv, EfficiencyPoint, LatencyModel, ParetoAxis,
    PriceTable,
};
use crate::screen::{Annotator, HttpAnnotator, StaticAnnotator};
use crate::sweep::{emit_table, full_grid, grid_argmax, incremental_sweep, sweep_json, Choice, Slot, Summary, SweepPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    Violation = 1,
    Io = 2,
    Model = 3,
    Conflict = 4,
    Interrupted = 130,
}

#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl CliError {
    fn new(code: ExitCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn violation(message: impl fmt::Display) -> Self {
        Self::new(ExitCode::Violation, message.to_string())
    }

    fn io(path: &Path, e: impl fmt::Display) -> Self {
        Self::new(ExitCode::Io, format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::Io { .. } => Self::new(ExitCode::Io, e.to_string()),
            _ => Self::violation(e),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        let code = match &e {
            StoreError::Load(LoadError::Io { .. }) | StoreError::Io { .. } => ExitCode::Io,
            StoreError::Conflict { .. } => ExitCode::Conflict,
            _ => ExitCode::Violation,
        };
        Self::new(code, e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "replaybench", version, about = "Offline multi-branch replay benchmark for mobile GUI agents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a dataset against the schema and invariants.
    Validate { root: PathBuf },
    /// Dataset statistics table.
    Stats {
        root: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Replay a dataset with one agent configuration.
    Eval(RunArgs),
    /// Tune one module slot at a time.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Sweep plan JSON; the standard four-slot plan when absent.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Also evaluate every combination and report the grid optimum.
        #[arg(long)]
        grid: bool,
        #[arg(long, default_value_t = 256)]
        grid_cap: usize,
    },
    /// Render a saved report, optionally against a baseline.
    Report {
        report: PathBuf,
        #[arg(long, default_value = "run")]
        label: String,
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Ask a generator model for candidate actions on every step.
    Candidates {
        root: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        task: Option<String>,
        #[arg(long, default_value = "gpt-4.1")]
        model: String,
        /// Offline mock generator instead of the remote endpoint.
        #[arg(long)]
        mock_model: Option<String>,
    },
    /// Majority-vote every step that has enough decisions.
    Resolve {
        root: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        step: Option<usize>,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        threshold: usize,
    },
    /// Serve the annotation REST backend.
    Serve {
        root: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// multi_branch or single_path.
    #[arg(long)]
    pub mode: Option<String>,
    /// oracle, alt_path, random, always_finish, malformed or noisy:P.
    #[arg(long)]
    pub mock_model: Option<String>,
    #[arg(long)]
    pub n_runs: Option<usize>,
    /// Dotted-key override, e.g. `agent.parser=a11y_list`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(flatten)]
    pub common: Common,
}

fn default_agent() -> AgentConfig {
    AgentConfig::simplest("gpt-4.1")
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn one() -> usize {
    1
}

/// Everything an evaluation run needs, fully validated before any model
/// call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    #[serde(default = "default_agent")]
    pub agent: AgentConfig,
    #[serde(default)]
    pub mode: EvalMode,
    #[serde(default)]
    pub policy: MatchPolicy,
    /// Price table JSON; the bundled table when absent.
    #[serde(default)]
    pub prices: Option<PathBuf>,
    #[serde(default = "one")]
    pub n_runs: usize,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Offline mock policy; the remote endpoint when absent.
    #[serde(default)]
    pub mock_model: Option<String>,
    /// Chance that the mock reflector flags an action.
    #[serde(default)]
    pub mock_reflector_flag_rate: f64,
    /// Image annotator service for the annotated-image parsers; the
    /// in-process block detector when absent.
    #[serde(default)]
    pub annotator_url: Option<String>,
    /// External end-to-end agent speaking the NDJSON protocol; replaces the
    /// modular agent.
    #[serde(default)]
    pub agent_command: Option<Vec<String>>,
    #[serde(default)]
    pub label: Option<String>,
}

fn flatten(prefix: &str, value: &Value, out: &mut Map<String, Value>) {
    match value {
        Value::Object(map) if !map.is_empty() && !is_leaf_object(prefix) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_owned(), other.clone());
        }
    }
}

/// Maps keyed by data rather than by field name stay whole.
fn is_leaf_object(key: &str) -> bool {
    matches!(key, "agent.model_roles" | "agent.model_params")
}

fn unflatten(flat: &Map<String, Value>) -> Value {
    let mut root = Map::new();
    for (key, value) in flat {
        let mut node = &mut root;
        let parts: Vec<&str> = key.split('.').collect();
        for part in &parts[..parts.len() - 1] {
            let entry = node.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
            if !entry.is_object() {
                *entry = Value::Object(Map::new());
            }
            node = entry.as_object_mut().expect("just made an object");
        }
        node.insert(parts[parts.len() - 1].to_owned(), value.clone());
    }
    Value::Object(root)
}

fn parse_override(raw: &str) -> CliResult<(String, Value)> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::violation(format!("override {raw:?} is not KEY=VALUE")))?;
    let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_owned()));
    Ok((key.trim().to_owned(), value))
}

impl RunArgs {
    /// Config file, then `--set`, then dedicated flags.
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut flat = Map::new();
        let defaults = serde_json::json!({ "agent": default_agent() });
        flatten("", &defaults, &mut flat);
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let value: Value =
                serde_json::from_str(&text).map_err(|e| CliError::violation(format!("{}: {e}", path.display())))?;
            if !value.is_object() {
                return Err(CliError::violation(format!("{}: expected a JSON object", path.display())));
            }
            flatten("", &value, &mut flat);
        }
        for raw in &self.overrides {
            let (k, v) = parse_override(raw)?;
            flat.insert(k, v);
        }
        let mut set = |k: &str, v: Value| {
            flat.insert(k.to_owned(), v);
        };
        if let Some(d) = &self.dataset {
            set("dataset", Value::String(d.display().to_string()));
        }
        if let Some(m) = &self.mode {
            let mode = EvalMode::parse(m).ok_or_else(|| CliError::violation(format!("unknown mode {m:?}")))?;
            set("mode", Value::String(mode.as_str().to_owned()));
        }
        if let Some(m) = &self.mock_model {
            set("mock_model", Value::String(m.clone()));
        }
        if let Some(n) = self.n_runs {
            set("n_runs", n.into());
        }
        if let Some(o) = &self.common.output {
            set("output", Value::String(o.display().to_string()));
        }
        if let Some(s) = self.common.seed {
            set("seed", s.into());
        }
        if let Some(w) = self.common.workers {
            set("workers", w.into());
        }
        let config: RunConfig =
            serde_json::from_value(unflatten(&flat)).map_err(|e| CliError::violation(format!("run configuration: {e}")))?;
        Ok(config)
    }
}

impl RunConfig {
    fn mock_policy(&self) -> CliResult<Option<MockPolicy>> {
        self.mock_model
            .as_deref()
            .map(|raw| MockPolicy::parse(raw).ok_or_else(|| CliError::violation(format!("unknown mock model {raw:?}"))))
            .transpose()
    }

    /// Checks everything that can fail before spending on a model.
    pub fn validate(&self) -> CliResult<(Vec<TaskRecord>, EvalSettings)> {
        if self.n_runs == 0 {
            return Err(CliError::violation("n_runs must be at least 1"));
        }
        if self.workers == 0 {
            return Err(CliError::violation("workers must be at least 1"));
        }
        self.agent.validate().map_err(CliError::violation)?;
        self.mock_policy()?;
        if let Some(cmd) = &self.agent_command {
            if cmd.is_empty() {
                return Err(CliError::violation("agent_command is empty"));
            }
        }
        let prices = match &self.prices {
            Some(path) => PriceTable::load(path).map_err(|e| CliError::io(path, e))?,
            None => PriceTable::builtin(),
        };
        prices.validate().map_err(CliError::violation)?;
        let latency = LatencyModel::from_prices(&prices);
        for role in roles_in_use(&self.agent) {
            let model = self.agent.model_for(role);
            prices.get(model).map_err(CliError::violation)?;
            latency.profile(model).map_err(CliError::violation)?;
        }
        let tasks = load_dataset(&self.dataset)?;
        let mut settings = EvalSettings::new(self.mode);
        settings.policy = self.policy;
        settings.n_runs = self.n_runs;
        settings.workers = self.workers;
        settings.history = self.agent.history;
        settings.prices = prices;
        settings.latency = latency;
        Ok((tasks, settings))
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.agent.label())
    }

    fn client(&self) -> CliResult<Arc<dyn ModelClient>> {
        Ok(match self.mock_policy()? {
            Some(policy) => Arc::new(
                ReplayMockClient::new(policy, self.seed).with_reflector_flag_rate(self.mock_reflector_flag_rate),
            ),
            None => Arc::new(OpenAiCompatClient::from_env(self.workers, Duration::from_secs(120))),
        })
    }
}

/// Stands in for an agent that could not be started; every step fails.
struct BrokenAgent(String);

impl EndToEndAgent for BrokenAgent {
    fn act(&mut self, _step: &AgentStep<'_>) -> AgentTurn {
        AgentTurn::failed(self.0.clone())
    }
}

fn cancel_flag() -> &'static AtomicBool {
    static FLAG: OnceLock<&'static AtomicBool> = OnceLock::new();
    FLAG.get_or_init(|| {
        let flag: &'static AtomicBool = Box::leak(Box::new(AtomicBool::new(false)));
        // A second handler cannot be installed; a host that owns Ctrl-C keeps it.
        let _ = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst));
        flag
    })
}

/// Runs one configuration over `tasks`.
pub fn run_config(config: &RunConfig, tasks: &[TaskRecord], settings: &EvalSettings, cancel: Option<&AtomicBool>) -> CliResult<RunReport> {
    let client = config.client()?;
    let annotator: Arc<dyn Annotator> = match config.annotator_url.as_deref() {
        Some(url) => Arc::new(HttpAnnotator::new(url, Duration::from_secs(30))),
        None => Arc::new(StaticAnnotator::blocks()),
    };
    let factory = |_task: &TaskRecord, _run: usize| -> Box<dyn EndToEndAgent> {
        if let Some(cmd) = &config.agent_command {
            return match ProcessAgent::spawn(&cmd[0], &cmd[1..]) {
                Ok(agent) => Box::new(agent),
                Err(e) => Box::new(BrokenAgent(e.to_string())),
            };
        }
        Box::new(ModularAgent::new(config.agent.clone(), Arc::clone(&client)).with_annotator(Arc::clone(&annotator)))
    };
    evaluate_run(tasks, factory, settings, cancel).map_err(CliError::violation)
}

fn create_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> CliResult {
    fs::write(path, body).map_err(|e| CliError::io(path, e))
}

pub fn efficiency_point(label: &str, report: &RunReport) -> EfficiencyPoint {
    EfficiencyPoint {
        label: label.to_owned(),
        tsr: report.tsr,
        cost_per_task_usd: report.totals.cost_per_task_usd,
        est_latency_per_task_s: report.totals.est_latency_per_task_s,
    }
}

fn write_points(path: &Path, points: &[EfficiencyPoint]) -> CliResult {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    write_points_csv(points, file).map_err(|e| CliError::io(path, e))
}

/// Writes report.json, report.txt, predictions.ndjson and
/// efficiency_points.csv under `dir`.
pub fn write_run_outputs(dir: &Path, label: &str, report: &RunReport) -> CliResult {
    create_dir(dir)?;
    write_file(&dir.join("report.json"), report.to_json_pretty())?;
    write_file(&dir.join("report.txt"), render_report_table(label, report))?;
    let path = dir.join("predictions.ndjson");
    let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    write_prediction_log(&prediction_log(report), std::io::BufWriter::new(file)).map_err(|e| CliError::io(&path, e))?;
    write_points(&dir.join("efficiency_points.csv"), &[efficiency_point(label, report)])
}

fn finish_code(report: &RunReport) -> CliResult {
    if !report.complete {
        return Err(CliError::new(ExitCode::Interrupted, "interrupted; partial report written"));
    }
    if report.step_errors > 0 {
        return Err(CliError::new(
            ExitCode::Model,
            format!("{} step(s) failed on model calls; see report.json", report.step_errors),
        ));
    }
    Ok(())
}

pub fn cmd_validate(root: &Path, out: &mut dyn Write) -> CliResult {
    let report = validate_dataset(root)?;
    for v in &report.violations {
        let _ = writeln!(out, "{v}");
    }
    if report.is_clean() {
        let _ = writeln!(out, "ok: {} task(s)", report.tasks.len());
        Ok(())
    } else {
        Err(CliError::violation(format!("{} violation(s)", report.violations.len())))
    }
}

pub fn cmd_stats(root: &Path, common: &Common, out: &mut dyn Write) -> CliResult {
    let tasks = load_dataset(root)?;
    let stats = compute_stats(&tasks).map_err(CliError::violation)?;
    let table = stats.render_table();
    let _ = write!(out, "{table}");
    if let Some(dir) = &common.output {
        create_dir(dir)?;
        let json = serde_json::to_string_pretty(&stats).expect("stats serialize");
        write_file(&dir.join("stats.json"), json)?;
        write_file(&dir.join("stats.txt"), table)?;
    }
    Ok(())
}

pub fn cmd_eval(args: &RunArgs, out: &mut dyn Write) -> CliResult<RunReport> {
    let config = args.resolve()?;
    let (tasks, settings) = config.validate()?;
    let cancel = cancel_flag();
    cancel.store(false, Ordering::SeqCst);
    let report = run_config(&config, &tasks, &settings, Some(cancel))?;
    let label = config.label();
    write_run_outputs(&config.output, &label, &report)?;
    let _ = write!(out, "{}", render_report_table(&label, &report));
    finish_code(&report)?;
    Ok(report)
}

/// The standard plan, minus few-shot when there is no exemplar pool.
fn default_plan(config: &RunConfig) -> SweepPlan {
    let mut base = config.agent.clone();
    let pool = std::mem::take(&mut base.few_shot_exemplars);
    base.inference = InferenceStyle::ActionOnly;
    let mut plan = SweepPlan::standard(base, pool);
    if plan.exemplar_pool.is_empty() {
        if let Some(list) = plan.candidates.get_mut(&Slot::Inference) {
            list.retain(|c| *c != Choice::Inference(InferenceStyle::FewShot));
        }
    }
    plan
}

pub fn cmd_sweep(args: &RunArgs, plan_path: Option<&Path>, grid: bool, grid_cap: usize, out: &mut dyn Write) -> CliResult {
    let config = args.resolve()?;
    let (tasks, settings) = config.validate()?;
    let plan = match plan_path {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::violation(format!("{}: {e}", path.display())))?
        }
        None => default_plan(&config),
    };
    plan.validate().map_err(CliError::violation)?;
    if grid && plan.grid_size() > grid_cap {
        return Err(CliError::new(
            ExitCode::Conflict,
            format!("grid of {} configurations exceeds the cap of {grid_cap}", plan.grid_size()),
        ));
    }
    for role in [Role::Actor, Role::Summarizer, Role::Reflector] {
        let model = plan.base.model_for(role);
        settings.prices.get(model).map_err(CliError::violation)?;
        settings.latency.profile(model).map_err(CliError::violation)?;
    }
    let cancel = cancel_flag();
    cancel.store(false, Ordering::SeqCst);
    let evaluate = |agent: &AgentConfig| -> Result<Summary, CliError> {
        if cancel.load(Ordering::SeqCst) {
            return Err(CliError::new(ExitCode::Interrupted, "interrupted"));
        }
        let mut run = config.clone();
        run.agent = agent.clone();
        let mut s = settings.clone();
        s.history = agent.history;
        let report = run_config(&run, &tasks, &s, Some(cancel))?;
        finish_code(&report)?;
        Ok(Summary::from(&report))
    };
    create_dir(&config.output)?;
    let result = match incremental_sweep(&plan, evaluate) {
        Ok(r) => r,
        Err(crate::sweep::SweepError::Evaluate { config: c, message, partial }) => {
            write_file(&config.output.join("sweep.json"), sweep_json(&partial))?;
            write_file(&config.output.join("table.txt"), emit_table(&partial))?;
            return Err(CliError::new(ExitCode::Model, format!("evaluation of {c} failed: {message}")));
        }
        Err(e) => return Err(CliError::violation(e)),
    };
    let table = emit_table(&result);
    write_file(&config.output.join("sweep.json"), sweep_json(&result))?;
    write_file(&config.output.join("table.txt"), &table)?;
    let points = result.efficiency_points();
    write_points(&config.output.join("efficiency_points.csv"), &points)?;
    write_points(&config.output.join("pareto_cost.csv"), &pareto_front(&points, ParetoAxis::Cost))?;
    write_points(&config.output.join("pareto_latency.csv"), &pareto_front(&points, ParetoAxis::Latency))?;
    let _ = write!(out, "{table}");
    let _ = writeln!(out, "final: {}  ({} evaluations)", result.final_config.label(), result.evaluations);
    if grid {
        let all = full_grid(&plan, grid_cap, evaluate).map_err(|e| CliError::new(ExitCode::Model, e.to_string()))?;
        let (best, summary) = grid_argmax(&plan, &all).expect("grid is non-empty");
        let body = serde_json::json!({
            "grid": all.iter().map(|(c, s)| serde_json::json!({"config": c, "summary": s})).collect::<Vec<_>>(),
            "argmax": {"config": best, "summary": summary},
            "incremental_matches_argmax": best == &result.final_config,
        });
        write_file(
            &config.output.join("grid.json"),
            serde_json::to_string_pretty(&body).expect("grid serializes"),
        )?;
        let _ = writeln!(out, "grid argmax: {}", best.label());
    }
    Ok(())
}

fn read_report(path: &Path) -> CliResult<RunReport> {
    let path = if path.is_dir() { path.join("report.json") } else { path.to_path_buf() };
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::violation(format!("{}: {e}", path.display())))
}

pub fn cmd_report(path: &Path, label: &str, baseline: Option<&Path>, out: &mut dyn Write) -> CliResult {
    let report = read_report(path)?;
    let _ = write!(out, "{}", render_report_table(label, &report));
    let t = &report.totals;
    let _ = writeln!(
        out,
        "cost/task ${:.4}  latency/task {:.2}s  reasoning tokens/task {:.1}  reflection flagged {}",
        t.cost_per_task_usd, t.est_latency_per_task_s, t.reasoning_tokens_per_task, report.reflection_stats.flagged
    );
    if let Some(fid) = report.fidelity {
        let _ = writeln!(out, "fidelity {:.2}%", fid * 100.0);
    }
    if let Some(base_path) = baseline {
        let base = read_report(base_path)?;
        let (b, v) = (efficiency_point("baseline", &base), efficiency_point(label, &report));
        let show = |r: Result<f64, crate::metrics::MetricsError>| match r {
            Ok(x) => format!("{x:.4}"),
            Err(e) => format!("n/a ({e})"),
        };
        let _ = writeln!(out, "latency efficiency {}", show(latency_efficiency(&b, &v)));
        let _ = writeln!(out, "cost efficiency {}", show(cost_efficiency(&b, &v)));
    }
    Ok(())
}

pub fn cmd_candidates(
    root: &Path,
    common: &Common,
    task_filter: Option<&str>,
    model: &str,
    mock: Option<&str>,
    out: &mut dyn Write,
) -> CliResult {
    let tasks = load_dataset(root)?;
    let client: Arc<dyn ModelClient> = match mock {
        Some(raw) => {
            let policy = MockPolicy::parse(raw).ok_or_else(|| CliError::violation(format!("unknown mock model {raw:?}")))?;
            Arc::new(ReplayMockClient::new(policy, common.seed.unwrap_or(0)))
        }
        None => Arc::new(OpenAiCompatClient::from_env(
            common.workers.unwrap_or(1),
            Duration::from_secs(120),
        )),
    };
    let jobs: Vec<(&TaskRecord, usize)> = tasks
        .iter()
        .filter(|t| task_filter.is_none_or(|f| f == t.task_id))
        .flat_map(|t| (0..t.steps.len()).map(move |s| (t, s)))
        .collect();
    if jobs.is_empty() {
        return Err(CliError::violation("no matching task"));
    }
    let workers = common.workers.unwrap_or(1).max(1);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results = std::sync::Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..workers.min(jobs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(task, step)) = jobs.get(i) else { break };
                let record = &task.steps[step];
                let mut attempt = generate_candidates(task, record, client.as_ref(), model);
                if matches!(attempt, Err(CandidateError::NoArray)) {
                    attempt = generate_candidates(task, record, client.as_ref(), model);
                }
                results.lock().expect("not poisoned").push((i, attempt));
            });
        }
    });
    let mut results = results.into_inner().expect("not poisoned");
    results.sort_by_key(|(i, _)| *i);
    let (mut n_candidates, mut dropped, mut cost) = (0, 0, 0.0);
    let prices = PriceTable::builtin();
    let mut first_error: Option<CliError> = None;
    for (i, result) in results {
        let (task, step) = jobs[i];
        match result {
            Ok((set, exchange)) => {
                n_candidates += set.candidates.len();
                dropped += set.dropped;
                cost += crate::metrics::cost_of(std::slice::from_ref(&exchange), &prices).unwrap_or(0.0);
                write_candidate_set(root, &set).map_err(|e| CliError::io(root, e))?;
            }
            Err(e) => {
                let _ = writeln!(out, "{} step {step}: {e}", task.task_id);
                let code = match e {
                    CandidateError::Screen(_) => ExitCode::Io,
                    _ => ExitCode::Model,
                };
                first_error.get_or_insert(CliError::new(code, format!("{} step {step}: {e}", task.task_id)));
            }
        }
    }
    let _ = writeln!(
        out,
        "{} step(s), {n_candidates} candidate(s), {dropped} dropped, ${cost:.4}",
        jobs.len()
    );
    if let Some(dir) = &common.output {
        create_dir(dir)?;
    }
    first_error.map_or(Ok(()), Err)
}

pub fn cmd_resolve(
    root: &Path,
    task: Option<&str>,
    step: Option<usize>,
    policy: VotePolicy,
    out: &mut dyn Write,
) -> CliResult {
    let mut store = AnnotationStore::open(root, policy)?;
    let mut targets = Vec::new();
    for summary in store.tasks() {
        if task.is_some_and(|t| t != summary.task_id) {
            continue;
        }
        for n in 0..summary.n_steps {
            if step.is_some_and(|s| s != n) {
                continue;
            }
            let view = store.step_view(&summary.task_id, n)?;
            let explicit = task.is_some() && step.is_some();
            if explicit || (!view.resolved && view.decisions_so_far.len() >= policy.k) {
                targets.push((summary.task_id.clone(), n));
            }
        }
    }
    if task.is_some() && targets.is_empty() && step.is_some() {
        return Err(CliError::violation("no such step"));
    }
    for (t, n) in targets {
        match store.resolve(&t, n) {
            Ok(r) => {
                let _ = writeln!(out, "{t} step {n}: {} action(s) kept", r.final_actions.len());
                for tally in &r.vote_tally {
                    let mark = if tally.kept { "keep" } else { "drop" };
                    let _ = writeln!(out, "  {mark} {}/{} {}", tally.keeps, tally.of, tally.action);
                }
            }
            Err(StoreError::Vote(e @ VoteError::TooFewDecisions { .. })) => {
                return Err(CliError::violation(format!("{t} step {n}: {e}")));
            }
            Err(e) => return Err(e.into()),
        }
    }
    let p = store.progress();
    let _ = writeln!(out, "{} of {} step(s) resolved", p.resolved, p.steps);
    Ok(())
}

pub fn cmd_serve(root: &Path, bind: &str, out: &mut dyn Write) -> CliResult {
    let server = AnnotationServer::start(root, bind, VotePolicy::default()).map_err(|e| match e {
        crate::annotation::ServeError::Bind { .. } => CliError::new(ExitCode::Io, e.to_string()),
        crate::annotation::ServeError::Store(s) => s.into(),
    })?;
    let _ = writeln!(out, "serving {} on {}", root.display(), server.url());
    let _ = out.flush();
    let cancel = cancel_flag();
    cancel.store(false, Ordering::SeqCst);
    while !cancel.load(Ordering::SeqCst) {
        std::thread::sleep(Duration::from_millis(100));
    }
    drop(server);
    Ok(())
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> CliResult {
    match cli.command {
        Command::Validate { root } => cmd_validate(&root, out),
        Command::Stats { root, common } => cmd_stats(&root, &common, out),
        Command::Eval(args) => cmd_eval(&args, out).map(|_| ()),
        Command::Sweep {
            run,
            plan,
            grid,
            grid_cap,
        } => cmd_sweep(&run, plan.as_deref(), grid, grid_cap, out),
        Command::Report { report, label, baseline } => cmd_report(&report, &label, baseline.as_deref(), out),
        Command::Candidates {
            root,
            common,
            task,
            model,
            mock_model,
        } => cmd_candidates(&root, &common, task.as_deref(), &model, mock_model.as_deref(), out),
        Command::Resolve {
            root,
            common: _,
            task,
            step,
            k,
            threshold,
        } => cmd_resolve(&root, task.as_deref(), step, VotePolicy { k, threshold }, out),
        Command::Serve { root, common: _, bind } => cmd_serve(&root, &bind, out),
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { ExitCode::Violation as i32 } else { 0 };
        }
    };
    match dispatch(cli, out) {
        Ok(()) => ExitCode::Ok as i32,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.code as i32
        }
    }
}

/// Model roles used by a configuration, for spend checks.
pub fn roles_in_use(config: &AgentConfig) -> Vec<Role> {
    let mut roles = vec![Role::Actor];
    if config.history != crate::agent::HistoryTechnique::RawTrace {
        roles.push(Role::Summarizer);
    }
    if config.reflection {
        roles.push(Role::Reflector);
    }
    roles
}
