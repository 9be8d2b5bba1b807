use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::report::RunReport;
use super::{match_in_mode, EvalMode, MatchPolicy};
use crate::agent::{AgentStep, EndToEndAgent, HistoryTechnique, ModelExchange, ReplayHint, ScreenInput};
use crate::dataset::{classify_task, ActionKind, Prediction, TaskClass, TaskRecord};
use crate::metrics::{cost_of, estimate_latency, LatencyModel, MetricsError, PriceTable};

/// Fixed for a whole run and recorded in the report.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub mode: EvalMode,
    pub policy: MatchPolicy,
    pub n_runs: usize,
    pub workers: usize,
    /// Decides how summarizer calls count toward latency.
    pub history: HistoryTechnique,
    pub prices: PriceTable,
    pub latency: LatencyModel,
}

impl EvalSettings {
    pub fn new(mode: EvalMode) -> Self {
        let prices = PriceTable::builtin();
        Self {
            mode,
            policy: MatchPolicy::default(),
            n_runs: 1,
            workers: 1,
            history: HistoryTechnique::RawTrace,
            latency: LatencyModel::from_prices(&prices),
            prices,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no tasks to evaluate")]
    EmptyTaskSet,
    #[error("n_runs must be at least 1")]
    NoRuns,
    #[error("task {task}: {source}")]
    Metrics {
        task: String,
        #[source]
        source: MetricsError,
    },
}

/// One replayed step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub step: usize,
    pub predicted: Prediction,
    pub matched: bool,
    /// Position of the matched annotation in the step's valid set.
    pub matched_annotation: Option<usize>,
    pub is_open_step: bool,
    pub is_finish_step: bool,
    pub exchanges: Vec<ModelExchange>,
    pub reflection_flagged: bool,
    pub reflection_changed: bool,
    pub reflection_malformed: bool,
    /// Whether the pre-reflection prediction matched; set when reflection ran.
    pub original_matched: Option<bool>,
    pub history_fallback: bool,
    pub prompt_hash: Option<String>,
    pub raw_response: Option<String>,
    pub error: Option<String>,
}

impl StepOutcome {
    pub fn counts_without_open_finish(&self) -> bool {
        !(self.is_open_step || self.is_finish_step)
    }
}

/// One (task, run) replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub run: usize,
    pub outcomes: Vec<StepOutcome>,
    pub success: bool,
    pub success_wo_open_finish: bool,
    pub task_class: TaskClass,
    pub cost_usd: f64,
    pub est_latency_s: f64,
}

impl TaskResult {
    pub fn exchanges(&self) -> impl Iterator<Item = &ModelExchange> {
        self.outcomes.iter().flat_map(|o| o.exchanges.iter())
    }
}

type Screen = (Vec<u8>, Vec<u8>);

fn load_screens(task: &TaskRecord) -> Vec<Result<Screen, String>> {
    task.steps
        .iter()
        .map(|step| {
            let png = std::fs::read(task.screenshot_path(step))
                .map_err(|e| format!("{}: {e}", task.screenshot_path(step).display()))?;
            let xml =
                std::fs::read(task.a11y_path(step)).map_err(|e| format!("{}: {e}", task.a11y_path(step).display()))?;
            Ok((png, xml))
        })
        .collect()
}

fn input(screen: &Screen) -> ScreenInput<'_> {
    ScreenInput {
        png: &screen.0,
        xml: &screen.1,
    }
}

/// Replays one task along its default trajectory. Every step is scored,
/// including those after a miss, and history always advances with the
/// default action.
pub fn evaluate_task(
    agent: &mut dyn EndToEndAgent,
    task: &TaskRecord,
    run: usize,
    settings: &EvalSettings,
) -> Result<TaskResult, EvalError> {
    let screens = load_screens(task);
    let mut outcomes = Vec::with_capacity(task.steps.len());
    for (i, step) in task.steps.iter().enumerate() {
        let default = step.default_action();
        let kind = default.action.kind();
        let mut outcome = StepOutcome {
            step: step.index,
            predicted: Prediction::invalid("not evaluated"),
            matched: false,
            matched_annotation: None,
            is_open_step: kind == ActionKind::OpenApp,
            is_finish_step: kind == ActionKind::Finish,
            exchanges: Vec::new(),
            reflection_flagged: false,
            reflection_changed: false,
            reflection_malformed: false,
            original_matched: None,
            history_fallback: false,
            prompt_hash: None,
            raw_response: None,
            error: None,
        };
        let screen = match &screens[i] {
            Ok(s) => s,
            Err(e) => {
                outcome.predicted = Prediction::invalid("screen unavailable");
                outcome.error = Some(e.clone());
                outcomes.push(outcome);
                continue;
            }
        };
        let hint = ReplayHint {
            task_id: task.task_id.clone(),
            run,
            step: step.index,
            valid_actions: step.valid_actions.clone(),
        };
        let agent_step = AgentStep {
            goal: &task.goal,
            step: step.index,
            screen: input(screen),
            outcome_screen: screens.get(i + 1).and_then(|s| s.as_ref().ok()).map(input),
            reset: i == 0,
            replay: Some(&hint),
        };
        let turn = agent.act(&agent_step);
        let matched = match_in_mode(&turn.prediction, &step.valid_actions, &settings.policy, settings.mode);
        outcome.matched = matched.is_some();
        outcome.matched_annotation = matched;
        if let Some(r) = &turn.reflection {
            outcome.reflection_flagged = r.flagged();
            outcome.reflection_changed = r.changed;
            outcome.reflection_malformed = r.verdict == crate::agent::Verdict::Malformed;
            outcome.original_matched =
                Some(match_in_mode(&r.original, &step.valid_actions, &settings.policy, settings.mode).is_some());
        }
        let advanced = agent.advance(&agent_step, &default.action, &turn);
        outcome.predicted = turn.prediction;
        outcome.exchanges = turn.exchanges;
        outcome.exchanges.extend(advanced.exchanges);
        outcome.history_fallback = advanced.history_fallback;
        outcome.prompt_hash = turn.prompt_hash;
        outcome.raw_response = turn.raw_response;
        outcome.error = match (turn.error, advanced.error) {
            (Some(a), Some(b)) => Some(format!("{a}; {b}")),
            (a, b) => a.or(b),
        };
        outcomes.push(outcome);
    }
    let exchanges: Vec<ModelExchange> = outcomes.iter().flat_map(|o| o.exchanges.iter().cloned()).collect();
    let metrics_err = |source| EvalError::Metrics {
        task: task.task_id.clone(),
        source,
    };
    let cost_usd = cost_of(&exchanges, &settings.prices).map_err(metrics_err)?;
    let est_latency_s = estimate_latency(&exchanges, &settings.latency, settings.history).map_err(metrics_err)?;
    Ok(TaskResult {
        task_id: task.task_id.clone(),
        run,
        success: outcomes.iter().all(|o| o.matched),
        success_wo_open_finish: outcomes
            .iter()
            .filter(|o| o.counts_without_open_finish())
            .all(|o| o.matched),
        outcomes,
        task_class: classify_task(task),
        cost_usd,
        est_latency_s,
    })
}

/// Evaluates every (task, run) pair on up to `settings.workers` threads.
/// Each pair gets a fresh agent from `factory`. Results are reduced in
/// (task, run) order, so the report does not depend on scheduling. Setting
/// `cancel` stops handing out work; the report is then marked incomplete.
pub fn evaluate_run<F>(
    tasks: &[TaskRecord],
    factory: F,
    settings: &EvalSettings,
    cancel: Option<&AtomicBool>,
) -> Result<RunReport, EvalError>
where
    F: Fn(&TaskRecord, usize) -> Box<dyn EndToEndAgent> + Sync,
{
    if tasks.is_empty() {
        return Err(EvalError::EmptyTaskSet);
    }
    if settings.n_runs == 0 {
        return Err(EvalError::NoRuns);
    }
    let jobs: Vec<(usize, usize)> = (0..settings.n_runs)
        .flat_map(|run| (0..tasks.len()).map(move |t| (t, run)))
        .collect();
    let slots: Mutex<Vec<Option<Result<TaskResult, EvalError>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = settings.workers.clamp(1, jobs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if cancel.is_some_and(|c| c.load(Ordering::SeqCst)) {
                    break;
                }
                let j = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(t, run)) = jobs.get(j) else { break };
                let mut agent = factory(&tasks[t], run);
                let result = evaluate_task(agent.as_mut(), &tasks[t], run, settings);
                slots.lock().unwrap()[j] = Some(result);
            });
        }
    });
    let slots = slots.into_inner().unwrap();
    let complete = slots.iter().all(Option::is_some);
    let mut results = Vec::with_capacity(slots.len());
    for slot in slots.into_iter().flatten() {
        results.push(slot?);
    }
    // task-major order for the report
    results.sort_by(|a, b| {
        let ia = tasks.iter().position(|t| t.task_id == a.task_id);
        let ib = tasks.iter().position(|t| t.task_id == b.task_id);
        ia.cmp(&ib).then(a.run.cmp(&b.run))
    });
    Ok(RunReport::aggregate(tasks, results, settings, complete))
}
