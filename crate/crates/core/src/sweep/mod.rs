//! Incremental tuning: start from the simplest technique in every slot,
//! tune one slot at a time in a fixed order and freeze each winner.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::agent::{AgentConfig, Exemplar, HistoryTechnique, InferenceStyle};
use crate::eval::RunReport;
use crate::metrics::EfficiencyPoint;
use crate::screen::ParserTechnique;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Parser,
    History,
    Inference,
    Reflection,
}

impl Slot {
    pub const ALL: [Slot; 4] = [Slot::Parser, Slot::History, Slot::Inference, Slot::Reflection];

    pub fn as_str(self) -> &'static str {
        match self {
            Slot::Parser => "parser",
            Slot::History => "history",
            Slot::Inference => "inference",
            Slot::Reflection => "reflection",
        }
    }

    /// Row-group heading in the table.
    pub fn title(self) -> &'static str {
        match self {
            Slot::Parser => "Screen Parser",
            Slot::History => "History Generator",
            Slot::Inference => "Inference Style",
            Slot::Reflection => "Reflection",
        }
    }

    /// Parses a technique name belonging to this slot.
    pub fn choice(self, raw: &str) -> Option<Choice> {
        match self {
            Slot::Parser => ParserTechnique::parse(raw).map(Choice::Parser),
            Slot::History => HistoryTechnique::parse(raw).map(Choice::History),
            Slot::Inference => InferenceStyle::parse(raw).map(Choice::Inference),
            Slot::Reflection => match raw.trim() {
                "reflection" | "on" | "true" => Some(Choice::Reflection(true)),
                "no_reflection" | "off" | "false" => Some(Choice::Reflection(false)),
                _ => None,
            },
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One technique for one slot. Serialized as its name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Choice {
    Parser(ParserTechnique),
    History(HistoryTechnique),
    Inference(InferenceStyle),
    Reflection(bool),
}

impl Choice {
    pub fn slot(self) -> Slot {
        match self {
            Choice::Parser(_) => Slot::Parser,
            Choice::History(_) => Slot::History,
            Choice::Inference(_) => Slot::Inference,
            Choice::Reflection(_) => Slot::Reflection,
        }
    }

    /// The technique `config` uses in `slot`.
    pub fn of(config: &AgentConfig, slot: Slot) -> Choice {
        match slot {
            Slot::Parser => Choice::Parser(config.parser),
            Slot::History => Choice::History(config.history),
            Slot::Inference => Choice::Inference(config.inference),
            Slot::Reflection => Choice::Reflection(config.reflection),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Choice::Parser(p) => p.as_str(),
            Choice::History(h) => h.as_str(),
            Choice::Inference(i) => i.as_str(),
            Choice::Reflection(true) => "reflection",
            Choice::Reflection(false) => "no_reflection",
        }
    }

    /// Sets the slot; exemplars follow the inference style.
    pub fn apply(self, config: &mut AgentConfig, exemplars: &[Exemplar]) {
        match self {
            Choice::Parser(p) => config.parser = p,
            Choice::History(h) => config.history = h,
            Choice::Inference(i) => {
                config.inference = i;
                config.few_shot_exemplars = if i == InferenceStyle::FewShot {
                    exemplars.to_vec()
                } else {
                    Vec::new()
                };
            }
            Choice::Reflection(r) => config.reflection = r,
        }
    }

    /// Parses any technique name, trying every slot.
    pub fn parse(raw: &str) -> Option<Choice> {
        Slot::ALL.into_iter().find_map(|s| s.choice(raw))
    }
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Choice {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Choice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Choice::parse(&raw).ok_or_else(|| serde::de::Error::custom(format!("unknown technique {raw:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    #[default]
    Tsr,
    ActionAccuracy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    LowerCost,
    FirstListed,
}

/// The protocol parameters of one sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    /// Model roles and parameters shared by every configuration.
    pub base: AgentConfig,
    #[serde(default = "default_order")]
    pub module_order: Vec<Slot>,
    pub candidates: BTreeMap<Slot, Vec<Choice>>,
    /// Starting technique per slot; the first candidate when absent.
    #[serde(default)]
    pub defaults: BTreeMap<Slot, Choice>,
    #[serde(default)]
    pub selection_metric: SelectionMetric,
    #[serde(default)]
    pub tie_break: TieBreak,
    /// Used whenever few-shot inference is selected.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exemplar_pool: Vec<Exemplar>,
}

fn default_order() -> Vec<Slot> {
    Slot::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("module order must list each of the four slots once")]
    BadOrder,
    #[error("slot {0} has no candidates")]
    NoCandidates(Slot),
    #[error("candidate {choice} listed under slot {slot}")]
    WrongSlot { slot: Slot, choice: Choice },
    #[error("default {choice} for slot {slot} is not among its candidates")]
    DefaultNotCandidate { slot: Slot, choice: Choice },
    #[error("few_shot is a candidate but the exemplar pool is empty")]
    NoExemplars,
    #[error("grid of {size} configurations exceeds the cap of {cap}")]
    GridTooLarge { size: usize, cap: usize },
}

impl SweepPlan {
    /// Table-4 order and defaults: a11y HTML, raw trace, action only, no
    /// reflection, every technique a candidate.
    pub fn standard(base: AgentConfig, exemplar_pool: Vec<Exemplar>) -> Self {
        let candidates = BTreeMap::from([
            (Slot::Parser, ParserTechnique::ALL.map(Choice::Parser).to_vec()),
            (Slot::History, HistoryTechnique::ALL.map(Choice::History).to_vec()),
            (Slot::Inference, InferenceStyle::ALL.map(Choice::Inference).to_vec()),
            (Slot::Reflection, vec![Choice::Reflection(false), Choice::Reflection(true)]),
        ]);
        Self {
            base,
            module_order: default_order(),
            candidates,
            defaults: BTreeMap::new(),
            selection_metric: SelectionMetric::Tsr,
            tie_break: TieBreak::LowerCost,
            exemplar_pool,
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let mut order = self.module_order.clone();
        order.sort();
        if order != Slot::ALL {
            return Err(PlanError::BadOrder);
        }
        for slot in Slot::ALL {
            let list = self.candidates.get(&slot).filter(|l| !l.is_empty());
            let list = list.ok_or(PlanError::NoCandidates(slot))?;
            if let Some(&choice) = list.iter().find(|c| c.slot() != slot) {
                return Err(PlanError::WrongSlot { slot, choice });
            }
            if let Some(&choice) = self.defaults.get(&slot) {
                if !list.contains(&choice) {
                    return Err(PlanError::DefaultNotCandidate { slot, choice });
                }
            }
            if list.contains(&Choice::Inference(InferenceStyle::FewShot)) && self.exemplar_pool.is_empty() {
                return Err(PlanError::NoExemplars);
            }
        }
        Ok(())
    }

    fn candidates_for(&self, slot: Slot) -> &[Choice] {
        self.candidates.get(&slot).map_or(&[], Vec::as_slice)
    }

    pub fn default_for(&self, slot: Slot) -> Choice {
        self.defaults
            .get(&slot)
            .copied()
            .unwrap_or_else(|| self.candidates_for(slot)[0])
    }

    /// The base configuration with every slot at its default.
    pub fn starting_config(&self) -> AgentConfig {
        let mut config = self.base.clone();
        for slot in Slot::ALL {
            self.default_for(slot).apply(&mut config, &self.exemplar_pool);
        }
        config
    }

    /// Σ|candidates|, the number of trace entries an incremental sweep makes.
    pub fn incremental_size(&self) -> usize {
        Slot::ALL.iter().map(|s| self.candidates_for(*s).len()).sum()
    }

    /// Π|candidates|.
    pub fn grid_size(&self) -> usize {
        Slot::ALL.iter().map(|s| self.candidates_for(*s).len()).product()
    }
}

/// The numbers a sweep compares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub action_accuracy: f64,
    pub tsr: f64,
    pub cost_per_task_usd: f64,
    pub est_latency_per_task_s: f64,
}

impl From<&RunReport> for Summary {
    fn from(r: &RunReport) -> Self {
        Self {
            action_accuracy: r.action_accuracy,
            tsr: r.tsr,
            cost_per_task_usd: r.totals.cost_per_task_usd,
            est_latency_per_task_s: r.totals.est_latency_per_task_s,
        }
    }
}

impl Summary {
    fn metric(&self, m: SelectionMetric) -> f64 {
        match m {
            SelectionMetric::Tsr => self.tsr,
            SelectionMetric::ActionAccuracy => self.action_accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub slot: Slot,
    pub choice: Choice,
    pub config: AgentConfig,
    pub summary: Summary,
    /// Result reused from an identical earlier configuration.
    pub reused: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub trace: Vec<TraceEntry>,
    pub winners: Vec<(Slot, Choice)>,
    pub final_config: AgentConfig,
    /// Calls actually made to the evaluator (reuse excluded).
    pub evaluations: usize,
    pub selection_metric: SelectionMetric,
}

impl SweepResult {
    pub fn winner(&self, slot: Slot) -> Option<Choice> {
        self.winners.iter().find(|(s, _)| *s == slot).map(|(_, c)| *c)
    }

    /// One point per distinct configuration in the trace.
    pub fn efficiency_points(&self) -> Vec<EfficiencyPoint> {
        let mut seen = std::collections::HashSet::new();
        self.trace
            .iter()
            .filter(|e| seen.insert(e.config.label()))
            .map(|e| EfficiencyPoint {
                label: e.config.label(),
                tsr: e.summary.tsr,
                cost_per_task_usd: e.summary.cost_per_task_usd,
                est_latency_per_task_s: e.summary.est_latency_per_task_s,
            })
            .collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("evaluation of {config} failed: {message}")]
    Evaluate {
        config: String,
        message: String,
        /// Everything evaluated before the failure.
        partial: Box<SweepResult>,
    },
}

fn config_key(config: &AgentConfig) -> String {
    serde_json::to_string(config).expect("configs serialize")
}

/// Strictly better under the plan's metric and tie rule.
fn better(plan: &SweepPlan, a: &Summary, b: &Summary) -> bool {
    let (ma, mb) = (a.metric(plan.selection_metric), b.metric(plan.selection_metric));
    if ma != mb {
        return ma > mb;
    }
    plan.tie_break == TieBreak::LowerCost && a.cost_per_task_usd < b.cost_per_task_usd
}

/// Tunes slots in `plan.module_order`. Later slots sit at their defaults
/// while earlier slots hold their winners. A configuration that has already
/// been evaluated (the carried-over winner) is reused, not re-run.
pub fn incremental_sweep<F, E>(plan: &SweepPlan, mut evaluate: F) -> Result<SweepResult, SweepError>
where
    F: FnMut(&AgentConfig) -> Result<Summary, E>,
    E: fmt::Display,
{
    plan.validate()?;
    let mut current = plan.starting_config();
    let mut cache: HashMap<String, Summary> = HashMap::new();
    let mut result = SweepResult {
        trace: Vec::new(),
        winners: Vec::new(),
        final_config: current.clone(),
        evaluations: 0,
        selection_metric: plan.selection_metric,
    };
    for &slot in &plan.module_order {
        let mut best: Option<(Choice, Summary)> = None;
        for &choice in plan.candidates_for(slot) {
            let mut config = current.clone();
            choice.apply(&mut config, &plan.exemplar_pool);
            let key = config_key(&config);
            let (summary, reused) = match cache.get(&key) {
                Some(s) => (*s, true),
                None => match evaluate(&config) {
                    Ok(s) => {
                        result.evaluations += 1;
                        cache.insert(key, s);
                        (s, false)
                    }
                    Err(e) => {
                        result.final_config = current;
                        return Err(SweepError::Evaluate {
                            config: config.label(),
                            message: e.to_string(),
                            partial: Box::new(result),
                        });
                    }
                },
            };
            result.trace.push(TraceEntry {
                slot,
                choice,
                config,
                summary,
                reused,
            });
            if best.as_ref().is_none_or(|(_, b)| better(plan, &summary, b)) {
                best = Some((choice, summary));
            }
        }
        let (winner, _) = best.expect("validated plans have candidates");
        winner.apply(&mut current, &plan.exemplar_pool);
        result.winners.push((slot, winner));
    }
    result.final_config = current;
    Ok(result)
}

/// Every combination, in slot-major order of `module_order`.
pub fn full_grid<F, E>(plan: &SweepPlan, cap: usize, mut evaluate: F) -> Result<Vec<(AgentConfig, Summary)>, SweepError>
where
    F: FnMut(&AgentConfig) -> Result<Summary, E>,
    E: fmt::Display,
{
    plan.validate()?;
    let size = plan.grid_size();
    if size > cap {
        return Err(PlanError::GridTooLarge { size, cap }.into());
    }
    let mut configs = vec![plan.base.clone()];
    for &slot in &plan.module_order {
        configs = configs
            .into_iter()
            .flat_map(|c| {
                plan.candidates_for(slot).iter().map(move |choice| {
                    let mut next = c.clone();
                    choice.apply(&mut next, &plan.exemplar_pool);
                    next
                })
            })
            .collect();
    }
    let mut out = Vec::with_capacity(configs.len());
    for config in configs {
        match evaluate(&config) {
            Ok(s) => out.push((config, s)),
            Err(e) => {
                return Err(SweepError::Evaluate {
                    config: config.label(),
                    message: e.to_string(),
                    partial: Box::new(SweepResult {
                        trace: Vec::new(),
                        winners: Vec::new(),
                        final_config: config,
                        evaluations: out.len(),
                        selection_metric: plan.selection_metric,
                    }),
                })
            }
        }
    }
    Ok(out)
}

/// The best grid entry under the plan's metric and tie rule; the first of
/// equals wins.
pub fn grid_argmax<'a>(plan: &SweepPlan, grid: &'a [(AgentConfig, Summary)]) -> Option<&'a (AgentConfig, Summary)> {
    grid.iter()
        .fold(None, |best: Option<&(AgentConfig, Summary)>, e| match best {
            Some(b) if !better(plan, &e.1, &b.1) => Some(b),
            _ => Some(e),
        })
}

fn pct(x: f64) -> String {
    format!("{:.2}%", x * 100.0)
}

/// Rows grouped by slot with A.Acc, Cost, TSR and a Best column holding a
/// check mark for each slot's winner.
pub fn emit_table(result: &SweepResult) -> String {
    let header = ["Module", "Technique", "A.Acc", "Cost", "TSR", "Best"].map(String::from);
    let mut rows: Vec<[String; 6]> = vec![header];
    let mut group_starts = Vec::new();
    let mut slots: Vec<Slot> = Vec::new();
    for e in &result.trace {
        if !slots.contains(&e.slot) {
            slots.push(e.slot);
        }
    }
    for slot in slots {
        group_starts.push(rows.len());
        let winner = result.winner(slot);
        for (i, e) in result.trace.iter().filter(|e| e.slot == slot).enumerate() {
            rows.push([
                if i == 0 { slot.title().to_owned() } else { String::new() },
                e.choice.name().to_owned(),
                pct(e.summary.action_accuracy),
                format!("${:.4}", e.summary.cost_per_task_usd),
                pct(e.summary.tsr),
                if winner == Some(e.choice) { "✓".into() } else { String::new() },
            ]);
        }
    }
    let widths: Vec<usize> = (0..6)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let total: usize = widths.iter().sum::<usize>() + 2 * 5;
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        if i == 1 || group_starts.contains(&i) {
            let _ = writeln!(out, "{}", "-".repeat(total));
        }
        let mut line = String::new();
        for c in 0..6 {
            let pad = widths[c] - r[c].chars().count();
            if (2..=4).contains(&c) {
                line.push_str(&" ".repeat(pad));
                line.push_str(&r[c]);
            } else {
                line.push_str(&r[c]);
                line.push_str(&" ".repeat(pad));
            }
            if c < 5 {
                line.push_str("  ");
            }
        }
        let _ = writeln!(out, "{}", line.trim_end());
    }
    out
}

pub fn sweep_json(result: &SweepResult) -> String {
    serde_json::to_string_pretty(result).expect("sweep results serialize")
}
