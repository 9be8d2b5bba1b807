use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::client::{ModelClient, ModelError, ModelExchange, ModelRequest};
use super::history::{generate_history_entry, HistoryLog};
use super::parse::{parse_model_action, render_model_action};
use super::prompt::{assemble_with_feedback, reflection_prompt, PromptError};
use super::{AgentConfig, HistoryTechnique, Role};
use crate::dataset::{Action, AnnotatedAction, Prediction};
use crate::jsonscan;
use crate::screen::{build_observation, Annotator, ImagePolicy, IndexMap, ScreenObservation};

/// Ground truth for the current step. Only offline mock clients read it;
/// agents forward it untouched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayHint {
    pub task_id: String,
    pub run: usize,
    pub step: usize,
    pub valid_actions: Vec<AnnotatedAction>,
}

impl ReplayHint {
    pub fn default_action(&self) -> Option<&Action> {
        self.valid_actions.iter().find(|a| a.is_default).map(|a| &a.action)
    }
}

/// One recorded screen.
#[derive(Debug, Clone, Copy)]
pub struct ScreenInput<'a> {
    pub png: &'a [u8],
    pub xml: &'a [u8],
}

/// What the evaluator hands an agent at each step.
#[derive(Debug, Clone, Copy)]
pub struct AgentStep<'a> {
    pub goal: &'a str,
    pub step: usize,
    pub screen: ScreenInput<'a>,
    /// The next recorded screen of the default trajectory, if any.
    pub outcome_screen: Option<ScreenInput<'a>>,
    /// True on the first step of a task: drop any carried-over state.
    pub reset: bool,
    pub replay: Option<&'a ReplayHint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Incorrect { feedback: String },
    /// Unparseable reflector output; treated as correct.
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionOutcome {
    pub verdict: Verdict,
    pub original: Prediction,
    /// The re-prediction differs from the original.
    pub changed: bool,
}

impl ReflectionOutcome {
    pub fn flagged(&self) -> bool {
        matches!(self.verdict, Verdict::Incorrect { .. })
    }
}

/// Result of one agent step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDecision {
    pub prediction: Prediction,
    /// The actor response the prediction was parsed from.
    pub raw_response: String,
    pub prompt_hash: String,
    pub exchanges: Vec<ModelExchange>,
    pub reflection: Option<ReflectionOutcome>,
}

/// What any agent returns for a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTurn {
    pub prediction: Prediction,
    pub raw_response: Option<String>,
    pub prompt_hash: Option<String>,
    pub exchanges: Vec<ModelExchange>,
    pub reflection: Option<ReflectionOutcome>,
    pub error: Option<String>,
}

impl AgentTurn {
    pub fn action(action: Action) -> Self {
        Self {
            prediction: Prediction::Action(action),
            raw_response: None,
            prompt_hash: None,
            exchanges: Vec::new(),
            reflection: None,
            error: None,
        }
    }

    pub fn failed(error: impl Into<String>) -> Self {
        let error = error.into();
        Self {
            prediction: Prediction::invalid(error.clone()),
            raw_response: None,
            prompt_hash: None,
            exchanges: Vec::new(),
            reflection: None,
            error: Some(error),
        }
    }
}

impl From<StepDecision> for AgentTurn {
    fn from(d: StepDecision) -> Self {
        Self {
            prediction: d.prediction,
            raw_response: Some(d.raw_response),
            prompt_hash: Some(d.prompt_hash),
            exchanges: d.exchanges,
            reflection: d.reflection,
            error: None,
        }
    }
}

/// Calls made while moving past a step (history generation).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdvanceOutcome {
    pub exchanges: Vec<ModelExchange>,
    pub history_fallback: bool,
    pub error: Option<String>,
}

/// Any agent the evaluator can drive. State lives in the implementation
/// and is reset when `step.reset` is set.
pub trait EndToEndAgent: Send {
    fn act(&mut self, step: &AgentStep<'_>) -> AgentTurn;

    /// Called after every step with the action replay actually executed
    /// (always the default action).
    fn advance(&mut self, _step: &AgentStep<'_>, _executed: &Action, _turn: &AgentTurn) -> AdvanceOutcome {
        AdvanceOutcome::default()
    }
}

/// Finishes immediately, every step.
#[derive(Debug, Default, Clone, Copy)]
pub struct AlwaysFinishAgent;

impl EndToEndAgent for AlwaysFinishAgent {
    fn act(&mut self, _step: &AgentStep<'_>) -> AgentTurn {
        AgentTurn::action(Action::finish())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StepError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn parse_prediction(text: &str, index_map: &IndexMap) -> Prediction {
    match parse_model_action(text, index_map) {
        Ok(a) => Prediction::Action(a),
        Err(e) => Prediction::invalid(e.to_string()),
    }
}

/// Renders an action the way the model would have written it.
pub(crate) fn action_text(action: &Action, index_map: &IndexMap) -> String {
    render_model_action(action, index_map)
        .unwrap_or_else(|| action.to_json())
        .to_string()
}

fn prediction_text(prediction: &Prediction, raw: &str, index_map: &IndexMap) -> String {
    match prediction {
        Prediction::Action(a) => action_text(a, index_map),
        Prediction::Invalid { .. } => raw.to_owned(),
    }
}

#[allow(clippy::too_many_arguments)]
fn call_actor(
    config: &AgentConfig,
    goal: &str,
    observation: &ScreenObservation,
    history: &HistoryLog,
    client: &dyn ModelClient,
    hint: Option<&ReplayHint>,
    feedback: Option<&str>,
    attempt: u32,
) -> Result<(ModelExchange, Prediction), StepError> {
    let prompt = assemble_with_feedback(config, goal, observation, history, feedback)?;
    let model = config.model_for(Role::Actor);
    let completion = client.complete(&ModelRequest {
        role: Role::Actor,
        model,
        params: &config.model_params,
        prompt: &prompt,
        index_map: &observation.index_map,
        hint,
        attempt,
    })?;
    let prediction = parse_prediction(&completion.text, &observation.index_map);
    Ok((ModelExchange::new(Role::Actor, model, &prompt, completion), prediction))
}

fn parse_verdict(text: &str) -> Verdict {
    let Some(obj) = jsonscan::last_object(text) else {
        return Verdict::Malformed;
    };
    let correct = match obj.get("correct") {
        Some(Value::Bool(b)) => *b,
        Some(Value::String(s)) if s.eq_ignore_ascii_case("true") => true,
        Some(Value::String(s)) if s.eq_ignore_ascii_case("false") => false,
        _ => return Verdict::Malformed,
    };
    if correct {
        Verdict::Correct
    } else {
        let feedback = obj
            .get("feedback")
            .and_then(Value::as_str)
            .or_else(|| obj.get("explanation").and_then(Value::as_str))
            .unwrap_or("none")
            .to_owned();
        Verdict::Incorrect { feedback }
    }
}

/// One verify-then-repredict round. Returns the final prediction, the
/// reflection record and the exchanges made (reflector, then the
/// re-prediction when the verdict was negative).
#[allow(clippy::too_many_arguments)]
pub fn reflect_and_maybe_repredict(
    config: &AgentConfig,
    goal: &str,
    history: &HistoryLog,
    before: &ScreenObservation,
    prediction: &Prediction,
    raw_response: &str,
    after: &ScreenObservation,
    client: &dyn ModelClient,
    hint: Option<&ReplayHint>,
) -> Result<(Prediction, ReflectionOutcome, Vec<ModelExchange>, Option<String>), StepError> {
    let selected = prediction_text(prediction, raw_response, &before.index_map);
    let prompt = reflection_prompt(goal, history, before, &selected, after);
    let model = config.model_for(Role::Reflector);
    let completion = client.complete(&ModelRequest {
        role: Role::Reflector,
        model,
        params: &config.model_params,
        prompt: &prompt,
        index_map: &before.index_map,
        hint,
        attempt: 0,
    })?;
    let verdict = parse_verdict(&completion.text);
    let mut exchanges = vec![ModelExchange::new(Role::Reflector, model, &prompt, completion)];
    let Verdict::Incorrect { feedback } = &verdict else {
        return Ok((
            prediction.clone(),
            ReflectionOutcome {
                verdict,
                original: prediction.clone(),
                changed: false,
            },
            exchanges,
            None,
        ));
    };
    let (exchange, repredicted) = call_actor(config, goal, before, history, client, hint, Some(feedback), 1)?;
    let raw = exchange.response_text.clone();
    exchanges.push(exchange);
    let changed = &repredicted != prediction;
    Ok((
        repredicted,
        ReflectionOutcome {
            verdict,
            original: prediction.clone(),
            changed,
        },
        exchanges,
        Some(raw),
    ))
}

/// One actor call, plus a reflection round when enabled and the actor
/// produced a parseable action. `after` stands in for the executed outcome.
#[allow(clippy::too_many_arguments)]
pub fn step_agent(
    config: &AgentConfig,
    goal: &str,
    observation: &ScreenObservation,
    history: &HistoryLog,
    client: &dyn ModelClient,
    hint: Option<&ReplayHint>,
    after: Option<&ScreenObservation>,
) -> Result<StepDecision, StepError> {
    let (exchange, prediction) = call_actor(config, goal, observation, history, client, hint, None, 0)?;
    let mut decision = StepDecision {
        prediction,
        raw_response: exchange.response_text.clone(),
        prompt_hash: exchange.prompt_hash.clone(),
        exchanges: vec![exchange],
        reflection: None,
    };
    if config.reflection && decision.prediction.action().is_some() {
        let after = after.unwrap_or(observation);
        let (final_prediction, outcome, exchanges, raw) = reflect_and_maybe_repredict(
            config,
            goal,
            history,
            observation,
            &decision.prediction,
            &decision.raw_response,
            after,
            client,
            hint,
        )?;
        decision.prediction = final_prediction;
        if let Some(raw) = raw {
            decision.raw_response = raw;
        }
        decision.exchanges.extend(exchanges);
        decision.reflection = Some(outcome);
    }
    Ok(decision)
}

struct Pending {
    step: usize,
    observation: ScreenObservation,
    outcome: Option<ScreenObservation>,
}

/// The configurable agent, driven through [`EndToEndAgent`].
pub struct ModularAgent {
    config: AgentConfig,
    client: Arc<dyn ModelClient>,
    annotator: Option<Arc<dyn Annotator>>,
    policy: ImagePolicy,
    history: HistoryLog,
    pending: Option<Pending>,
}

impl ModularAgent {
    pub fn new(config: AgentConfig, client: Arc<dyn ModelClient>) -> Self {
        Self {
            config,
            client,
            annotator: None,
            policy: ImagePolicy::default(),
            history: HistoryLog::new(),
            pending: None,
        }
    }

    pub fn with_annotator(mut self, annotator: Arc<dyn Annotator>) -> Self {
        self.annotator = Some(annotator);
        self
    }

    pub fn with_image_policy(mut self, policy: ImagePolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn history(&self) -> &HistoryLog {
        &self.history
    }

    fn observe(&self, screen: &ScreenInput<'_>) -> Result<ScreenObservation, String> {
        build_observation(
            self.config.parser,
            screen.png,
            screen.xml,
            &self.policy,
            self.annotator.as_deref(),
        )
        .map_err(|e| e.to_string())
    }

    fn needs_outcome(&self) -> bool {
        self.config.reflection || self.config.history == HistoryTechnique::PostAction
    }
}

impl EndToEndAgent for ModularAgent {
    fn act(&mut self, step: &AgentStep<'_>) -> AgentTurn {
        if step.reset {
            self.history.clear();
        }
        self.pending = None;
        let observation = match self.observe(&step.screen) {
            Ok(o) => o,
            Err(e) => return AgentTurn::failed(format!("observation: {e}")),
        };
        let outcome = match (self.needs_outcome(), &step.outcome_screen) {
            (true, Some(screen)) => match self.observe(screen) {
                Ok(o) => Some(o),
                Err(e) => return AgentTurn::failed(format!("outcome observation: {e}")),
            },
            _ => None,
        };
        let result = step_agent(
            &self.config,
            step.goal,
            &observation,
            &self.history,
            &*self.client,
            step.replay,
            outcome.as_ref(),
        );
        self.pending = Some(Pending {
            step: step.step,
            observation,
            outcome,
        });
        match result {
            Ok(decision) => decision.into(),
            Err(e) => AgentTurn::failed(e.to_string()),
        }
    }

    fn advance(&mut self, step: &AgentStep<'_>, executed: &Action, turn: &AgentTurn) -> AdvanceOutcome {
        let pending = match self.pending.take() {
            Some(p) if p.step == step.step => p,
            _ => match self.observe(&step.screen) {
                Ok(observation) => Pending {
                    step: step.step,
                    observation,
                    outcome: None,
                },
                Err(e) => {
                    return AdvanceOutcome {
                        error: Some(format!("observation: {e}")),
                        ..Default::default()
                    }
                }
            },
        };
        let executed_text = action_text(executed, &pending.observation.index_map);
        // The raw trace is the actor's own response only when it is what
        // replay executed; otherwise the executed action stands in for it.
        let raw_trace = match (&turn.prediction, &turn.raw_response) {
            (Prediction::Action(a), Some(raw)) if a == executed => raw.clone(),
            _ => executed_text.clone(),
        };
        let after = if self.config.history == HistoryTechnique::PostAction {
            match pending.outcome {
                Some(o) => Some(o),
                None => match step.outcome_screen.as_ref().map(|s| self.observe(s)) {
                    Some(Ok(o)) => Some(o),
                    Some(Err(e)) => {
                        return AdvanceOutcome {
                            error: Some(format!("outcome observation: {e}")),
                            ..Default::default()
                        }
                    }
                    // Last step: nothing follows, so the screen is its own outcome.
                    None => Some(pending.observation.clone()),
                },
            }
        } else {
            None
        };
        let generated = generate_history_entry(
            &self.config,
            step.goal,
            &pending.observation,
            &executed_text,
            &raw_trace,
            after.as_ref(),
            &*self.client,
            step.replay,
        );
        match generated {
            Ok(entry) => {
                let mut outcome = AdvanceOutcome {
                    exchanges: entry.exchange.into_iter().collect(),
                    history_fallback: entry.fell_back,
                    error: None,
                };
                if let Err(e) = self.history.push(step.step, entry.text) {
                    outcome.error = Some(e.to_string());
                }
                outcome
            }
            Err(e) => AdvanceOutcome {
                error: Some(e.to_string()),
                ..Default::default()
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::ScriptedClient;
    use crate::dataset::ElementId;
    use crate::screen::ParserTechnique;

    fn obs() -> ScreenObservation {
        ScreenObservation {
            technique: ParserTechnique::A11yHtml,
            text_parts: vec![r#"<button id="0">OK</button>"#.into()],
            image_parts: Vec::new(),
            index_map: IndexMap::from_ids([ElementId::new("ok")]),
            scale: 1.0,
        }
    }

    fn ok() -> Action {
        Action::Click {
            target: ElementId::new("ok"),
        }
    }

    #[test]
    fn oracle_script_single_exchange() {
        let client = ScriptedClient::new();
        client.push(Role::Actor, r#"{"action type": "click", "index": 0}"#);
        let d = step_agent(&AgentConfig::simplest("m"), "g", &obs(), &HistoryLog::new(), &client, None, None).unwrap();
        assert_eq!(d.prediction, Prediction::Action(ok()));
        assert_eq!(d.exchanges.len(), 1);
    }

    #[test]
    fn malformed_text_is_invalid() {
        let client = ScriptedClient::new();
        client.push(Role::Actor, "I am not sure");
        let d = step_agent(&AgentConfig::simplest("m"), "g", &obs(), &HistoryLog::new(), &client, None, None).unwrap();
        assert!(matches!(d.prediction, Prediction::Invalid { .. }));
    }

    #[test]
    fn reflection_call_counts() {
        let mut config = AgentConfig::simplest("m");
        config.reflection = true;
        // verdict false: actor, reflector, actor
        let client = ScriptedClient::new();
        client
            .push(Role::Actor, r#"{"action type": "click", "index": 0}"#)
            .push(Role::Reflector, r#"{"correct": false, "explanation": "x", "feedback": "go back"}"#)
            .push(Role::Actor, r#"{"action type": "navigate back"}"#);
        let d = step_agent(&config, "g", &obs(), &HistoryLog::new(), &client, None, None).unwrap();
        let roles: Vec<Role> = d.exchanges.iter().map(|e| e.role).collect();
        assert_eq!(roles, [Role::Actor, Role::Reflector, Role::Actor]);
        assert_eq!(d.prediction, Prediction::Action(Action::NavigateBack));
        let r = d.reflection.unwrap();
        assert!(r.flagged() && r.changed);
        assert!(client.requests()[2].1.text().contains("Feedback: go back"));

        // verdict true: no second actor call
        let client = ScriptedClient::new();
        client
            .push(Role::Actor, r#"{"action type": "click", "index": 0}"#)
            .push(Role::Reflector, r#"{"correct": true, "explanation": "fine", "feedback": "none"}"#);
        let d = step_agent(&config, "g", &obs(), &HistoryLog::new(), &client, None, None).unwrap();
        assert_eq!(d.exchanges.len(), 2);
        assert_eq!(d.prediction, Prediction::Action(ok()));

        // malformed verdict keeps the action and is flagged as such
        let client = ScriptedClient::new();
        client
            .push(Role::Actor, r#"{"action type": "click", "index": 0}"#)
            .push(Role::Reflector, "not json");
        let d = step_agent(&config, "g", &obs(), &HistoryLog::new(), &client, None, None).unwrap();
        assert_eq!(d.prediction, Prediction::Action(ok()));
        assert_eq!(d.reflection.unwrap().verdict, Verdict::Malformed);
    }

    #[test]
    fn verdict_parsing() {
        assert_eq!(parse_verdict(r#"Verification result: {"correct": "True"}"#), Verdict::Correct);
        assert_eq!(
            parse_verdict(r#"{"correct": false, "explanation": "e"}"#),
            Verdict::Incorrect { feedback: "e".into() }
        );
        assert_eq!(parse_verdict(r#"{"explanation": "e"}"#), Verdict::Malformed);
    }
}
