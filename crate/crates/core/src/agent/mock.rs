use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::client::{estimate_prompt_tokens, estimate_tokens, Completion, ModelClient, ModelError, ModelRequest};
use super::modular::ReplayHint;
use super::parse::render_model_action;
use super::prompt::ExpectedResponse;
use super::Role;
use crate::dataset::{Action, Direction};
use crate::screen::IndexMap;

/// How the offline actor picks its answer from the replay hint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum MockPolicy {
    /// Always the default action.
    Oracle,
    /// The first non-default valid action, else the default.
    AltPath,
    /// Oracle, except that with probability `p` it emits a well-formed
    /// action outside the valid set.
    Noisy { p: f64 },
    /// Uniform over every action the screen allows.
    Random,
    AlwaysFinish,
    /// Prose without any JSON.
    Malformed,
}

impl MockPolicy {
    /// `oracle`, `alt_path`, `random`, `always_finish`, `malformed`, `noisy:0.1`.
    pub fn parse(raw: &str) -> Option<Self> {
        let raw = raw.trim();
        if let Some(p) = raw.strip_prefix("noisy:") {
            let p: f64 = p.parse().ok()?;
            return (0.0..=1.0).contains(&p).then_some(MockPolicy::Noisy { p });
        }
        Some(match raw {
            "oracle" => MockPolicy::Oracle,
            "alt_path" => MockPolicy::AltPath,
            "random" => MockPolicy::Random,
            "always_finish" => MockPolicy::AlwaysFinish,
            "malformed" => MockPolicy::Malformed,
            _ => return None,
        })
    }
}

/// Deterministic offline model for every role. Answers depend only on the
/// policy, the seed and the request coordinates, never on call order, so
/// parallel runs reproduce byte for byte.
#[derive(Debug, Clone)]
pub struct ReplayMockClient {
    policy: MockPolicy,
    seed: u64,
    reflector_flag_rate: f64,
}

const REASONING_BUDGET: [(&str, u64); 3] = [("low", 64), ("medium", 256), ("high", 1024)];

impl ReplayMockClient {
    pub fn new(policy: MockPolicy, seed: u64) -> Self {
        Self {
            policy,
            seed,
            reflector_flag_rate: 0.0,
        }
    }

    /// Probability that the reflector calls an action wrong.
    pub fn with_reflector_flag_rate(mut self, rate: f64) -> Self {
        self.reflector_flag_rate = rate.clamp(0.0, 1.0);
        self
    }

    pub fn policy(&self) -> MockPolicy {
        self.policy
    }

    fn rng(&self, request: &ModelRequest<'_>, hint: &ReplayHint) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(hint.task_id.as_bytes());
        h.update([0]);
        h.update((hint.run as u64).to_le_bytes());
        h.update((hint.step as u64).to_le_bytes());
        h.update(request.role.as_str().as_bytes());
        h.update(request.attempt.to_le_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    fn actor_action(&self, hint: &ReplayHint, index_map: &IndexMap, rng: &mut ChaCha8Rng) -> Option<Action> {
        let default = hint.default_action().cloned().unwrap_or_else(Action::finish);
        Some(match self.policy {
            MockPolicy::Oracle => default,
            MockPolicy::AltPath => hint
                .valid_actions
                .iter()
                .find(|a| !a.is_default)
                .map_or(default, |a| a.action.clone()),
            MockPolicy::Noisy { p } => {
                if rng.random::<f64>() < p {
                    off_path(hint)
                } else {
                    default
                }
            }
            MockPolicy::Random => {
                let mut options: Vec<Action> = index_map
                    .iter()
                    .map(|(_, id)| Action::Click { target: id.clone() })
                    .collect();
                options.extend(
                    [Direction::Up, Direction::Down, Direction::Left, Direction::Right]
                        .map(|direction| Action::Scroll { direction }),
                );
                options.push(Action::NavigateBack);
                options.push(Action::finish());
                options.swap_remove(rng.random_range(0..options.len()))
            }
            MockPolicy::AlwaysFinish => Action::finish(),
            MockPolicy::Malformed => return None,
        })
    }

    fn actor_text(&self, request: &ModelRequest<'_>, hint: &ReplayHint, rng: &mut ChaCha8Rng) -> String {
        let Some(action) = self.actor_action(hint, request.index_map, rng) else {
            return "I am not sure what to do on this screen.".to_owned();
        };
        let json = render_model_action(&action, request.index_map)
            .unwrap_or_else(|| unlocatable(&action, request.index_map));
        match request.prompt.expected_response {
            ExpectedResponse::ReactThenAction => {
                format!("Thought: this screen shows the next step toward the goal.\nAction: {json}")
            }
            _ => json.to_string(),
        }
    }

    fn candidates_text(&self, request: &ModelRequest<'_>, hint: &ReplayHint) -> String {
        let list: Vec<Value> = hint
            .valid_actions
            .iter()
            .filter(|a| !a.is_default)
            .filter_map(|a| render_model_action(&a.action, request.index_map))
            .collect();
        Value::Array(list).to_string()
    }
}

/// A well-formed action that matches nothing in the valid set.
fn off_path(hint: &ReplayHint) -> Action {
    let taken = |a: &Action| hint.valid_actions.iter().any(|v| &v.action == a);
    let mut options = vec![Action::NavigateBack];
    options.extend(
        [Direction::Down, Direction::Up, Direction::Left, Direction::Right].map(|direction| Action::Scroll { direction }),
    );
    options
        .into_iter()
        .find(|a| !taken(a))
        .unwrap_or(Action::OpenApp {
            app_name: "__none__".to_owned(),
        })
}

/// The target is not indexed for this parser: point one past the end, as a
/// model guessing blindly would.
fn unlocatable(action: &Action, index_map: &IndexMap) -> Value {
    let mut value = json!({"action type": action.kind().wire_name(), "index": index_map.index_limit()});
    if let Action::Input { text, .. } = action {
        value["params"] = json!({ "text": text });
    }
    value
}

impl ModelClient for ReplayMockClient {
    fn complete(&self, request: &ModelRequest<'_>) -> Result<Completion, ModelError> {
        let hint = request
            .hint
            .ok_or_else(|| ModelError::Malformed("the replay mock needs a replay hint".into()))?;
        let mut rng = self.rng(request, hint);
        let text = match request.role {
            Role::Actor => self.actor_text(request, hint, &mut rng),
            Role::Summarizer => format!(
                "Step {}: carried out the planned action for task {}.",
                hint.step + 1,
                hint.task_id
            ),
            Role::Reflector => {
                if rng.random::<f64>() < self.reflector_flag_rate {
                    json!({"correct": false, "explanation": "The action does not move toward the goal.", "feedback": "Reconsider the visible elements."}).to_string()
                } else {
                    json!({"correct": true, "explanation": "The action moves toward the goal.", "feedback": "none"}).to_string()
                }
            }
            Role::CandidateGenerator => self.candidates_text(request, hint),
        };
        let reasoning_tokens = request
            .params
            .get("reasoning_effort")
            .and_then(Value::as_str)
            .and_then(|e| REASONING_BUDGET.iter().find(|(k, _)| *k == e))
            .map_or(0, |(_, n)| *n);
        let tokens_out = estimate_tokens(&text);
        Ok(Completion {
            tokens_in: estimate_prompt_tokens(request.prompt),
            tokens_out,
            reasoning_tokens,
            wall_time_s: 0.5 + (tokens_out + reasoning_tokens) as f64 / 60.0,
            text,
        })
    }
}
