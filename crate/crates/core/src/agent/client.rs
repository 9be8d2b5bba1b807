use std::collections::{BTreeMap, VecDeque};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::modular::ReplayHint;
use super::prompt::{PromptBundle, UserPart};
use super::Role;
use crate::screen::IndexMap;

/// Everything a client sees for one call. `index_map` and `hint` exist for
/// the offline mocks; real providers ignore them.
#[derive(Debug, Clone, Copy)]
pub struct ModelRequest<'a> {
    pub role: Role,
    pub model: &'a str,
    pub params: &'a BTreeMap<String, Value>,
    pub prompt: &'a PromptBundle,
    pub index_map: &'a IndexMap,
    pub hint: Option<&'a ReplayHint>,
    /// 0 for the first actor call of a step, 1 for a re-prediction.
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub reasoning_tokens: u64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("model transport failure: {0}")]
    Transport(String),
    #[error("model call timed out")]
    Timeout,
    #[error("provider returned HTTP {0}")]
    Status(u16),
    #[error("unreadable provider response: {0}")]
    Malformed(String),
    #[error("scripted client has no response left for {0}")]
    Exhausted(&'static str),
}

/// The seam between the agent and a model provider.
pub trait ModelClient: Send + Sync {
    fn complete(&self, request: &ModelRequest<'_>) -> Result<Completion, ModelError>;
}

/// Ledger entry for one model call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelExchange {
    pub role: Role,
    pub model: String,
    /// sha256 of the serialized prompt bundle.
    pub prompt_hash: String,
    pub response_text: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub reasoning_tokens: u64,
    pub wall_time_s: f64,
}

impl ModelExchange {
    pub fn new(role: Role, model: &str, prompt: &PromptBundle, completion: Completion) -> Self {
        Self {
            role,
            model: model.to_owned(),
            prompt_hash: prompt_hash(prompt),
            response_text: completion.text,
            tokens_in: completion.tokens_in,
            tokens_out: completion.tokens_out,
            reasoning_tokens: completion.reasoning_tokens,
            wall_time_s: completion.wall_time_s.max(0.0),
        }
    }
}

pub fn prompt_hash(prompt: &PromptBundle) -> String {
    let bytes = serde_json::to_vec(prompt).expect("prompt bundles serialize");
    hex::encode(Sha256::digest(bytes))
}

/// Rough token count used by the offline clients: four characters per
/// token, a flat 765 per image.
pub(crate) fn estimate_prompt_tokens(prompt: &PromptBundle) -> u64 {
    let mut tokens = estimate_tokens(&prompt.system_text);
    for part in &prompt.user_parts {
        tokens += match part {
            UserPart::Text(t) => estimate_tokens(t),
            UserPart::Image(_) => 765,
        };
    }
    tokens
}

pub(crate) fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// Replies from per-role queues, in order. Records every request it serves.
#[derive(Debug, Default)]
pub struct ScriptedClient {
    queues: Mutex<BTreeMap<Role, VecDeque<Result<String, ModelError>>>>,
    seen: Mutex<Vec<(Role, PromptBundle)>>,
}

impl ScriptedClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, role: Role, text: impl Into<String>) -> &Self {
        self.queues
            .lock()
            .unwrap()
            .entry(role)
            .or_default()
            .push_back(Ok(text.into()));
        self
    }

    pub fn push_error(&self, role: Role, error: ModelError) -> &Self {
        self.queues.lock().unwrap().entry(role).or_default().push_back(Err(error));
        self
    }

    pub fn requests(&self) -> Vec<(Role, PromptBundle)> {
        self.seen.lock().unwrap().clone()
    }

    pub fn remaining(&self, role: Role) -> usize {
        self.queues.lock().unwrap().get(&role).map_or(0, VecDeque::len)
    }
}

impl ModelClient for ScriptedClient {
    fn complete(&self, request: &ModelRequest<'_>) -> Result<Completion, ModelError> {
        self.seen.lock().unwrap().push((request.role, request.prompt.clone()));
        let next = self
            .queues
            .lock()
            .unwrap()
            .get_mut(&request.role)
            .and_then(VecDeque::pop_front)
            .ok_or(ModelError::Exhausted(request.role.as_str()))?;
        let text = next?;
        Ok(Completion {
            tokens_in: estimate_prompt_tokens(request.prompt),
            tokens_out: estimate_tokens(&text),
            reasoning_tokens: 0,
            wall_time_s: 0.0,
            text,
        })
    }
}

/// Bounded number of concurrent calls.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn acquire(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// Client for any chat-completions style endpoint.
#[derive(Debug)]
pub struct OpenAiCompatClient {
    base_url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    gate: Gate,
}

impl OpenAiCompatClient {
    pub fn new(base_url: &str, api_key: Option<String>, max_in_flight: usize, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            base_url: base_url.trim_end_matches('/').to_owned(),
            api_key,
            agent,
            gate: Gate {
                free: Mutex::new(max_in_flight.max(1)),
                cv: Condvar::new(),
            },
        }
    }

    /// Reads `MODEL_BASE_URL` (default `https://api.openai.com/v1`) and
    /// `MODEL_API_KEY`.
    pub fn from_env(max_in_flight: usize, timeout: Duration) -> Self {
        let base = std::env::var("MODEL_BASE_URL").unwrap_or_else(|_| "https://api.openai.com/v1".into());
        Self::new(&base, std::env::var("MODEL_API_KEY").ok(), max_in_flight, timeout)
    }

    pub(crate) fn request_body(request: &ModelRequest<'_>) -> Value {
        let mut messages = Vec::new();
        if !request.prompt.system_text.is_empty() {
            messages.push(json!({"role": "system", "content": request.prompt.system_text}));
        }
        let content: Vec<Value> = request
            .prompt
            .user_parts
            .iter()
            .map(|part| match part {
                UserPart::Text(t) => json!({"type": "text", "text": t}),
                UserPart::Image(img) => json!({"type": "image_url", "image_url": {"url": img.data_url()}}),
            })
            .collect();
        messages.push(json!({"role": "user", "content": content}));
        let mut body = json!({"model": request.model, "messages": messages});
        for (k, v) in request.params {
            body[k] = v.clone();
        }
        body
    }
}

impl ModelClient for OpenAiCompatClient {
    fn complete(&self, request: &ModelRequest<'_>) -> Result<Completion, ModelError> {
        let _slot = self.gate.acquire();
        let started = Instant::now();
        let mut call = self.agent.post(&format!("{}/chat/completions", self.base_url));
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call.send_json(Self::request_body(request)).map_err(|e| match e {
            ureq::Error::StatusCode(code) => ModelError::Status(code),
            ureq::Error::Timeout(_) => ModelError::Timeout,
            other => ModelError::Transport(other.to_string()),
        })?;
        let value: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| ModelError::Malformed(e.to_string()))?;
        let wall_time_s = started.elapsed().as_secs_f64();
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| ModelError::Malformed("no choices[0].message.content".into()))?
            .to_owned();
        let count = |ptr: &str| value.pointer(ptr).and_then(Value::as_u64).unwrap_or(0);
        let completion = count("/usage/completion_tokens");
        let reasoning = count("/usage/completion_tokens_details/reasoning_tokens");
        Ok(Completion {
            text,
            tokens_in: count("/usage/prompt_tokens"),
            tokens_out: completion.saturating_sub(reasoning),
            reasoning_tokens: reasoning,
            wall_time_s,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::ExpectedResponse;

    fn bundle(text: &str) -> PromptBundle {
        PromptBundle {
            system_text: String::new(),
            user_parts: vec![UserPart::Text(text.into())],
            expected_response: ExpectedResponse::ActionJson,
        }
    }

    #[test]
    fn scripted_queues_per_role() {
        let client = ScriptedClient::new();
        client.push(Role::Actor, "a1").push(Role::Actor, "a2").push(Role::Summarizer, "s");
        let params = BTreeMap::new();
        let map = IndexMap::new();
        let prompt = bundle("hello world!");
        let req = |role| ModelRequest {
            role,
            model: "m",
            params: &params,
            prompt: &prompt,
            index_map: &map,
            hint: None,
            attempt: 0,
        };
        assert_eq!(client.complete(&req(Role::Actor)).unwrap().text, "a1");
        assert_eq!(client.complete(&req(Role::Summarizer)).unwrap().text, "s");
        let c = client.complete(&req(Role::Actor)).unwrap();
        assert_eq!((c.text.as_str(), c.tokens_in, c.tokens_out), ("a2", 3, 1));
        assert_eq!(client.complete(&req(Role::Actor)), Err(ModelError::Exhausted("actor")));
        assert_eq!(client.requests().len(), 4);
    }

    #[test]
    fn request_body_shape() {
        let params = BTreeMap::from([("reasoning_effort".to_owned(), json!("low"))]);
        let map = IndexMap::new();
        let prompt = bundle("hi");
        let req = ModelRequest {
            role: Role::Actor,
            model: "gpt-x",
            params: &params,
            prompt: &prompt,
            index_map: &map,
            hint: None,
            attempt: 0,
        };
        let body = OpenAiCompatClient::request_body(&req);
        assert_eq!(body["model"], "gpt-x");
        assert_eq!(body["reasoning_effort"], "low");
        assert_eq!(body["messages"][0]["content"][0]["text"], "hi");
    }
}
