use serde::{Deserialize, Serialize};

use super::client::{ModelClient, ModelExchange, ModelRequest};
use super::modular::ReplayHint;
use super::prompt::summary_prompt;
use super::{AgentConfig, HistoryTechnique, Role};
use crate::screen::ScreenObservation;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    pub text: String,
}

/// Step-wise history injected into later prompts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryLog {
    entries: Vec<HistoryEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HistoryError {
    #[error("history step {got} does not follow step {last}")]
    NotIncreasing { last: usize, got: usize },
    #[error("post_action history needs the outcome screen")]
    MissingAfterScreen,
    #[error("{0} history does not take an outcome screen")]
    UnexpectedAfterScreen(&'static str),
}

impl HistoryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, step: usize, text: impl Into<String>) -> Result<(), HistoryError> {
        if let Some(last) = self.entries.last() {
            if step <= last.step {
                return Err(HistoryError::NotIncreasing { last: last.step, got: step });
            }
        }
        self.entries.push(HistoryEntry {
            step,
            text: text.into(),
        });
        Ok(())
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// One `Step N: ...` line per entry (1-based), or `None` when empty.
    pub fn render(&self) -> String {
        if self.entries.is_empty() {
            return "None".to_owned();
        }
        self.entries
            .iter()
            .map(|e| format!("Step {}: {}", e.step + 1, e.text))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

pub(crate) fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// A generated history entry plus its ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedEntry {
    pub text: String,
    pub exchange: Option<ModelExchange>,
    /// The summarizer failed and the raw trace was used instead.
    pub fell_back: bool,
}

/// Produces the history text for one executed step. `actor_response` is the
/// raw trace; summarizing techniques query the summarizer about `action`.
#[allow(clippy::too_many_arguments)]
pub fn generate_history_entry(
    config: &AgentConfig,
    goal: &str,
    before: &ScreenObservation,
    action_text: &str,
    actor_response: &str,
    after: Option<&ScreenObservation>,
    client: &dyn ModelClient,
    hint: Option<&ReplayHint>,
) -> Result<GeneratedEntry, HistoryError> {
    let prompt = match (config.history, after) {
        (HistoryTechnique::RawTrace, None) => {
            return Ok(GeneratedEntry {
                text: one_line(actor_response),
                exchange: None,
                fell_back: false,
            })
        }
        (HistoryTechnique::PostAction, None) => return Err(HistoryError::MissingAfterScreen),
        (HistoryTechnique::PostAction, Some(after)) => summary_prompt(goal, before, action_text, Some(after)),
        (HistoryTechnique::PreAction, None) => summary_prompt(goal, before, action_text, None),
        (other, Some(_)) => return Err(HistoryError::UnexpectedAfterScreen(other.as_str())),
    };
    let model = config.model_for(Role::Summarizer);
    let request = ModelRequest {
        role: Role::Summarizer,
        model,
        params: &config.model_params,
        prompt: &prompt,
        index_map: &before.index_map,
        hint,
        attempt: 0,
    };
    match client.complete(&request) {
        Ok(completion) if !completion.text.trim().is_empty() => {
            let text = one_line(&completion.text);
            Ok(GeneratedEntry {
                text,
                exchange: Some(ModelExchange::new(Role::Summarizer, model, &prompt, completion)),
                fell_back: false,
            })
        }
        Ok(completion) => Ok(GeneratedEntry {
            text: one_line(actor_response),
            exchange: Some(ModelExchange::new(Role::Summarizer, model, &prompt, completion)),
            fell_back: true,
        }),
        Err(_) => Ok(GeneratedEntry {
            text: one_line(actor_response),
            exchange: None,
            fell_back: true,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{ModelError, ScriptedClient};
    use crate::screen::{IndexMap, ParserTechnique};

    fn obs() -> ScreenObservation {
        ScreenObservation {
            technique: ParserTechnique::A11yList,
            text_parts: vec!["0. Button text=\"OK\" [clickable]".into()],
            image_parts: Vec::new(),
            index_map: IndexMap::new(),
            scale: 1.0,
        }
    }

    #[test]
    fn log_rules() {
        let mut log = HistoryLog::new();
        assert_eq!(log.render(), "None");
        log.push(0, "opened Clock").unwrap();
        log.push(2, "tapped Add").unwrap();
        assert_eq!(log.push(2, "again"), Err(HistoryError::NotIncreasing { last: 2, got: 2 }));
        assert_eq!(log.render(), "Step 1: opened Clock\nStep 3: tapped Add");
    }

    #[test]
    fn raw_trace_is_identity() {
        let client = ScriptedClient::new();
        let config = AgentConfig::simplest("m");
        let r = r#"{"action type": "click", "index": 0}"#;
        let e = generate_history_entry(&config, "g", &obs(), r, r, None, &client, None).unwrap();
        assert_eq!(e.text, r);
        assert!(e.exchange.is_none());
        assert!(client.requests().is_empty());
    }

    #[test]
    fn post_action_needs_after_screen() {
        let mut config = AgentConfig::simplest("m");
        config.history = HistoryTechnique::PostAction;
        let client = ScriptedClient::new();
        assert_eq!(
            generate_history_entry(&config, "g", &obs(), "a", "r", None, &client, None),
            Err(HistoryError::MissingAfterScreen)
        );
    }

    #[test]
    fn pre_action_passes_summary_through() {
        let mut config = AgentConfig::simplest("big");
        config.history = HistoryTechnique::PreAction;
        config.model_roles.insert(Role::Summarizer, "small".into());
        let client = ScriptedClient::new();
        client.push(Role::Summarizer, "Tapped OK\nto confirm.");
        let e = generate_history_entry(&config, "g", &obs(), "a", "r", None, &client, None).unwrap();
        assert_eq!(e.text, "Tapped OK to confirm.");
        let ex = e.exchange.unwrap();
        assert_eq!((ex.role, ex.model.as_str()), (Role::Summarizer, "small"));
        assert!(!e.fell_back);
    }

    #[test]
    fn summarizer_failure_falls_back() {
        let mut config = AgentConfig::simplest("m");
        config.history = HistoryTechnique::PreAction;
        let client = ScriptedClient::new();
        client.push_error(Role::Summarizer, ModelError::Timeout);
        let e = generate_history_entry(&config, "g", &obs(), "a", "raw response", None, &client, None).unwrap();
        assert!(e.fell_back);
        assert_eq!(e.text, "raw response");
    }
}
