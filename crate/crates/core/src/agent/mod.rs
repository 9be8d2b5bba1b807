//! The modular agent: prompt assembly, model clients, action parsing,
//! history generation and reflection, plus the end-to-end adapter contract
//! the evaluator drives.

mod client;
mod history;
mod mock;
mod modular;
pub(crate) mod parse;
mod process;
mod prompt;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::screen::ParserTechnique;

pub use client::{
    prompt_hash, Completion, ModelClient, ModelError, ModelExchange, ModelRequest, OpenAiCompatClient,
    ScriptedClient,
};
pub use history::{generate_history_entry, GeneratedEntry, HistoryEntry, HistoryError, HistoryLog};
pub use mock::{MockPolicy, ReplayMockClient};
pub use modular::{
    reflect_and_maybe_repredict, step_agent, AdvanceOutcome, AgentStep, AgentTurn, AlwaysFinishAgent, EndToEndAgent,
    ModularAgent, ReflectionOutcome, ReplayHint, ScreenInput, StepDecision, StepError, Verdict,
};
pub use parse::{parse_model_action, render_model_action, ActionParseError};
pub use process::{ProcessAgent, ProcessError};
pub use prompt::{
    assemble_prompt, candidate_prompt, reflection_prompt, summary_prompt, templates, ExpectedResponse, PromptBundle,
    PromptError, UserPart,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryTechnique {
    RawTrace,
    PreAction,
    PostAction,
}

impl HistoryTechnique {
    pub const ALL: [HistoryTechnique; 3] = [
        HistoryTechnique::RawTrace,
        HistoryTechnique::PreAction,
        HistoryTechnique::PostAction,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HistoryTechnique::RawTrace => "raw_trace",
            HistoryTechnique::PreAction => "pre_action",
            HistoryTechnique::PostAction => "post_action",
        }
    }

    pub fn parse(raw: &str) -> Option<Self> {
        let norm = raw.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL.into_iter().find(|t| t.as_str() == norm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceStyle {
    ActionOnly,
    React,
    FewShot,
}

impl InferenceStyle {
    pub const ALL: [InferenceStyle; 3] = [InferenceStyle::ActionOnly, InferenceStyle::React, InferenceStyle::FewShot];

    pub fn as_str(self) -> &'static str {
        match self {
            InferenceStyle::ActionOnly => "action_only",
            InferenceStyle::React => "react",
            InferenceStyle::FewShot => "few_shot",
        }
    }

    pub fn parse(raw: &str) -> Option<Self> {
        let norm = raw.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL.into_iter().find(|t| t.as_str() == norm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Actor,
    Summarizer,
    Reflector,
    CandidateGenerator,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Actor => "actor",
            Role::Summarizer => "summarizer",
            Role::Reflector => "reflector",
            Role::CandidateGenerator => "candidate_generator",
        }
    }

    pub fn parse(raw: &str) -> Option<Self> {
        [Role::Actor, Role::Summarizer, Role::Reflector, Role::CandidateGenerator]
            .into_iter()
            .find(|r| r.as_str() == raw.trim())
    }
}

/// One worked example for few-shot prompting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub observation: String,
    pub action: Value,
}

/// One benchmarkable agent: a technique per module slot plus the model
/// behind each role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub parser: ParserTechnique,
    pub history: HistoryTechnique,
    pub inference: InferenceStyle,
    pub reflection: bool,
    pub model_roles: BTreeMap<Role, String>,
    /// Passed through to the provider untouched (temperature,
    /// reasoning_effort, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub model_params: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub few_shot_exemplars: Vec<Exemplar>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("no model assigned to the actor role")]
    MissingActor,
    #[error("few_shot inference needs exemplars")]
    MissingExemplars,
    #[error("exemplars given but inference style is {0}")]
    UnusedExemplars(&'static str),
}

impl AgentConfig {
    /// a11y HTML, raw trace, action only, no reflection.
    pub fn simplest(actor_model: impl Into<String>) -> Self {
        Self {
            parser: ParserTechnique::A11yHtml,
            history: HistoryTechnique::RawTrace,
            inference: InferenceStyle::ActionOnly,
            reflection: false,
            model_roles: BTreeMap::from([(Role::Actor, actor_model.into())]),
            model_params: BTreeMap::new(),
            few_shot_exemplars: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.model_roles.contains_key(&Role::Actor) {
            return Err(ConfigError::MissingActor);
        }
        match (self.inference, self.few_shot_exemplars.is_empty()) {
            (InferenceStyle::FewShot, true) => Err(ConfigError::MissingExemplars),
            (style, false) if style != InferenceStyle::FewShot => Err(ConfigError::UnusedExemplars(style.as_str())),
            _ => Ok(()),
        }
    }

    /// Model for a role; unassigned roles fall back to the actor's model.
    pub fn model_for(&self, role: Role) -> &str {
        self.model_roles
            .get(&role)
            .or_else(|| self.model_roles.get(&Role::Actor))
            .map(String::as_str)
            .unwrap_or("")
    }

    /// Short human label, e.g. `a11y_html/raw_trace/action_only/no_reflection`.
    pub fn label(&self) -> String {
        format!(
            "{}/{}/{}/{}",
            self.parser,
            self.history.as_str(),
            self.inference.as_str(),
            if self.reflection { "reflection" } else { "no_reflection" }
        )
    }
}
