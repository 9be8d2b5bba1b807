use serde::{Deserialize, Serialize};

use super::history::HistoryLog;
use super::{AgentConfig, InferenceStyle};
use crate::screen::{EncodedImage, ParserTechnique, ScreenObservation};

/// The prompt text assets.
#[derive(Debug, Clone, Copy)]
pub struct Templates {
    pub action: &'static str,
    pub action_explanation: &'static str,
    pub summary_post: &'static str,
    pub summary_pre: &'static str,
    pub reflection: &'static str,
    pub candidates: &'static str,
    pub react_instruction: &'static str,
    pub few_shot_header: &'static str,
}

pub fn templates() -> Templates {
    Templates {
        action: include_str!("../../assets/prompts/action.txt"),
        action_explanation: include_str!("../../assets/prompts/action_explanation.txt"),
        summary_post: include_str!("../../assets/prompts/summary_post.txt"),
        summary_pre: include_str!("../../assets/prompts/summary_pre.txt"),
        reflection: include_str!("../../assets/prompts/reflection.txt"),
        candidates: include_str!("../../assets/prompts/candidates.txt"),
        react_instruction: include_str!("../../assets/prompts/react_instruction.txt"),
        few_shot_header: include_str!("../../assets/prompts/few_shot_header.txt"),
    }
}

/// The answer-format paragraph of the action template that ReAct replaces.
const ACTION_ONLY_INSTRUCTION: &str = "Now output an action from the above list directly in the correct JSON format. Your answer must be only the JSON object representing the action.\nDo not include any additional text or explanation in your answer.";

/// Shown in the UI slot when the technique carries no text.
const IMAGE_ONLY_UI: &str = "(The current screen is provided as the attached screenshot.)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedResponse {
    ActionJson,
    ReactThenAction,
    SummaryLine,
    VerdictJson,
    CandidateArray,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserPart {
    Text(String),
    Image(EncodedImage),
}

/// Assembled model input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_parts: Vec<UserPart>,
    pub expected_response: ExpectedResponse,
}

impl PromptBundle {
    fn new(text: String, images: impl IntoIterator<Item = EncodedImage>, expected: ExpectedResponse) -> Self {
        let mut user_parts = vec![UserPart::Text(text)];
        user_parts.extend(images.into_iter().map(UserPart::Image));
        Self {
            system_text: String::new(),
            user_parts,
            expected_response: expected,
        }
    }

    /// Concatenated text parts.
    pub fn text(&self) -> String {
        self.user_parts
            .iter()
            .filter_map(|p| match p {
                UserPart::Text(t) => Some(t.as_str()),
                UserPart::Image(_) => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn image_count(&self) -> usize {
        self.user_parts
            .iter()
            .filter(|p| matches!(p, UserPart::Image(_)))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("observation built with {got} but the agent uses {expected}")]
    TechniqueMismatch {
        expected: ParserTechnique,
        got: ParserTechnique,
    },
    #[error("few_shot inference needs exemplars")]
    MissingExemplars,
}

/// Replaces `{Key}` placeholders in one pass, so substituted values are
/// never rescanned.
pub(crate) fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'scan: while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        for (key, value) in values {
            let placeholder = format!("{{{key}}}");
            if tail.starts_with(&placeholder) {
                out.push_str(value);
                rest = &tail[placeholder.len()..];
                continue 'scan;
            }
        }
        out.push('{');
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}

fn ui_text(obs: &ScreenObservation) -> String {
    if obs.text_parts.is_empty() {
        IMAGE_ONLY_UI.to_owned()
    } else {
        obs.ui_text()
    }
}

/// Renders the action prompt for one step.
pub fn assemble_prompt(
    config: &AgentConfig,
    goal: &str,
    observation: &ScreenObservation,
    history: &HistoryLog,
) -> Result<PromptBundle, PromptError> {
    assemble_with_feedback(config, goal, observation, history, None)
}

pub(crate) fn assemble_with_feedback(
    config: &AgentConfig,
    goal: &str,
    observation: &ScreenObservation,
    history: &HistoryLog,
    feedback: Option<&str>,
) -> Result<PromptBundle, PromptError> {
    if observation.technique != config.parser {
        return Err(PromptError::TechniqueMismatch {
            expected: config.parser,
            got: observation.technique,
        });
    }
    let t = templates();
    let history_text = format!("\n{}", history.render());
    let ui = ui_text(observation);
    let mut text = fill(
        t.action,
        &[
            ("Action Explanation", t.action_explanation.trim_end()),
            ("Goal", goal),
            ("History", &history_text),
            ("UI representation", &ui),
        ],
    );
    let expected = match config.inference {
        InferenceStyle::ActionOnly => ExpectedResponse::ActionJson,
        InferenceStyle::React => {
            text = text.replacen(ACTION_ONLY_INSTRUCTION, t.react_instruction.trim_end(), 1);
            ExpectedResponse::ReactThenAction
        }
        InferenceStyle::FewShot => {
            if config.few_shot_exemplars.is_empty() {
                return Err(PromptError::MissingExemplars);
            }
            let mut prefix = t.few_shot_header.to_owned();
            for (i, ex) in config.few_shot_exemplars.iter().enumerate() {
                prefix.push_str(&format!(
                    "\nExample {}:\nScreen:\n{}\nAction: {}\n",
                    i + 1,
                    ex.observation.trim_end(),
                    ex.action
                ));
            }
            text = format!("{prefix}\n{text}");
            ExpectedResponse::ActionJson
        }
    };
    if let Some(feedback) = feedback {
        text.push_str(&format!(
            "\n\nYour previously proposed action was judged incorrect. Feedback: {}\nTake this feedback into account and answer again.\n",
            feedback.trim()
        ));
    }
    Ok(PromptBundle::new(
        text,
        observation.image_parts.iter().cloned(),
        expected,
    ))
}

/// Summarizer prompt. With `after` it is the post-action form (both
/// screens), without it the pre-action form.
pub fn summary_prompt(
    goal: &str,
    before: &ScreenObservation,
    selected_action: &str,
    after: Option<&ScreenObservation>,
) -> PromptBundle {
    let t = templates();
    let before_ui = ui_text(before);
    let explanation = t.action_explanation.trim_end();
    match after {
        Some(after) => {
            let after_ui = ui_text(after);
            let text = fill(
                t.summary_post,
                &[
                    ("Action Explanation", explanation),
                    ("Goal", goal),
                    ("Before Action UI representation", &before_ui),
                    ("Selected Action", selected_action),
                    ("After Action UI representation", &after_ui),
                ],
            );
            let images = before.image_parts.iter().chain(&after.image_parts).cloned();
            PromptBundle::new(text, images, ExpectedResponse::SummaryLine)
        }
        None => {
            let text = fill(
                t.summary_pre,
                &[
                    ("Action Explanation", explanation),
                    ("Goal", goal),
                    ("Before Action UI representation", &before_ui),
                    ("Selected Action", selected_action),
                ],
            );
            PromptBundle::new(text, before.image_parts.iter().cloned(), ExpectedResponse::SummaryLine)
        }
    }
}

pub fn reflection_prompt(
    goal: &str,
    history: &HistoryLog,
    before: &ScreenObservation,
    selected_action: &str,
    after: &ScreenObservation,
) -> PromptBundle {
    let t = templates();
    let history_text = history.render();
    let before_ui = ui_text(before);
    let after_ui = ui_text(after);
    let text = fill(
        t.reflection,
        &[
            ("Action Explanation", t.action_explanation.trim_end()),
            ("Goal", goal),
            ("History", &history_text),
            ("Before Action UI representation", &before_ui),
            ("Selected Action", selected_action),
            ("After Action UI representation", &after_ui),
        ],
    );
    let images = before.image_parts.iter().chain(&after.image_parts).cloned();
    PromptBundle::new(text, images, ExpectedResponse::VerdictJson)
}

/// Candidate-generation prompt over an element list.
pub fn candidate_prompt(goal: &str, ui_list: &str, screenshot: Option<EncodedImage>) -> PromptBundle {
    let text = fill(
        templates().candidates,
        &[("Goal", goal), ("UI representations", ui_list)],
    );
    PromptBundle::new(text, screenshot, ExpectedResponse::CandidateArray)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::Exemplar;
    use crate::screen::IndexMap;

    fn obs(technique: ParserTechnique) -> ScreenObservation {
        ScreenObservation {
            technique,
            text_parts: vec!["0. Button text=\"OK\" [clickable]".into()],
            image_parts: Vec::new(),
            index_map: IndexMap::new(),
            scale: 1.0,
        }
    }

    fn config() -> AgentConfig {
        let mut c = AgentConfig::simplest("m");
        c.parser = ParserTechnique::A11yList;
        c
    }

    #[test]
    fn fill_is_single_pass() {
        assert_eq!(fill("{A}-{B}-{C}", &[("A", "{B}"), ("B", "x")]), "{B}-x-{C}");
        assert_eq!(fill("{\"a\": 1}", &[("a", "z")]), "{\"a\": 1}");
    }

    #[test]
    fn empty_history_renders_none() {
        let p = assemble_prompt(&config(), "Set an alarm", &obs(ParserTechnique::A11yList), &HistoryLog::new()).unwrap();
        let text = p.text();
        assert!(text.contains("so far:\nNone\n"));
        assert!(text.contains("The current user goal/request is: Set an alarm\n"));
        assert!(text.contains("\"action type\": \"open app\""));
        assert_eq!(p.expected_response, ExpectedResponse::ActionJson);
    }

    #[test]
    fn templates_contain_their_placeholders() {
        let t = templates();
        assert!(t.action.contains(ACTION_ONLY_INSTRUCTION));
        for key in ["{Action Explanation}", "{Goal}", "{History}", "{UI representation}"] {
            assert!(t.action.contains(key), "{key}");
        }
        for key in ["{Before Action UI representation}", "{Selected Action}", "{After Action UI representation}"] {
            assert!(t.summary_post.contains(key));
            assert!(t.reflection.contains(key));
        }
        assert!(!t.summary_pre.contains("{After Action UI representation}"));
        assert!(t.candidates.contains("{UI representations}"));
    }

    #[test]
    fn react_swaps_the_answer_instruction() {
        let mut c = config();
        c.inference = InferenceStyle::React;
        let p = assemble_prompt(&c, "g", &obs(ParserTechnique::A11yList), &HistoryLog::new()).unwrap();
        assert_eq!(p.expected_response, ExpectedResponse::ReactThenAction);
        assert!(!p.text().contains("Your answer must be only the JSON object"));
        assert!(p.text().contains("First write your reasoning"));
    }

    #[test]
    fn few_shot_prepends_and_mismatch_errors() {
        let mut c = config();
        c.inference = InferenceStyle::FewShot;
        assert_eq!(
            assemble_prompt(&c, "g", &obs(ParserTechnique::A11yList), &HistoryLog::new()),
            Err(PromptError::MissingExemplars)
        );
        c.few_shot_exemplars.push(Exemplar {
            observation: "0. Button text=\"Go\" [clickable]".into(),
            action: serde_json::json!({"action type": "click", "index": 0}),
        });
        let p = assemble_prompt(&c, "g", &obs(ParserTechnique::A11yList), &HistoryLog::new()).unwrap();
        assert!(p.text().starts_with(templates().few_shot_header));
        assert!(p.text().contains("Example 1:"));
        assert!(matches!(
            assemble_prompt(&c, "g", &obs(ParserTechnique::A11yHtml), &HistoryLog::new()),
            Err(PromptError::TechniqueMismatch { .. })
        ));
    }
}
