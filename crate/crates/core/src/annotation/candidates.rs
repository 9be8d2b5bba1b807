use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::agent::{
    candidate_prompt, parse::action_from_object, ModelClient, ModelError, ModelExchange, ModelRequest, ReplayHint, Role,
};
use crate::dataset::{Action, StepRecord, TaskRecord};
use crate::jsonscan;
use crate::screen::{encode_list, parse_a11y, EncodedImage, ImagePolicy, IndexMap};

/// LLM-proposed actions for one step, default excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub task_id: String,
    pub step: usize,
    pub candidates: Vec<Action>,
    pub generator_model: String,
    pub raw_response: String,
    /// Entries that could not be mapped onto an action on this screen.
    pub dropped: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum CandidateError {
    #[error("cannot read the step's screen: {0}")]
    Screen(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    /// Retryable: the reply held no JSON array.
    #[error("the generator reply holds no JSON array")]
    NoArray,
}

/// Maps the generator's `{"action_type", "element_id", "text_to_input"}`
/// dialect onto the action wire form. A swipe without a direction becomes
/// a downward scroll.
fn normalize_entry(entry: &Map<String, Value>) -> Map<String, Value> {
    let mut out = entry.clone();
    if let Some(kind) = entry.get("action_type").cloned() {
        out.insert("action type".into(), kind);
    }
    if let Some(id) = entry.get("element_id").cloned() {
        out.remove("element_id");
        out.insert("index".into(), id);
    }
    let mut params = entry.get("params").and_then(Value::as_object).cloned().unwrap_or_default();
    if let Some(text) = entry.get("text_to_input").cloned() {
        params.insert("text".into(), text);
    }
    if let Some(app) = entry.get("app_name").or_else(|| entry.get("app")).cloned() {
        params.insert("app".into(), app);
    }
    if !params.is_empty() {
        out.insert("params".into(), Value::Object(params));
    }
    let kind = out.get("action type").and_then(Value::as_str).unwrap_or_default();
    let scrollish = matches!(kind.trim().to_ascii_lowercase().as_str(), "swipe" | "scroll");
    if scrollish && !out.contains_key("direction") {
        out.insert("direction".into(), Value::String("down".into()));
    }
    out
}

/// Parses a candidate array. Returns the distinct resolvable actions other
/// than `default`, and the count of entries dropped as unresolvable.
pub fn parse_candidates(text: &str, index_map: &IndexMap, default: &Action) -> Result<(Vec<Action>, usize), CandidateError> {
    let entries = jsonscan::last_array(text).ok_or(CandidateError::NoArray)?;
    let mut out: Vec<Action> = Vec::new();
    let mut dropped = 0;
    for entry in entries {
        let action = entry
            .as_object()
            .map(normalize_entry)
            .and_then(|obj| action_from_object(&obj, index_map).ok());
        match action {
            Some(a) if &a == default || out.contains(&a) => {}
            Some(a) => out.push(a),
            None => dropped += 1,
        }
    }
    Ok((out, dropped))
}

/// Asks the generator model for every plausible action on one step, using
/// the element-list encoding and the screenshot.
pub fn generate_candidates(
    task: &TaskRecord,
    step: &StepRecord,
    client: &dyn ModelClient,
    model: &str,
) -> Result<(CandidateSet, ModelExchange), CandidateError> {
    let screen = |e: &dyn std::fmt::Display| CandidateError::Screen(e.to_string());
    let xml = std::fs::read(task.a11y_path(step)).map_err(|e| screen(&e))?;
    let png = std::fs::read(task.screenshot_path(step)).map_err(|e| screen(&e))?;
    let tree = parse_a11y(&xml).map_err(|e| screen(&e))?;
    let (ui_list, index_map) = encode_list(&tree);
    let img = image::load_from_memory(&png).map_err(|e| screen(&e))?.to_rgba8();
    let (img, _) = ImagePolicy::default().apply(img);
    let shot = EncodedImage::png(&img).map_err(|e| screen(&e))?;
    let prompt = candidate_prompt(&task.goal, &ui_list, Some(shot));
    let hint = ReplayHint {
        task_id: task.task_id.clone(),
        run: 0,
        step: step.index,
        valid_actions: step.valid_actions.clone(),
    };
    let params = Default::default();
    let completion = client.complete(&ModelRequest {
        role: Role::CandidateGenerator,
        model,
        params: &params,
        prompt: &prompt,
        index_map: &index_map,
        hint: Some(&hint),
        attempt: 0,
    })?;
    let (candidates, dropped) = parse_candidates(&completion.text, &index_map, &step.default_action().action)?;
    let raw_response = completion.text.clone();
    Ok((
        CandidateSet {
            task_id: task.task_id.clone(),
            step: step.index,
            candidates,
            generator_model: model.to_owned(),
            raw_response,
            dropped,
        },
        ModelExchange::new(Role::CandidateGenerator, model, &prompt, completion),
    ))
}
