use serde_json::{json, Map, Value};

use crate::dataset::{Action, ActionShapeError, ElementId};
use crate::jsonscan;
use crate::screen::IndexMap;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ActionParseError {
    #[error("no JSON object in the response")]
    NoJson,
    #[error("unknown action type {0:?}")]
    UnknownType(String),
    #[error("index {index} is not on this screen ({limit} indexed elements)")]
    IndexOutOfRange { index: i64, limit: usize },
    #[error("missing required parameter {0}")]
    MissingParameter(&'static str),
    #[error("invalid parameter {field}: {detail}")]
    InvalidParameter { field: &'static str, detail: String },
}

impl From<ActionShapeError> for ActionParseError {
    fn from(e: ActionShapeError) -> Self {
        match e {
            ActionShapeError::MissingType => ActionParseError::MissingParameter("action type"),
            ActionShapeError::UnknownType(t) => ActionParseError::UnknownType(t),
            ActionShapeError::MissingField { field, .. } => ActionParseError::MissingParameter(field),
            ActionShapeError::InvalidField { field, detail } => ActionParseError::InvalidParameter { field, detail },
        }
    }
}

fn index_value(obj: &Map<String, Value>) -> Option<&Value> {
    obj.get("index").or_else(|| obj.get("element_id"))
}

/// Parses the last JSON object of a model response into an action, mapping
/// presentation indexes through `index_map`. Prose and code fences around
/// the object are ignored.
pub fn parse_model_action(text: &str, index_map: &IndexMap) -> Result<Action, ActionParseError> {
    let obj = jsonscan::last_object(text).ok_or(ActionParseError::NoJson)?;
    action_from_object(&obj, index_map)
}

/// [`parse_model_action`] on an already extracted object.
pub(crate) fn action_from_object(obj: &Map<String, Value>, index_map: &IndexMap) -> Result<Action, ActionParseError> {
    // Out-of-range indexes are reported as such rather than as a shape error.
    let mut out_of_range = None;
    let action = Action::from_fields(obj, |obj, _kind| {
        let raw = index_value(obj).ok_or(ActionShapeError::MissingField {
            kind: "element",
            field: "index",
        })?;
        let index = match raw {
            Value::Number(n) => n.as_i64(),
            Value::String(s) => s.trim().parse::<i64>().ok(),
            _ => None,
        }
        .ok_or_else(|| ActionShapeError::InvalidField {
            field: "index",
            detail: format!("{raw} is not an integer"),
        })?;
        usize::try_from(index)
            .ok()
            .and_then(|i| index_map.canonical(i))
            .cloned()
            .ok_or_else(|| {
                out_of_range = Some(index);
                ActionShapeError::InvalidField {
                    field: "index",
                    detail: "out of range".into(),
                }
            })
    });
    match (action, out_of_range) {
        (Ok(a), _) => Ok(a),
        (Err(_), Some(index)) => Err(ActionParseError::IndexOutOfRange {
            index,
            limit: index_map.len(),
        }),
        (Err(e), None) => Err(e.into()),
    }
}

/// Action JSON as a model would write it, with the target's presentation
/// index. `None` when the target is not indexed on this screen.
pub fn render_model_action(action: &Action, index_map: &IndexMap) -> Option<Value> {
    let kind = action.kind().wire_name();
    let index = |target: &ElementId| index_map.presentation(target);
    Some(match action {
        Action::Click { target } => json!({"action type": kind, "index": index(target)?}),
        Action::Input { target, text } => json!({
            "action type": kind,
            "index": index(target)?,
            "params": {"text": text},
        }),
        Action::Scroll { direction } => json!({"action type": kind, "direction": direction.as_str()}),
        Action::NavigateBack => json!({"action type": kind}),
        Action::OpenApp { app_name } => json!({"action type": kind, "params": {"app": app_name}}),
        Action::Finish { status: Some(s) } => json!({"action type": kind, "status": s}),
        Action::Finish { status: None } => json!({"action type": kind}),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Direction;

    fn map(n: usize) -> IndexMap {
        IndexMap::from_ids((0..n).map(|i| ElementId::new(format!("e{i}"))))
    }

    #[test]
    fn finish() {
        let a = parse_model_action(r#"{"action type": "finish", "status": "complete"}"#, &map(0)).unwrap();
        assert_eq!(a, Action::finish());
    }

    #[test]
    fn index_out_of_range() {
        assert_eq!(
            parse_model_action(r#"{"action type": "click", "index": 3}"#, &map(2)),
            Err(ActionParseError::IndexOutOfRange { index: 3, limit: 2 })
        );
        assert!(matches!(
            parse_model_action(r#"{"action type": "click", "index": -1}"#, &map(2)),
            Err(ActionParseError::IndexOutOfRange { index: -1, .. })
        ));
    }

    #[test]
    fn react_takes_last_object() {
        let text = "I should tap OK. {\"action type\": \"click\", \"index\": 0}";
        assert_eq!(
            parse_model_action(text, &map(1)).unwrap(),
            Action::Click {
                target: ElementId::new("e0")
            }
        );
        let fenced = "Thought: {\"x\": 1}\n```json\n{\"action type\": \"navigate back\"}\n```";
        assert_eq!(parse_model_action(fenced, &map(0)).unwrap(), Action::NavigateBack);
    }

    #[test]
    fn distinct_error_kinds() {
        assert_eq!(parse_model_action("no json here", &map(1)), Err(ActionParseError::NoJson));
        assert_eq!(
            parse_model_action(r#"{"action type": "long press", "index": 0}"#, &map(1)),
            Err(ActionParseError::UnknownType("long press".into()))
        );
        assert_eq!(
            parse_model_action(r#"{"action type": "input", "index": 0}"#, &map(1)),
            Err(ActionParseError::MissingParameter("params.text"))
        );
        assert_eq!(
            parse_model_action(r#"{"action type": "click"}"#, &map(1)),
            Err(ActionParseError::MissingParameter("index"))
        );
        assert_eq!(
            parse_model_action(r#"{"action type": "open app", "params": {}}"#, &map(1)),
            Err(ActionParseError::MissingParameter("params.app"))
        );
        assert!(matches!(
            parse_model_action(r#"{"action type": "scroll", "direction": "sideways"}"#, &map(1)),
            Err(ActionParseError::InvalidParameter { field: "direction", .. })
        ));
    }

    #[test]
    fn render_then_parse_is_identity() {
        let m = map(3);
        let actions = [
            Action::Click {
                target: ElementId::new("e2"),
            },
            Action::Input {
                target: ElementId::new("e1"),
                text: "winter jacket".into(),
            },
            Action::Scroll {
                direction: Direction::Down,
            },
            Action::NavigateBack,
            Action::OpenApp {
                app_name: "Clock".into(),
            },
            Action::finish(),
        ];
        for a in actions {
            let rendered = render_model_action(&a, &m).unwrap();
            assert_eq!(parse_model_action(&rendered.to_string(), &m).unwrap(), a);
        }
        assert!(render_model_action(&Action::Click { target: ElementId::new("zz") }, &m).is_none());
    }
}
