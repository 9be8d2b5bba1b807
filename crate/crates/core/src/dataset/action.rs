use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Map, Value};

/// Parser-independent identifier of a UI element.
///
/// Derived from the accessibility node: the resource id when present, else the
/// short class name plus a digest of the bounds. Duplicates within one screen
/// get a `#k` suffix in document order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ElementId(pub String);

impl ElementId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }

    pub fn parse(raw: &str) -> Option<Self> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "up" => Some(Direction::Up),
            "down" => Some(Direction::Down),
            "left" => Some(Direction::Left),
            "right" => Some(Direction::Right),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Click,
    Input,
    Scroll,
    NavigateBack,
    OpenApp,
    Finish,
}

impl ActionKind {
    pub const ALL: [ActionKind; 6] = [
        ActionKind::Click,
        ActionKind::Input,
        ActionKind::Scroll,
        ActionKind::NavigateBack,
        ActionKind::OpenApp,
        ActionKind::Finish,
    ];

    /// The `"action type"` string used in action JSON.
    pub fn wire_name(self) -> &'static str {
        match self {
            ActionKind::Click => "click",
            ActionKind::Input => "input",
            ActionKind::Scroll => "scroll",
            ActionKind::NavigateBack => "navigate back",
            ActionKind::OpenApp => "open app",
            ActionKind::Finish => "finish",
        }
    }

    /// Accepts the wire names plus `_`/`-` spellings and a few common synonyms.
    pub fn from_wire(raw: &str) -> Option<Self> {
        let norm: String = raw
            .trim()
            .to_ascii_lowercase()
            .chars()
            .map(|c| if c == '_' || c == '-' { ' ' } else { c })
            .collect();
        match norm.as_str() {
            "click" | "tap" => Some(ActionKind::Click),
            "input" | "type" | "input text" => Some(ActionKind::Input),
            "scroll" | "swipe" => Some(ActionKind::Scroll),
            "navigate back" | "back" => Some(ActionKind::NavigateBack),
            "open app" | "open" | "launch app" => Some(ActionKind::OpenApp),
            "finish" | "done" => Some(ActionKind::Finish),
            _ => None,
        }
    }
}

/// One of the six actions an agent can take on a screen.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Action {
    Click { target: ElementId },
    Input { target: ElementId, text: String },
    Scroll { direction: Direction },
    NavigateBack,
    OpenApp { app_name: String },
    Finish { status: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ActionShapeError {
    #[error("missing \"action type\"")]
    MissingType,
    #[error("unknown action type {0:?}")]
    UnknownType(String),
    #[error("{kind} action requires {field}")]
    MissingField { kind: &'static str, field: &'static str },
    #[error("invalid {field}: {detail}")]
    InvalidField { field: &'static str, detail: String },
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Click { .. } => ActionKind::Click,
            Action::Input { .. } => ActionKind::Input,
            Action::Scroll { .. } => ActionKind::Scroll,
            Action::NavigateBack => ActionKind::NavigateBack,
            Action::OpenApp { .. } => ActionKind::OpenApp,
            Action::Finish { .. } => ActionKind::Finish,
        }
    }

    pub fn target(&self) -> Option<&ElementId> {
        match self {
            Action::Click { target } | Action::Input { target, .. } => Some(target),
            _ => None,
        }
    }

    pub fn finish() -> Self {
        Action::Finish {
            status: Some("complete".to_owned()),
        }
    }

    /// Checks the field invariants that the type itself cannot express.
    pub fn check(&self) -> Result<(), ActionShapeError> {
        match self {
            Action::Input { text, .. } if text.trim().is_empty() => {
                Err(ActionShapeError::InvalidField {
                    field: "params.text",
                    detail: "input text must be non-empty".into(),
                })
            }
            Action::OpenApp { app_name } if app_name.trim().is_empty() => {
                Err(ActionShapeError::InvalidField {
                    field: "params.app",
                    detail: "app name must be non-empty".into(),
                })
            }
            Action::Click { target } | Action::Input { target, .. } if target.0.is_empty() => {
                Err(ActionShapeError::InvalidField {
                    field: "element_id",
                    detail: "empty element id".into(),
                })
            }
            _ => Ok(()),
        }
    }

    /// At-rest JSON: action JSON with `element_id` in place of the
    /// presentation `index`.
    pub fn to_json(&self) -> Value {
        let kind = self.kind().wire_name();
        match self {
            Action::Click { target } => json!({"action type": kind, "element_id": target}),
            Action::Input { target, text } => json!({
                "action type": kind,
                "element_id": target,
                "params": {"text": text},
            }),
            Action::Scroll { direction } => {
                json!({"action type": kind, "direction": direction.as_str()})
            }
            Action::NavigateBack => json!({"action type": kind}),
            Action::OpenApp { app_name } => json!({"action type": kind, "params": {"app": app_name}}),
            Action::Finish { status: Some(s) } => json!({"action type": kind, "status": s}),
            Action::Finish { status: None } => json!({"action type": kind}),
        }
    }

    pub fn from_json(value: &Value) -> Result<Self, ActionShapeError> {
        let obj = value.as_object().ok_or(ActionShapeError::MissingType)?;
        Self::from_fields(obj, |obj, kind| {
            let raw = obj.get("element_id").ok_or(ActionShapeError::MissingField {
                kind,
                field: "element_id",
            })?;
            match raw {
                Value::String(s) if !s.is_empty() => Ok(ElementId(s.clone())),
                other => Err(ActionShapeError::InvalidField {
                    field: "element_id",
                    detail: format!("expected a non-empty string, got {other}"),
                }),
            }
        })
    }

    /// Shared field decoding; `target` resolves the element reference, which
    /// differs between the at-rest form and model output.
    pub(crate) fn from_fields<F>(obj: &Map<String, Value>, mut target: F) -> Result<Self, ActionShapeError>
    where
        F: FnMut(&Map<String, Value>, &'static str) -> Result<ElementId, ActionShapeError>,
    {
        let raw_kind = obj
            .get("action type")
            .or_else(|| obj.get("action_type"))
            .and_then(Value::as_str)
            .ok_or(ActionShapeError::MissingType)?;
        let kind =
            ActionKind::from_wire(raw_kind).ok_or_else(|| ActionShapeError::UnknownType(raw_kind.to_owned()))?;
        let params = obj.get("params").and_then(Value::as_object);
        let param_str = |field: &str| -> Option<String> {
            params
                .and_then(|p| p.get(field))
                .or_else(|| obj.get(field))
                .and_then(Value::as_str)
                .map(str::to_owned)
        };
        let action = match kind {
            ActionKind::Click => Action::Click {
                target: target(obj, "click")?,
            },
            ActionKind::Input => {
                let target = target(obj, "input")?;
                let text = param_str("text").ok_or(ActionShapeError::MissingField {
                    kind: "input",
                    field: "params.text",
                })?;
                Action::Input { target, text }
            }
            ActionKind::Scroll => {
                let raw = obj
                    .get("direction")
                    .or_else(|| params.and_then(|p| p.get("direction")))
                    .and_then(Value::as_str)
                    .ok_or(ActionShapeError::MissingField {
                        kind: "scroll",
                        field: "direction",
                    })?;
                let direction = Direction::parse(raw).ok_or_else(|| ActionShapeError::InvalidField {
                    field: "direction",
                    detail: format!("{raw:?} is not one of up, down, left, right"),
                })?;
                Action::Scroll { direction }
            }
            ActionKind::NavigateBack => Action::NavigateBack,
            ActionKind::OpenApp => {
                let app_name = param_str("app")
                    .or_else(|| param_str("app_name"))
                    .ok_or(ActionShapeError::MissingField {
                        kind: "open app",
                        field: "params.app",
                    })?;
                Action::OpenApp { app_name }
            }
            ActionKind::Finish => Action::Finish {
                status: obj.get("status").and_then(Value::as_str).map(str::to_owned),
            },
        };
        action.check()?;
        Ok(action)
    }

    /// Stable textual key, used to deduplicate and tally actions.
    pub fn key(&self) -> String {
        self.to_json().to_string()
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Click { target } => write!(f, "click({target})"),
            Action::Input { target, text } => write!(f, "input({target}, {text:?})"),
            Action::Scroll { direction } => write!(f, "scroll({})", direction.as_str()),
            Action::NavigateBack => f.write_str("navigate_back"),
            Action::OpenApp { app_name } => write!(f, "open_app({app_name:?})"),
            Action::Finish { .. } => f.write_str("finish"),
        }
    }
}

impl Serialize for Action {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        Action::from_json(&value).map_err(serde::de::Error::custom)
    }
}

/// A step prediction: a concrete action, or a sentinel that never matches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    Action(Action),
    Invalid { reason: String },
}

impl Prediction {
    pub fn invalid(reason: impl Into<String>) -> Self {
        Prediction::Invalid {
            reason: reason.into(),
        }
    }

    pub fn action(&self) -> Option<&Action> {
        match self {
            Prediction::Action(a) => Some(a),
            Prediction::Invalid { .. } => None,
        }
    }
}

impl From<Action> for Prediction {
    fn from(action: Action) -> Self {
        Prediction::Action(action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn click(id: &str) -> Action {
        Action::Click {
            target: ElementId::new(id),
        }
    }

    #[test]
    fn wire_names_round_trip() {
        for kind in ActionKind::ALL {
            assert_eq!(ActionKind::from_wire(kind.wire_name()), Some(kind));
        }
        assert_eq!(ActionKind::from_wire("navigate_back"), Some(ActionKind::NavigateBack));
        assert_eq!(ActionKind::from_wire("Open-App"), Some(ActionKind::OpenApp));
        assert_eq!(ActionKind::from_wire("long press"), None);
    }

    #[test]
    fn at_rest_json_round_trip() {
        let actions = [
            click("com.app:id/ok"),
            Action::Input {
                target: ElementId::new("q"),
                text: "winter".into(),
            },
            Action::Scroll {
                direction: Direction::Left,
            },
            Action::NavigateBack,
            Action::OpenApp {
                app_name: "Clock".into(),
            },
            Action::finish(),
            Action::Finish { status: None },
        ];
        for action in actions {
            let back = Action::from_json(&action.to_json()).unwrap();
            assert_eq!(back, action);
        }
    }

    #[test]
    fn field_requirements() {
        let missing_target = json!({"action type": "click"});
        assert!(matches!(
            Action::from_json(&missing_target),
            Err(ActionShapeError::MissingField { field: "element_id", .. })
        ));
        let empty_text = json!({"action type": "input", "element_id": "x", "params": {"text": "  "}});
        assert!(matches!(
            Action::from_json(&empty_text),
            Err(ActionShapeError::InvalidField { field: "params.text", .. })
        ));
        let bad_dir = json!({"action type": "scroll", "direction": "diagonal"});
        assert!(matches!(
            Action::from_json(&bad_dir),
            Err(ActionShapeError::InvalidField { field: "direction", .. })
        ));
        let no_app = json!({"action type": "open app"});
        assert!(Action::from_json(&no_app).is_err());
        let unknown = json!({"action type": "long press"});
        assert_eq!(
            Action::from_json(&unknown),
            Err(ActionShapeError::UnknownType("long press".into()))
        );
    }

    #[test]
    fn prediction_serializes_tagged() {
        let p = Prediction::invalid("no json");
        let v = serde_json::to_value(&p).unwrap();
        assert_eq!(v, json!({"invalid": {"reason": "no json"}}));
        let back: Prediction = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
        let p = Prediction::from(Action::NavigateBack);
        let v = serde_json::to_value(&p).unwrap();
        assert_eq!(v, json!({"action": {"action type": "navigate back"}}));
    }
}
