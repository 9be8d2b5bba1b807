use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use base64::Engine;
use serde_json::{json, Value};

use super::modular::{AgentStep, AgentTurn, EndToEndAgent};
use crate::dataset::{Action, ActionShapeError, ElementId, Prediction};
use crate::screen::{parse_a11y, UiElementList};

#[derive(Debug, thiserror::Error)]
pub enum ProcessError {
    #[error("could not start agent process: {0}")]
    Spawn(std::io::Error),
    #[error("agent process i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("agent process closed its output")]
    Closed,
    #[error("agent process wrote invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Any executable speaking one JSON object per line. Request:
/// `{"goal", "screenshot_b64", "a11y_xml", "reset"}`. Response: an action
/// object whose target is an `index` into the list encoding of the screen
/// or a canonical `element_id`.
pub struct ProcessAgent {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl ProcessAgent {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self, ProcessError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(ProcessError::Spawn)?;
        let stdin = child.stdin.take().ok_or(ProcessError::Closed)?;
        let stdout = BufReader::new(child.stdout.take().ok_or(ProcessError::Closed)?);
        Ok(Self { child, stdin, stdout })
    }

    fn exchange(&mut self, step: &AgentStep<'_>) -> Result<Value, ProcessError> {
        let request = json!({
            "goal": step.goal,
            "screenshot_b64": base64::engine::general_purpose::STANDARD.encode(step.screen.png),
            "a11y_xml": String::from_utf8_lossy(step.screen.xml),
            "reset": step.reset,
        });
        writeln!(self.stdin, "{request}")?;
        self.stdin.flush()?;
        let mut line = String::new();
        if self.stdout.read_line(&mut line)? == 0 {
            return Err(ProcessError::Closed);
        }
        Ok(serde_json::from_str(line.trim())?)
    }
}

fn resolve(response: &Value, xml: &[u8]) -> Result<Action, String> {
    let obj = response.as_object().ok_or("response is not a JSON object")?;
    let list = parse_a11y(xml).ok().map(|t| UiElementList::from_tree(&t));
    Action::from_fields(obj, |obj, kind| {
        if let Some(id) = obj.get("element_id").and_then(Value::as_str) {
            return Ok(ElementId::new(id));
        }
        let index = obj
            .get("index")
            .and_then(Value::as_u64)
            .ok_or(ActionShapeError::MissingField { kind, field: "index" })?;
        list.as_ref()
            .and_then(|l| l.index_map.canonical(index as usize))
            .cloned()
            .ok_or_else(|| ActionShapeError::InvalidField {
                field: "index",
                detail: format!("{index} is not on this screen"),
            })
    })
    .map_err(|e| e.to_string())
}

impl EndToEndAgent for ProcessAgent {
    fn act(&mut self, step: &AgentStep<'_>) -> AgentTurn {
        match self.exchange(step) {
            Ok(response) => {
                let mut turn = match resolve(&response, step.screen.xml) {
                    Ok(action) => AgentTurn::action(action),
                    Err(reason) => AgentTurn {
                        prediction: Prediction::invalid(reason),
                        ..AgentTurn::action(Action::finish())
                    },
                };
                turn.raw_response = Some(response.to_string());
                turn
            }
            Err(e) => AgentTurn::failed(e.to_string()),
        }
    }
}

impl Drop for ProcessAgent {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::ScreenInput;

    const XML: &str = r#"<hierarchy><node class="android.widget.Button" resource-id="ok" text="OK" clickable="true" bounds="[0,0][10,10]"/></hierarchy>"#;

    fn step() -> AgentStep<'static> {
        AgentStep {
            goal: "tap ok",
            step: 0,
            screen: ScreenInput {
                png: b"",
                xml: XML.as_bytes(),
            },
            outcome_screen: None,
            reset: true,
            replay: None,
        }
    }

    #[test]
    fn echo_loop_index() {
        let script = r#"while read line; do echo '{"action type": "click", "index": 0}'; done"#;
        let mut agent = ProcessAgent::spawn("sh", &["-c".into(), script.into()]).unwrap();
        for _ in 0..2 {
            let turn = agent.act(&step());
            assert_eq!(
                turn.prediction,
                Prediction::Action(Action::Click {
                    target: ElementId::new("ok")
                })
            );
        }
    }

    #[test]
    fn bad_index_and_exit() {
        let script = r#"read line; echo '{"action type": "click", "index": 7}'"#;
        let mut agent = ProcessAgent::spawn("sh", &["-c".into(), script.into()]).unwrap();
        assert!(matches!(agent.act(&step()).prediction, Prediction::Invalid { .. }));
        let turn = agent.act(&step());
        assert!(turn.error.is_some());
    }
}
