//! Benchmark an agent that is not built from the modular slots. Anything
//! implementing `EndToEndAgent` can be replayed; here a keyword matcher
//! clicks the element whose label shares the most words with the goal.

use std::path::PathBuf;

use replaybench::agent::{AgentStep, AgentTurn, EndToEndAgent};
use replaybench::dataset::Action;
use replaybench::eval::{evaluate_run, render_report_table, EvalMode, EvalSettings};
use replaybench::load_dataset;
use replaybench::screen::{parse_a11y, UiElementList};

struct KeywordAgent {
    clicked: Vec<String>,
}

impl EndToEndAgent for KeywordAgent {
    fn act(&mut self, step: &AgentStep<'_>) -> AgentTurn {
        if step.reset {
            self.clicked.clear();
        }
        let Ok(tree) = parse_a11y(step.screen.xml) else {
            return AgentTurn::failed("unreadable screen");
        };
        let goal: Vec<String> = step.goal.to_lowercase().split_whitespace().map(str::to_owned).collect();
        let list = UiElementList::from_tree(&tree);
        let best = list
            .elements
            .iter()
            .filter(|e| e.clickable && !self.clicked.contains(&e.canonical_id.to_string()))
            .map(|e| {
                let label = format!("{} {}", e.text.as_deref().unwrap_or(""), e.content_desc.as_deref().unwrap_or(""));
                let score = label.to_lowercase().split_whitespace().filter(|w| goal.iter().any(|g| g == w)).count();
                (score, e)
            })
            .filter(|(score, _)| *score > 0)
            .max_by_key(|(score, _)| *score);
        match best {
            Some((_, e)) => {
                self.clicked.push(e.canonical_id.to_string());
                AgentTurn::action(Action::Click { target: e.canonical_id.clone() })
            }
            None => AgentTurn::action(Action::finish()),
        }
    }
}

pub fn main() {
    let tasks = load_dataset(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/dataset")).unwrap();
    let report = evaluate_run(
        &tasks,
        |_, _| Box::new(KeywordAgent { clicked: Vec::new() }),
        &EvalSettings::new(EvalMode::MultiBranch),
        None,
    )
    .unwrap();
    print!("{}", render_report_table("keyword agent", &report));
}
