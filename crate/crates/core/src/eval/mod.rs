//! Multi-branch replay: action matching, per-task replay along the default
//! trajectory, run aggregation, reports and prediction logs.

mod log;
mod replay;
mod report;

use serde::{Deserialize, Serialize};

use crate::dataset::{Action, AnnotatedAction, Prediction};

pub use log::{prediction_log, read_prediction_log, write_prediction_log, PredictionRecord, ReplayAgent};
pub use replay::{evaluate_run, evaluate_task, EvalError, EvalSettings, StepOutcome, TaskResult};
pub use report::{fidelity, render_report_table, Breakdown, FidelityError, ReflectionStats, RunReport, Totals};

/// Trim, case-fold and collapse internal whitespace.
pub fn normalize_text(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextNormalization {
    Exact,
    #[default]
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppMatch {
    /// Case-insensitive against the app name and its aliases.
    #[default]
    ExactCiWithAliases,
}

/// Equality rules for predicted versus annotated actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchPolicy {
    #[serde(default)]
    pub text_normalization: TextNormalization,
    #[serde(default)]
    pub app_match: AppMatch,
    #[serde(default)]
    pub finish_requires_status: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    #[default]
    MultiBranch,
    /// Only the default action counts.
    SinglePath,
}

impl EvalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::MultiBranch => "multi_branch",
            EvalMode::SinglePath => "single_path",
        }
    }

    /// Accepts `multi_branch`/`multi-branch` and `single_path`/`single-path`.
    pub fn parse(raw: &str) -> Option<Self> {
        match raw.trim().replace('-', "_").as_str() {
            "multi_branch" => Some(EvalMode::MultiBranch),
            "single_path" => Some(EvalMode::SinglePath),
            _ => None,
        }
    }
}

fn text_eq(policy: &MatchPolicy, predicted: &str, annotated: &AnnotatedAction, expected: &str) -> bool {
    let eq = |a: &str, b: &str| match policy.text_normalization {
        TextNormalization::Exact => a == b,
        TextNormalization::Normalized => normalize_text(a) == normalize_text(b),
    };
    eq(predicted, expected) || annotated.text_alternatives.iter().any(|alt| eq(predicted, alt))
}

fn app_eq(predicted: &str, annotated: &AnnotatedAction, expected: &str) -> bool {
    let p = predicted.trim().to_lowercase();
    std::iter::once(expected)
        .chain(annotated.app_aliases.iter().map(String::as_str))
        .any(|name| name.trim().to_lowercase() == p)
}

/// Whether `predicted` is the same action as one annotation.
pub fn action_matches(predicted: &Action, annotated: &AnnotatedAction, policy: &MatchPolicy) -> bool {
    match (predicted, &annotated.action) {
        (Action::Click { target: a }, Action::Click { target: b }) => a == b,
        (Action::Input { target: a, text: t }, Action::Input { target: b, text: u }) => {
            a == b && text_eq(policy, t, annotated, u)
        }
        (Action::Scroll { direction: a }, Action::Scroll { direction: b }) => a == b,
        (Action::NavigateBack, Action::NavigateBack) => true,
        (Action::OpenApp { app_name: a }, Action::OpenApp { app_name: b }) => app_eq(a, annotated, b),
        (Action::Finish { status: a }, Action::Finish { status: b }) => {
            !policy.finish_requires_status || a.as_deref().map(str::trim) == b.as_deref().map(str::trim)
        }
        _ => false,
    }
}

/// Index of the first annotation the prediction matches. The invalid
/// sentinel matches nothing.
pub fn match_action(predicted: &Prediction, valid: &[AnnotatedAction], policy: &MatchPolicy) -> Option<usize> {
    let action = predicted.action()?;
    valid.iter().position(|a| action_matches(action, a, policy))
}

/// Matching under a mode: single-path compares against the default only.
pub fn match_in_mode(
    predicted: &Prediction,
    valid: &[AnnotatedAction],
    policy: &MatchPolicy,
    mode: EvalMode,
) -> Option<usize> {
    match mode {
        EvalMode::MultiBranch => match_action(predicted, valid, policy),
        EvalMode::SinglePath => {
            let i = valid.iter().position(|a| a.is_default)?;
            match_action(predicted, &valid[i..=i], policy).map(|_| i)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Direction, ElementId, Provenance};
    use proptest::prelude::*;

    fn ann(action: Action, default: bool) -> AnnotatedAction {
        AnnotatedAction::new(action, default, Provenance::SourceDataset)
    }

    fn click(id: &str) -> Action {
        Action::Click {
            target: ElementId::new(id),
        }
    }

    #[test]
    fn spec_examples() {
        let p = MatchPolicy::default();
        assert_eq!(match_action(&Prediction::Action(click("X")), &[ann(click("X"), true)], &p), Some(0));
        let input = |t: &str| Action::Input {
            target: ElementId::new("X"),
            text: t.into(),
        };
        assert_eq!(
            match_action(&Prediction::Action(input("Winter")), &[ann(input("winter"), true)], &p),
            Some(0)
        );
        let exact = MatchPolicy {
            text_normalization: TextNormalization::Exact,
            ..p
        };
        assert_eq!(match_action(&Prediction::Action(input("Winter")), &[ann(input("winter"), true)], &exact), None);
        let up = Action::Scroll { direction: Direction::Up };
        let down = Action::Scroll {
            direction: Direction::Down,
        };
        assert_eq!(
            match_action(&Prediction::Action(up), &[ann(down, true), ann(click("a"), false)], &p),
            None
        );
        assert_eq!(match_action(&Prediction::invalid("x"), &[ann(click("a"), true)], &p), None);
    }

    #[test]
    fn aliases_and_alternatives() {
        let p = MatchPolicy::default();
        let mut a = ann(
            Action::OpenApp {
                app_name: "Clock".into(),
            },
            true,
        );
        a.app_aliases.push("Alarm & Clock".into());
        let open = |n: &str| Prediction::Action(Action::OpenApp { app_name: n.into() });
        assert!(match_action(&open("clock"), std::slice::from_ref(&a), &p).is_some());
        assert!(match_action(&open("alarm & clock"), std::slice::from_ref(&a), &p).is_some());
        assert!(match_action(&open("Calendar"), std::slice::from_ref(&a), &p).is_none());

        let mut i = ann(
            Action::Input {
                target: ElementId::new("q"),
                text: "jacket".into(),
            },
            true,
        );
        i.text_alternatives.push("winter jacket".into());
        let pred = Prediction::Action(Action::Input {
            target: ElementId::new("q"),
            text: " Winter  Jacket ".into(),
        });
        assert!(match_action(&pred, &[i], &p).is_some());
    }

    #[test]
    fn finish_status() {
        let done = ann(Action::finish(), true);
        let bare = Prediction::Action(Action::Finish { status: None });
        assert!(match_action(&bare, std::slice::from_ref(&done), &MatchPolicy::default()).is_some());
        let strict = MatchPolicy {
            finish_requires_status: true,
            ..Default::default()
        };
        assert!(match_action(&bare, &[done], &strict).is_none());
    }

    #[test]
    fn single_path_uses_default_only() {
        let valid = [ann(click("a"), false), ann(click("b"), true)];
        let p = MatchPolicy::default();
        let pa = Prediction::Action(click("a"));
        assert_eq!(match_in_mode(&pa, &valid, &p, EvalMode::MultiBranch), Some(0));
        assert_eq!(match_in_mode(&pa, &valid, &p, EvalMode::SinglePath), None);
        let pb = Prediction::Action(click("b"));
        assert_eq!(match_in_mode(&pb, &valid, &p, EvalMode::SinglePath), Some(1));
    }

    fn arb_action() -> impl Strategy<Value = Action> {
        prop_oneof![
            (0u8..4).prop_map(|i| click(&format!("e{i}"))),
            (0u8..3, prop::sample::select(vec!["Hi", "hi", "yo"])).prop_map(|(i, t)| Action::Input {
                target: ElementId::new(format!("e{i}")),
                text: t.into()
            }),
            prop::sample::select(vec![Direction::Up, Direction::Down]).prop_map(|direction| Action::Scroll { direction }),
            Just(Action::NavigateBack),
            Just(Action::finish()),
        ]
    }

    proptest! {
        #[test]
        fn verdict_is_order_independent(
            pred in arb_action(),
            valid in prop::collection::vec(arb_action(), 1..6),
            shift in 0usize..6,
        ) {
            let p = MatchPolicy::default();
            let anns: Vec<AnnotatedAction> = valid.iter().enumerate().map(|(i, a)| ann(a.clone(), i == 0)).collect();
            let mut rotated = anns.clone();
            rotated.rotate_left(shift % anns.len());
            let pred = Prediction::Action(pred);
            prop_assert_eq!(
                match_action(&pred, &anns, &p).is_some(),
                match_action(&pred, &rotated, &p).is_some()
            );
            // single-path success implies multi-branch success
            if match_in_mode(&pred, &anns, &p, EvalMode::SinglePath).is_some() {
                prop_assert!(match_in_mode(&pred, &anns, &p, EvalMode::MultiBranch).is_some());
            }
        }
    }
}
