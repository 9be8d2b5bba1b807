use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dataset::{Action, AnnotatedAction, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vote {
    Keep,
    Drop,
}

/// One annotator's verdicts on a step. Verdicts are keyed by
/// [`Action::key`], which also covers additions surfaced from others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatorDecision {
    pub annotator_id: String,
    /// Filled from the request path by the service.
    #[serde(default)]
    pub task_id: String,
    #[serde(default)]
    pub step: usize,
    #[serde(default)]
    pub verdicts: BTreeMap<String, Vote>,
    #[serde(default)]
    pub additions: Vec<Action>,
    /// Step version the annotator saw.
    #[serde(default)]
    pub version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub action: Action,
    pub provenance: Provenance,
    pub keeps: usize,
    pub of: usize,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteResolution {
    pub final_actions: Vec<AnnotatedAction>,
    pub vote_tally: Vec<Tally>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VoteError {
    #[error("{got} decisions, {need} required")]
    TooFewDecisions { got: usize, need: usize },
    #[error("annotator {0} decided twice")]
    DuplicateAnnotator(String),
    #[error("annotator {annotator} gave no verdict on candidate {key}")]
    MissingVerdict { annotator: String, key: String },
}

/// Majority vote over the step's candidates and human additions.
///
/// Candidates are the non-default actions up for review, LLM proposals and
/// any alternatives already on the step alike. A candidate survives with at least `threshold` keep votes. An addition
/// counts one vote for each annotator who proposed it or kept it once it was
/// surfaced. The default action is always first and never voted on. Output
/// order is candidates as listed, then additions by key, so it does not
/// depend on the order of decisions.
pub fn resolve_votes(
    default: &AnnotatedAction,
    candidates: &[AnnotatedAction],
    decisions: &[AnnotatorDecision],
    k: usize,
    threshold: usize,
) -> Result<VoteResolution, VoteError> {
    if decisions.len() < k {
        return Err(VoteError::TooFewDecisions {
            got: decisions.len(),
            need: k,
        });
    }
    let mut seen = BTreeSet::new();
    for d in decisions {
        if !seen.insert(d.annotator_id.as_str()) {
            return Err(VoteError::DuplicateAnnotator(d.annotator_id.clone()));
        }
    }
    let candidate_keys: Vec<String> = candidates.iter().map(|c| c.action.key()).collect();
    for d in decisions {
        for key in &candidate_keys {
            let proposed = d.additions.iter().any(|a| &a.key() == key);
            if !proposed && !d.verdicts.contains_key(key) {
                return Err(VoteError::MissingVerdict {
                    annotator: d.annotator_id.clone(),
                    key: key.clone(),
                });
            }
        }
    }
    let default_key = default.action.key();
    let mut additions: BTreeMap<String, Action> = BTreeMap::new();
    for d in decisions {
        for a in &d.additions {
            let key = a.key();
            if key != default_key && !candidate_keys.contains(&key) {
                additions.entry(key).or_insert_with(|| a.clone());
            }
        }
    }
    let keeps = |key: &str| {
        decisions
            .iter()
            .filter(|d| d.verdicts.get(key) == Some(&Vote::Keep) || d.additions.iter().any(|a| a.key() == key))
            .count()
    };
    let mut final_actions = vec![default.clone()];
    let mut vote_tally = Vec::new();
    let mut consider = |annotated: AnnotatedAction| {
        let n = keeps(&annotated.action.key());
        let kept = n >= threshold;
        vote_tally.push(Tally {
            action: annotated.action.clone(),
            provenance: annotated.provenance,
            keeps: n,
            of: decisions.len(),
            kept,
        });
        if kept {
            final_actions.push(AnnotatedAction {
                is_default: false,
                ..annotated
            });
        }
    };
    let mut listed = BTreeSet::new();
    for c in candidates {
        let key = c.action.key();
        if key != default_key && listed.insert(key) {
            consider(c.clone());
        }
    }
    for a in additions.into_values() {
        consider(AnnotatedAction::new(a, false, Provenance::HumanAdded));
    }
    Ok(VoteResolution {
        final_actions,
        vote_tally,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ElementId;
    use proptest::prelude::*;

    fn click(id: &str) -> Action {
        Action::Click {
            target: ElementId::new(id),
        }
    }

    fn cand(a: &Action) -> AnnotatedAction {
        AnnotatedAction::new(a.clone(), false, Provenance::LlmCandidate)
    }

    fn default() -> AnnotatedAction {
        AnnotatedAction::new(click("d"), true, Provenance::SourceDataset)
    }

    fn decision(id: &str, votes: &[(Action, Vote)], additions: Vec<Action>) -> AnnotatorDecision {
        AnnotatorDecision {
            annotator_id: id.into(),
            task_id: "t".into(),
            step: 0,
            verdicts: votes.iter().map(|(a, v)| (a.key(), *v)).collect(),
            additions,
            version: 0,
        }
    }

    #[test]
    fn majority_rules() {
        let c = click("c");
        let ds = |v: [Vote; 3]| {
            vec![
                decision("a", &[(c.clone(), v[0])], vec![]),
                decision("b", &[(c.clone(), v[1])], vec![]),
                decision("z", &[(c.clone(), v[2])], vec![]),
            ]
        };
        let r = resolve_votes(&default(), &[cand(&c)], &ds([Vote::Keep, Vote::Keep, Vote::Drop]), 3, 2).unwrap();
        assert_eq!(r.final_actions.len(), 2);
        assert_eq!(r.vote_tally[0].keeps, 2);
        let r = resolve_votes(&default(), &[cand(&c)], &ds([Vote::Keep, Vote::Drop, Vote::Drop]), 3, 2).unwrap();
        assert_eq!(r.final_actions, vec![default()]);
    }

    #[test]
    fn additions_need_an_endorsement() {
        let add = Action::NavigateBack;
        let ds = vec![
            decision("a", &[], vec![add.clone()]),
            decision("b", &[(add.clone(), Vote::Keep)], vec![]),
            decision("c", &[(add.clone(), Vote::Drop)], vec![]),
        ];
        let r = resolve_votes(&default(), &[], &ds, 3, 2).unwrap();
        assert_eq!(r.final_actions[1].action, add);
        assert_eq!(r.final_actions[1].provenance, Provenance::HumanAdded);
        let lonely = vec![decision("a", &[], vec![add]), decision("b", &[], vec![]), decision("c", &[], vec![])];
        assert_eq!(resolve_votes(&default(), &[], &lonely, 3, 2).unwrap().final_actions.len(), 1);
    }

    #[test]
    fn errors() {
        let one = vec![decision("a", &[], vec![])];
        assert_eq!(
            resolve_votes(&default(), &[], &one, 3, 2),
            Err(VoteError::TooFewDecisions { got: 1, need: 3 })
        );
        let dup = vec![decision("a", &[], vec![]), decision("a", &[], vec![]), decision("b", &[], vec![])];
        assert_eq!(resolve_votes(&default(), &[], &dup, 3, 2), Err(VoteError::DuplicateAnnotator("a".into())));
        let c = click("c");
        let missing = vec![decision("a", &[], vec![]), decision("b", &[], vec![]), decision("z", &[], vec![])];
        assert!(matches!(
            resolve_votes(&default(), &[cand(&c)], &missing, 3, 2),
            Err(VoteError::MissingVerdict { .. })
        ));
    }

    fn arb_vote() -> impl Strategy<Value = Vote> {
        prop_oneof![Just(Vote::Keep), Just(Vote::Drop)]
    }

    proptest! {
        #[test]
        fn permutation_invariant_and_default_preserved(
            votes in prop::collection::vec(prop::collection::vec(arb_vote(), 3), 3),
            adds in prop::collection::vec(prop::collection::vec(0usize..4, 0..3), 3),
            shift in 0usize..3,
        ) {
            let candidates = vec![click("c0"), click("c1"), click("d")];
            let pool_in: Vec<AnnotatedAction> = candidates.iter().map(cand).collect();
            let pool = [Action::NavigateBack, click("x"), click("c1"), click("d")];
            let mut ds: Vec<AnnotatorDecision> = (0..3).map(|i| {
                let v: Vec<(Action, Vote)> = candidates.iter().cloned().zip(votes[i].iter().copied()).collect();
                decision(&format!("ann{i}"), &v, adds[i].iter().map(|&j| pool[j].clone()).collect())
            }).collect();
            let r1 = resolve_votes(&default(), &pool_in, &ds, 3, 2).unwrap();
            ds.rotate_left(shift);
            let r2 = resolve_votes(&default(), &pool_in, &ds, 3, 2).unwrap();
            prop_assert_eq!(&r1, &r2);
            prop_assert_eq!(&r1.final_actions[0], &default());
            prop_assert_eq!(r1.final_actions.iter().filter(|a| a.is_default).count(), 1);
            let default_key = default().action.key();
            prop_assert!(r1.final_actions.iter().filter(|a| a.action.key() == default_key).count() == 1);
        }
    }
}
