use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub type StepId = usize;

/// What a label refers to: the outcome of a plan step, or the value of a
/// belief-network variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LabelSource {
    Step(StepId),
    Var(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Label {
    pub source: LabelSource,
    pub outcome: String,
}

impl Label {
    pub fn step(step: StepId, outcome: impl Into<String>) -> Self {
        Label {
            source: LabelSource::Step(step),
            outcome: outcome.into(),
        }
    }

    pub fn var(var: impl Into<String>, outcome: impl Into<String>) -> Self {
        Label {
            source: LabelSource::Var(var.into()),
            outcome: outcome.into(),
        }
    }

    pub fn conflicts(&self, other: &Label) -> bool {
        self.source == other.source && self.outcome != other.outcome
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.source {
            LabelSource::Step(s) => write!(f, "s{s}={}", self.outcome),
            LabelSource::Var(v) => write!(f, "{v}={}", self.outcome),
        }
    }
}

/// A set of outcome labels identifying a branch. Empty is universal.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Context(BTreeSet<Label>);

impl Context {
    pub fn universal() -> Self {
        Context::default()
    }

    pub fn from_labels(labels: impl IntoIterator<Item = Label>) -> Self {
        Context(labels.into_iter().collect())
    }

    pub fn labels(&self) -> impl Iterator<Item = &Label> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, l: &Label) -> bool {
        self.0.contains(l)
    }

    pub fn insert(&mut self, l: Label) {
        self.0.insert(l);
    }

    pub fn with(&self, l: Label) -> Context {
        let mut c = self.clone();
        c.insert(l);
        c
    }

    pub fn union(&self, other: &Context) -> Context {
        Context(self.0.union(&other.0).cloned().collect())
    }

    pub fn is_subset(&self, other: &Context) -> bool {
        self.0.is_subset(&other.0)
    }

    /// No two labels share a source with differing outcomes.
    pub fn is_consistent(&self) -> bool {
        let mut prev: Option<&Label> = None;
        for l in &self.0 {
            if let Some(p) = prev {
                if p.conflicts(l) {
                    return false;
                }
            }
            prev = Some(l);
        }
        true
    }

    pub fn outcome_of(&self, source: &LabelSource) -> Option<&str> {
        self.0.iter().find(|l| &l.source == source).map(|l| l.outcome.as_str())
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// True iff the union of two consistent contexts is consistent.
pub fn contexts_compatible(a: &Context, b: &Context) -> bool {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small
        .labels()
        .all(|l| large.outcome_of(&l.source).is_none_or(|o| o == l.outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ctx(ls: &[(usize, &str)]) -> Context {
        Context::from_labels(ls.iter().map(|(s, o)| Label::step(*s, *o)))
    }

    #[test]
    fn same_source_different_outcome() {
        // two outcomes of the same observation step
        assert!(!contexts_compatible(&ctx(&[(1, "clear")]), &ctx(&[(1, "blocked")])));
    }

    #[test]
    fn universal_is_compatible_with_everything() {
        let c = ctx(&[(1, "a"), (2, "b")]);
        assert!(contexts_compatible(&Context::universal(), &c));
        assert!(contexts_compatible(&c, &Context::universal()));
    }

    #[test]
    fn overlapping_without_conflict() {
        // {α1,β2} vs {β2,γ1}
        assert!(contexts_compatible(
            &ctx(&[(1, "1"), (2, "2")]),
            &ctx(&[(2, "2"), (3, "1")])
        ));
    }

    fn arb_context() -> impl Strategy<Value = Context> {
        prop::collection::btree_map(0usize..5, 0usize..3, 0..5)
            .prop_map(|m| Context::from_labels(m.into_iter().map(|(s, o)| Label::step(s, o.to_string()))))
    }

    proptest! {
        #[test]
        fn compatibility_is_symmetric_and_reflexive(a in arb_context(), b in arb_context()) {
            prop_assert!(contexts_compatible(&a, &a));
            prop_assert_eq!(contexts_compatible(&a, &b), contexts_compatible(&b, &a));
            prop_assert_eq!(contexts_compatible(&a, &b), a.union(&b).is_consistent());
        }
    }
}
