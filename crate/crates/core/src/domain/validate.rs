use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use super::{Atom, GroundDomain, GroundOp, Problem};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", content = "atom", rename_all = "kebab-case")]
pub enum Diagnostic {
    /// Listed as both initially true and initially false.
    Contradiction(Atom),
    /// Has a known initial value and is also governed by a prior clause.
    DoublyCovered(Atom),
    /// Neither known nor governed by a prior clause.
    Uncovered(Atom),
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Contradiction(a) => write!(f, "{a} is both initially true and false"),
            Diagnostic::DoublyCovered(a) => write!(f, "{a} has a known value and a prior"),
            Diagnostic::Uncovered(a) => write!(f, "{a} has neither a known value nor a prior"),
        }
    }
}

/// Checks that the initial state is complete modulo uncertainty: every
/// proposition the domain mentions is known true, known false, or governed
/// by exactly one prior clause.
pub fn validate_problem(problem: &Problem, domain: &GroundDomain) -> Vec<Diagnostic> {
    let mut diags = BTreeSet::new();
    let priors: BTreeSet<&Atom> = domain.clauses.iter().map(|c| &c.head).collect();
    let known_true: BTreeSet<&Atom> = problem.known_true.iter().collect();
    let known_false: BTreeSet<&Atom> = problem.known_false.iter().collect();

    for a in known_true.intersection(&known_false) {
        diags.insert(Diagnostic::Contradiction((*a).clone()));
    }
    for a in known_true.union(&known_false) {
        if priors.contains(a) {
            diags.insert(Diagnostic::DoublyCovered((*a).clone()));
        }
    }

    let mut mentioned: BTreeSet<&Atom> = domain.ops.iter().flat_map(GroundOp::mentioned_atoms).collect();
    mentioned.extend(problem.goals.iter().map(|g| &g.atom));
    mentioned.extend(problem.unknown.iter());
    mentioned.extend(domain.clauses.iter().flat_map(|c| c.parents.iter()));
    for a in mentioned {
        if !domain.initial.contains_key(a) && !priors.contains(a) {
            diags.insert(Diagnostic::Uncovered(a.clone()));
        }
    }

    diags.into_iter().collect()
}
