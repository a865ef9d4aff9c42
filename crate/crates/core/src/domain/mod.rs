//! Planning domains: propositions, operator schemas with outcome families,
//! probabilistic clauses for model construction, and problem instances.

mod ground;
mod parse;
mod render;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use ground::{ground, GroundClause, GroundDomain, GroundOp};
pub use parse::{cartesian as cartesian_product, parse_domain, parse_problem};
pub use render::{render_domain, render_problem};
pub use validate::{validate_problem, Diagnostic};

/// Tolerance applied when checking that a distribution sums to one.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// A (possibly lifted) atomic proposition such as `clear(B,S)`.
///
/// Arguments beginning with `?` are schema variables.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub name: String,
    pub args: Vec<String>,
}

impl Atom {
    pub fn new(name: impl Into<String>, args: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Atom {
            name: name.into(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }

    pub fn nullary(name: impl Into<String>) -> Self {
        Atom {
            name: name.into(),
            args: Vec::new(),
        }
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(|a| !a.starts_with('?'))
    }

    pub(crate) fn substitute(&self, binding: &BTreeMap<String, String>) -> Atom {
        Atom {
            name: self.name.clone(),
            args: self
                .args
                .iter()
                .map(|a| binding.get(a).cloned().unwrap_or_else(|| a.clone()))
                .collect(),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.args.is_empty() {
            write!(f, "{}", self.name)
        } else {
            write!(f, "{}({})", self.name, self.args.join(","))
        }
    }
}

/// Polarity of a literal. `Unknown` is the ignorance condition: the agent
/// does not know the value of the atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sign {
    Pos,
    Neg,
    Unknown,
}

/// A proposition or its negation (or an ignorance condition on an atom).
/// A literal and its negation unify on the underlying atom.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Literal {
    pub atom: Atom,
    pub sign: Sign,
}

impl Literal {
    pub fn pos(atom: Atom) -> Self {
        Literal {
            atom,
            sign: Sign::Pos,
        }
    }

    pub fn neg(atom: Atom) -> Self {
        Literal {
            atom,
            sign: Sign::Neg,
        }
    }

    pub fn unknown(atom: Atom) -> Self {
        Literal {
            atom,
            sign: Sign::Unknown,
        }
    }

    pub fn negated(&self) -> bool {
        self.sign == Sign::Neg
    }

    /// Truth value required by a positive or negative literal.
    pub fn value(&self) -> Option<bool> {
        match self.sign {
            Sign::Pos => Some(true),
            Sign::Neg => Some(false),
            Sign::Unknown => None,
        }
    }

    pub fn from_value(atom: Atom, value: bool) -> Self {
        if value {
            Literal::pos(atom)
        } else {
            Literal::neg(atom)
        }
    }

    pub(crate) fn substitute(&self, binding: &BTreeMap<String, String>) -> Literal {
        Literal {
            atom: self.atom.substitute(binding),
            sign: self.sign,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sign {
            Sign::Pos => write!(f, "{}", self.atom),
            Sign::Neg => write!(f, "not {}", self.atom),
            Sign::Unknown => write!(f, "unknown {}", self.atom),
        }
    }
}

/// One possible result of executing an operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub name: String,
    pub add: Vec<Atom>,
    pub del: Vec<Atom>,
}

impl Outcome {
    /// Value this outcome assigns to `atom`, if it touches it at all.
    pub fn sets(&self, atom: &Atom) -> Option<bool> {
        if self.add.contains(atom) {
            Some(true)
        } else if self.del.contains(atom) {
            Some(false)
        } else {
            None
        }
    }

    pub fn establishes(&self, lit: &Literal) -> bool {
        match lit.value() {
            Some(v) => self.sets(&lit.atom) == Some(v),
            None => false,
        }
    }
}

/// The mutually exclusive outcomes of an operator; exactly one occurs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeFamily {
    pub id: String,
    pub outcomes: Vec<Outcome>,
}

impl OutcomeFamily {
    pub fn names(&self) -> Vec<String> {
        self.outcomes.iter().map(|o| o.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.outcomes.iter().position(|o| o.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    #[serde(rename = "det")]
    Deterministic,
    #[serde(rename = "cond")]
    Conditional,
    #[serde(rename = "obs")]
    Observation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub var: String,
    pub ty: String,
}

/// Conditional probability table.
///
/// Each row is keyed by an assignment to the parents (in declaration order)
/// and holds one probability per head outcome, aligned with the head's
/// outcome list. A parentless table has a single row keyed by `[]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Cpt {
    pub rows: BTreeMap<Vec<String>, Vec<f64>>,
}

impl Cpt {
    pub fn unconditional(probs: Vec<f64>) -> Self {
        let mut rows = BTreeMap::new();
        rows.insert(Vec::new(), probs);
        Cpt { rows }
    }

    pub fn row(&self, parents: &[String]) -> Option<&[f64]> {
        self.rows.get(parents).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSchema {
    pub name: String,
    pub params: Vec<Param>,
    pub pre: Vec<Literal>,
    pub kind: OpKind,
    pub effects: OutcomeFamily,
    /// Outcome probabilities for the independence model, aligned with
    /// `effects.outcomes`.
    pub simple_distribution: Option<Vec<f64>>,
    /// The variable an observation operator reveals.
    pub observes: Option<Atom>,
    /// Variables whose value changes this operator's outcome distribution.
    pub influences: Vec<Atom>,
    /// Outcome distribution conditioned on the influences.
    pub influence_cpt: Option<Cpt>,
}

/// A conditional outcome statement: a random variable, the variables that
/// influence it, and its conditional distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbmcClause {
    pub head: Atom,
    pub outcomes: Vec<String>,
    pub body: Vec<Atom>,
    pub cpt: Cpt,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Domain {
    pub operators: Vec<OperatorSchema>,
    pub clauses: Vec<KbmcClause>,
}

impl Domain {
    pub fn operator(&self, name: &str) -> Option<&OperatorSchema> {
        self.operators.iter().find(|o| o.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Problem {
    /// Constants grouped by type; a constant may carry several types.
    pub objects: BTreeMap<String, Vec<String>>,
    pub known_true: Vec<Atom>,
    pub known_false: Vec<Atom>,
    /// Atoms whose initial value is uncertain and governed by a prior clause.
    pub unknown: Vec<Atom>,
    /// Predicates whose unmentioned ground atoms are initially false.
    pub default_false: Vec<String>,
    pub goals: Vec<Literal>,
    pub epsilon: f64,
}

impl Problem {
    pub fn constants_of(&self, ty: &str) -> Vec<String> {
        if ty == "object" {
            let mut all: Vec<String> = self.objects.values().flatten().cloned().collect();
            all.sort();
            all.dedup();
            all
        } else {
            self.objects.get(ty).cloned().unwrap_or_default()
        }
    }
}
