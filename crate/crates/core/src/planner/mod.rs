//! ε-safe planners. Both run the same best-first search over plan values,
//! ordered by potential mass; they differ in plan shape and in how flaws
//! are resolved.

pub mod linear;
pub mod nonlinear;
mod search;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use linear::plan_linear;
pub use nonlinear::{make_init_plan, plan_nonlinear};
pub use search::SearchNode;

use crate::domain::{Atom, GroundDomain, GroundOp, Literal, OpKind};
use crate::error::PlanError;
use crate::plan::ConditionalPlan;
use crate::plangraph::{Link, LinkKind, PlanGraph, StepId};
use crate::probmodel::{ModelKind, SuccessBound};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerKind {
    Linear,
    Nonlinear,
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlannerKind::Linear => "linear",
            PlannerKind::Nonlinear => "nonlinear",
        })
    }
}

impl FromStr for PlannerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "linear" => Ok(PlannerKind::Linear),
            "nonlinear" => Ok(PlannerKind::Nonlinear),
            other => Err(format!("unknown planner `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    pub model: ModelKind,
    /// Overrides the problem's epsilon when set.
    pub epsilon: Option<f64>,
    /// Maximum number of node expansions.
    pub node_budget: usize,
    /// Most operator steps a plan may hold.
    pub max_steps: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            model: ModelKind::Kbmc,
            epsilon: None,
            node_budget: 10_000,
            max_steps: 24,
        }
    }
}

/// A successful search.
#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub plan: ConditionalPlan,
    pub graph: PlanGraph,
    pub bound: SuccessBound,
    pub expanded: usize,
}

pub fn solve(kind: PlannerKind, ground: &GroundDomain, config: &PlannerConfig) -> Result<PlanOutcome, PlanError> {
    match kind {
        PlannerKind::Linear => plan_linear(ground, config),
        PlannerKind::Nonlinear => plan_nonlinear(ground, config),
    }
}

/// Observation steps are usable only on variables that start out unknown.
pub(crate) fn usable(ground: &GroundDomain, op: &GroundOp) -> bool {
    match &op.observes {
        Some(x) => ground.is_prior(x) && !ground.initial.contains_key(x),
        None => true,
    }
}

/// Open items a freshly added step brings with it.
type OpenGoal = (StepId, Literal);
type OpenInfluence = (StepId, Atom);

pub(crate) fn new_step_items(
    ground: &GroundDomain,
    model: ModelKind,
    op: &GroundOp,
    step: StepId,
) -> (Vec<OpenGoal>, Vec<OpenInfluence>) {
    let mut goals: Vec<(StepId, Literal)> = op.pre.iter().map(|l| (step, l.clone())).collect();
    let mut influences = Vec::new();
    if let Some(x) = &op.observes {
        goals.push((step, Literal::unknown(x.clone())));
        if model == ModelKind::Kbmc {
            if let Some(c) = ground.clause(x) {
                influences.extend(c.parents.iter().map(|p| (step, p.clone())));
            }
        }
    }
    if model == ModelKind::Kbmc && op.kind == OpKind::Conditional {
        influences.extend(op.influences.iter().map(|x| (step, x.clone())));
    }
    (goals, influences)
}

pub(crate) fn bool_name(b: bool) -> String {
    if b { "true" } else { "false" }.to_string()
}

/// Whether a variable's outcome space is the boolean one, so that it can
/// also be set by add and delete lists.
pub(crate) fn is_boolean_var(ground: &GroundDomain, x: &Atom) -> bool {
    match ground.clause(x) {
        Some(c) => {
            let mut o = c.outcomes.clone();
            o.sort();
            o == ["false", "true"]
        }
        None => true,
    }
}

/// What a new link supports: a precondition, or a known value for an
/// influence.
#[derive(Debug, Clone)]
pub(crate) enum Target {
    Goal(Literal),
    Value(Atom, bool),
}

impl Target {
    pub(crate) fn atom(&self) -> &Atom {
        match self {
            Target::Goal(l) => &l.atom,
            Target::Value(a, _) => a,
        }
    }

    pub(crate) fn value(&self) -> bool {
        match self {
            Target::Goal(l) => l.value().expect("valued literal"),
            Target::Value(_, b) => *b,
        }
    }

    pub(crate) fn link(&self, producer: StepId, outcome: Option<String>, consumer: StepId) -> Link {
        match self {
            Target::Goal(l) => Link::causal(producer, l.clone(), outcome, consumer),
            Target::Value(a, b) => Link {
                kind: LinkKind::Influence {
                    var: a.clone(),
                    value: bool_name(*b),
                    outcome,
                },
                producer,
                consumer,
            },
        }
    }
}

/// Influence link recording that `producer` observed `var` as `outcome`.
pub(crate) fn observed(producer: StepId, var: &Atom, outcome: String, consumer: StepId) -> Link {
    Link {
        kind: LinkKind::Influence {
            var: var.clone(),
            value: outcome.clone(),
            outcome: Some(outcome),
        },
        producer,
        consumer,
    }
}
