//! The executable artifact: a branching plan that carries everything the
//! simulator needs, so it can be run without the domain files.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{Atom, Literal, OpKind, Outcome};
use crate::plangraph::{Context, Link, StepId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CptRow {
    pub parents: Vec<String>,
    pub probs: Vec<f64>,
}

/// One plan step with its operator semantics inlined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub id: StepId,
    pub name: String,
    pub kind: OpKind,
    pub pre: Vec<Literal>,
    pub outcomes: Vec<Outcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observes: Option<Atom>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub influences: Vec<Atom>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cpt: Vec<CptRow>,
    pub context: Context,
}

impl PlanStep {
    pub fn touches(&self, atom: &Atom) -> bool {
        self.observes.as_ref() == Some(atom) || self.outcomes.iter().any(|o| o.sets(atom).is_some())
    }

    pub fn outcome_index(&self, name: &str) -> Option<usize> {
        self.outcomes.iter().position(|o| o.name == name)
    }

    pub fn cpt_row(&self, parents: &[String]) -> Option<&[f64]> {
        self.cpt.iter().find(|r| r.parents == parents).map(|r| r.probs.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub outcome: String,
    pub node: PlanNode,
}

/// Execution tree. Deterministic steps chain through `Act`, branching
/// steps fan out through `Branch`, and every path ends in a leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "kebab-case")]
pub enum PlanNode {
    Act { step: StepId, next: Box<PlanNode> },
    Branch { step: StepId, arms: Vec<Arm> },
    Goal { step: StepId, context: Context },
    GiveUp { context: Context },
}

/// One root-to-leaf path, for reading and reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub context: Context,
    pub steps: Vec<StepId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<StepId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConditionalPlan {
    pub steps: Vec<PlanStep>,
    pub tree: PlanNode,
    pub branches: Vec<Branch>,
    /// Contexts of the covered goal steps.
    pub contexts: Vec<Context>,
    pub links: Vec<Link>,
    pub achieved_mass: f64,
    pub uncovered_contexts: Vec<Context>,
    /// Known initial values; everything else comes from `net`.
    pub initial: BTreeMap<String, bool>,
    pub goals: Vec<Literal>,
    pub model: String,
    pub epsilon: f64,
    /// The prior belief network in `BeliefNet::to_json` layout.
    pub net: serde_json::Value,
}

impl ConditionalPlan {
    pub fn step(&self, id: StepId) -> Option<&PlanStep> {
        self.steps.iter().find(|s| s.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Number of branching points on the longest path.
    pub fn branch_points(&self) -> Vec<StepId> {
        let mut out = Vec::new();
        collect_branches(&self.tree, &mut out);
        out.sort_unstable();
        out.dedup();
        out
    }
}

fn collect_branches(n: &PlanNode, out: &mut Vec<StepId>) {
    match n {
        PlanNode::Act { next, .. } => collect_branches(next, out),
        PlanNode::Branch { step, arms } => {
            out.push(*step);
            for a in arms {
                collect_branches(&a.node, out);
            }
        }
        PlanNode::Goal { .. } | PlanNode::GiveUp { .. } => {}
    }
}

/// Flattens the execution tree into root-to-leaf paths.
pub fn branches_of(tree: &PlanNode) -> Vec<Branch> {
    let mut out = Vec::new();
    walk(tree, &mut Vec::new(), &mut out);
    out
}

fn walk(n: &PlanNode, prefix: &mut Vec<StepId>, out: &mut Vec<Branch>) {
    match n {
        PlanNode::Act { step, next } => {
            prefix.push(*step);
            walk(next, prefix, out);
            prefix.pop();
        }
        PlanNode::Branch { step, arms } => {
            prefix.push(*step);
            for a in arms {
                walk(&a.node, prefix, out);
            }
            prefix.pop();
        }
        PlanNode::Goal { step, context } => out.push(Branch {
            context: context.clone(),
            steps: prefix.clone(),
            goal: Some(*step),
        }),
        PlanNode::GiveUp { context } => out.push(Branch {
            context: context.clone(),
            steps: prefix.clone(),
            goal: None,
        }),
    }
}
