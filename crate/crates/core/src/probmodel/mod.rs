//! Probability of plan contexts under the simple independence model and
//! under a belief network grown from prior clauses as steps are added.

mod infer;
mod net;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use infer::{conditional_outcome_probability, joint_probability, joint_probability_enumeration, VarLabel};
pub use net::{build_initial_net, BeliefNet, Variable};

use crate::domain::{cartesian_product, Atom, Cpt, GroundDomain, GroundOp, OpKind};
use crate::error::ModelError;
use crate::plangraph::{complete_goals, contexts_compatible, Context, LabelSource, LinkKind, PlanGraph, StepId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Simple,
    Kbmc,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Simple => "simple",
            ModelKind::Kbmc => "kbmc",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "simple" => Ok(ModelKind::Simple),
            "kbmc" => Ok(ModelKind::Kbmc),
            other => Err(format!("unknown model `{other}`")),
        }
    }
}

/// Slack used when comparing a summed mass with `1 - epsilon`.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SuccessBound {
    pub achieved_mass: f64,
    pub potential_mass: f64,
    pub epsilon: f64,
}

impl SuccessBound {
    pub fn accepted(&self) -> bool {
        self.achieved_mass >= 1.0 - self.epsilon - MASS_TOLERANCE
    }

    pub fn viable(&self) -> bool {
        self.potential_mass >= 1.0 - self.epsilon - MASS_TOLERANCE
    }
}

/// Belief-net name of the node added for a conditional step.
pub fn step_node_name(step: StepId) -> String {
    format!("step@{step}")
}

/// Product of the outcome probabilities of every label in the context.
pub fn simple_context_probability(plan: &PlanGraph, ground: &GroundDomain, context: &Context) -> Result<f64, ModelError> {
    let mut p = 1.0;
    for l in context.labels() {
        let LabelSource::Step(s) = l.source else {
            return Err(ModelError::UnknownVariable(l.to_string()));
        };
        let op = plan.ground_op(ground, s).ok_or(ModelError::LabelWithoutDistribution(s))?;
        let dist = op.distribution.as_ref().ok_or(ModelError::LabelWithoutDistribution(s))?;
        let i = op.family.index_of(&l.outcome).ok_or_else(|| ModelError::UnknownOutcome {
            var: op.name(),
            outcome: l.outcome.clone(),
        })?;
        p *= dist[i];
    }
    Ok(p)
}

/// Adds the node for a conditional step. Resolved influences are already
/// folded into `cpt` by the caller; only `open` influences become arcs.
pub fn add_conditional_node(
    net: &BeliefNet,
    name: &str,
    outcomes: &[String],
    open: &[String],
    cpt: &Cpt,
) -> Result<BeliefNet, ModelError> {
    net.with_variable(name, outcomes, open, cpt)
}

/// The labels an observation step's outcomes stand for: the observed
/// variable's own outcomes. No node is added.
pub fn bind_observation(net: &BeliefNet, op: &GroundOp, variable: &Atom) -> Result<Vec<VarLabel>, ModelError> {
    let name = variable.to_string();
    let var = net.get(&name).ok_or_else(|| ModelError::VariableNotInNet(name.clone()))?;
    let ops: BTreeSet<String> = op.family.names().into_iter().collect();
    let vars: BTreeSet<String> = var.outcomes.iter().cloned().collect();
    if ops != vars || op.family.outcomes.len() != var.outcomes.len() {
        return Err(ModelError::OutcomeSpaceMismatch {
            var: name,
            op: op.family.names(),
            net: var.outcomes.clone(),
        });
    }
    Ok(op.family.names().into_iter().map(|o| (name.clone(), o)).collect())
}

fn bool_name(b: bool) -> String {
    if b { "true" } else { "false" }.to_string()
}

/// Prior network plus one node per conditional step of the plan. Influences
/// known through an influence link select CPT rows; the rest become arcs
/// when they are network variables, and otherwise take their initial value.
pub fn plan_net(base: &BeliefNet, plan: &PlanGraph, ground: &GroundDomain) -> Result<BeliefNet, ModelError> {
    let mut net = base.clone();
    for s in plan.topological_order() {
        let Some(op) = plan.ground_op(ground, s) else { continue };
        if op.kind != OpKind::Conditional {
            continue;
        }
        let mut fixed: Vec<Option<String>> = Vec::with_capacity(op.influences.len());
        let mut arcs = Vec::new();
        for x in &op.influences {
            let linked = plan.links_into(s).find_map(|l| match &l.kind {
                LinkKind::Influence { var, value, .. } if var == x => Some(value.clone()),
                _ => None,
            });
            let name = x.to_string();
            match linked {
                Some(v) => fixed.push(Some(v)),
                None if base.contains(&name) => {
                    fixed.push(None);
                    arcs.push(name);
                }
                None => fixed.push(Some(bool_name(ground.initial.get(x).copied().unwrap_or(false)))),
            }
        }
        let spaces: Vec<Vec<String>> = arcs.iter().map(|a| base.get(a).expect("arc variable").outcomes.clone()).collect();
        let mut cpt = Cpt::default();
        for key in cartesian_product(&spaces) {
            let mut it = key.iter();
            let full: Vec<String> = fixed
                .iter()
                .map(|f| f.clone().unwrap_or_else(|| it.next().expect("arc value").clone()))
                .collect();
            let row = match &op.cpt {
                Some(c) => c.row(&full).map(<[f64]>::to_vec),
                None => op.distribution.clone(),
            }
            .ok_or_else(|| ModelError::MissingCptRow {
                var: op.name(),
                row: full.clone(),
            })?;
            cpt.rows.insert(key, row);
        }
        net = add_conditional_node(&net, &step_node_name(s), &op.family.names(), &arcs, &cpt)?;
    }
    Ok(net)
}

/// Translates step labels into network labels.
pub fn context_labels(plan: &PlanGraph, ground: &GroundDomain, context: &Context) -> Result<Vec<VarLabel>, ModelError> {
    let mut out = Vec::with_capacity(context.len());
    for l in context.labels() {
        match &l.source {
            LabelSource::Var(v) => out.push((v.clone(), l.outcome.clone())),
            LabelSource::Step(s) => {
                let op = plan.ground_op(ground, *s).ok_or(ModelError::LabelWithoutDistribution(*s))?;
                match (op.kind, &op.observes) {
                    (OpKind::Observation, Some(x)) => out.push((x.to_string(), l.outcome.clone())),
                    (OpKind::Conditional, _) => out.push((step_node_name(*s), l.outcome.clone())),
                    _ => return Err(ModelError::LabelWithoutDistribution(*s)),
                }
            }
        }
    }
    Ok(out)
}

/// Evaluates plan contexts under one model.
#[derive(Debug, Clone)]
pub struct Model<'a> {
    pub kind: ModelKind,
    pub ground: &'a GroundDomain,
    pub base: BeliefNet,
}

/// A plan's network, built once and reused for every context query.
#[derive(Debug, Clone)]
pub struct PlanModel<'m, 'a> {
    model: &'m Model<'a>,
    net: Option<BeliefNet>,
}

impl<'a> Model<'a> {
    pub fn new(ground: &'a GroundDomain, kind: ModelKind) -> Result<Self, ModelError> {
        Ok(Model {
            kind,
            ground,
            base: build_initial_net(ground)?,
        })
    }

    pub fn for_plan(&self, plan: &PlanGraph) -> Result<PlanModel<'_, 'a>, ModelError> {
        let net = match self.kind {
            ModelKind::Simple => None,
            ModelKind::Kbmc => Some(plan_net(&self.base, plan, self.ground)?),
        };
        Ok(PlanModel { model: self, net })
    }

    pub fn success_bound(&self, plan: &PlanGraph, epsilon: f64) -> Result<SuccessBound, ModelError> {
        let complete = complete_goals(plan, self.ground);
        self.for_plan(plan)?.success_bound(plan, &complete, epsilon)
    }
}

impl PlanModel<'_, '_> {
    pub fn net(&self) -> Option<&BeliefNet> {
        self.net.as_ref()
    }

    pub fn context_mass(&self, plan: &PlanGraph, context: &Context) -> Result<f64, ModelError> {
        match &self.net {
            None => simple_context_probability(plan, self.model.ground, context),
            Some(net) => joint_probability(net, &context_labels(plan, self.model.ground, context)?),
        }
    }

    /// Achieved mass sums the completed goal contexts; potential mass
    /// counts everything not explicitly given up.
    pub fn success_bound(
        &self,
        plan: &PlanGraph,
        complete: &BTreeSet<StepId>,
        epsilon: f64,
    ) -> Result<SuccessBound, ModelError> {
        let goals: Vec<StepId> = plan.goal_steps().collect();
        for (i, &a) in goals.iter().enumerate() {
            for &b in &goals[i + 1..] {
                if contexts_compatible(plan.context(a), plan.context(b)) {
                    return Err(ModelError::OverlappingGoalContexts(a, b));
                }
            }
        }
        let mut achieved = 0.0;
        let mut lost = 0.0;
        for &g in &goals {
            if complete.contains(&g) {
                achieved += self.context_mass(plan, plan.context(g))?;
            } else if plan.abandoned.contains(&g) {
                lost += self.context_mass(plan, plan.context(g))?;
            }
        }
        let achieved = achieved.min(1.0);
        Ok(SuccessBound {
            achieved_mass: achieved,
            potential_mass: (1.0 - lost).clamp(achieved, 1.0),
            epsilon,
        })
    }

    /// The candidate goal step with the largest context mass; ties go to
    /// the lower canonical key.
    pub fn select_goal_node(&self, plan: &PlanGraph, candidates: &[StepId]) -> Result<StepId, ModelError> {
        let mut best: Option<(f64, (usize, StepId))> = None;
        for &g in candidates {
            let m = self.context_mass(plan, plan.context(g))?;
            let key = plan.canonical_key(g);
            let better = match best {
                None => true,
                Some((bm, bk)) => m > bm || (m == bm && key < bk),
            };
            if better {
                best = Some((m, key));
            }
        }
        best.map(|(_, (_, g))| g).ok_or(ModelError::NoOpenGoalNode)
    }
}
