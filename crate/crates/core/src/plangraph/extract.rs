use std::collections::BTreeSet;

use super::{contexts_compatible, find_threats, Context, Label, PlanGraph, Shape, StepId, StepKind};
use crate::domain::GroundDomain;
use crate::error::GraphError;
use crate::plan::{branches_of, Arm, ConditionalPlan, CptRow, PlanNode, PlanStep};
use crate::probmodel::build_initial_net;

/// Goal steps whose whole support is finished: no open goal or influence
/// anywhere before them, no threat against a link into their support, and
/// not abandoned.
pub fn complete_goals(plan: &PlanGraph, ground: &GroundDomain) -> BTreeSet<StepId> {
    let live: Vec<StepId> = plan.goal_steps().filter(|g| !plan.abandoned.contains(g)).collect();
    let support: Vec<Vec<StepId>> = live.iter().map(|&g| plan.ancestors_or_self(g)).collect();
    let relevant: BTreeSet<StepId> = support.iter().flatten().copied().collect();
    // tree plans are checked against protections as they grow
    let threats = match plan.shape() {
        Shape::Tree => Vec::new(),
        Shape::Dag => find_threats(plan, ground),
    };
    let mut done = BTreeSet::new();
    for (g, anc) in live.iter().zip(&support) {
        let open = anc.iter().any(|&s| plan.has_open_items(s));
        let threatened = threats
            .iter()
            .any(|t| relevant.contains(&t.step) && anc.contains(&plan.links()[t.link].consumer));
        if !open && !threatened {
            done.insert(*g);
        }
    }
    done
}

/// Unfolds the plan into an execution tree covering every live goal step.
/// Fails when any of them is still incomplete.
pub fn extract_conditional_plan(plan: &PlanGraph, ground: &GroundDomain) -> Result<ConditionalPlan, GraphError> {
    let live: BTreeSet<StepId> = plan.goal_steps().filter(|g| !plan.abandoned.contains(g)).collect();
    extract_covered(plan, ground, &live)
}

/// Unfolds the plan for the given covered goal steps. Contexts reaching no
/// covered goal end in give-up leaves.
pub fn extract_covered(
    plan: &PlanGraph,
    ground: &GroundDomain,
    covered: &BTreeSet<StepId>,
) -> Result<ConditionalPlan, GraphError> {
    let complete = complete_goals(plan, ground);
    if let Some(g) = covered.iter().find(|g| !complete.contains(g)) {
        return Err(GraphError::IncompletePlan(format!("goal step {g} has open flaws")));
    }
    let support: Vec<(StepId, BTreeSet<StepId>)> = covered
        .iter()
        .map(|&g| (g, plan.ancestors_or_self(g).into_iter().collect()))
        .collect();
    let needed: BTreeSet<StepId> = support.iter().flat_map(|(_, a)| a.iter().copied()).collect();
    let order: Vec<StepId> = plan
        .topological_order()
        .into_iter()
        .filter(|s| needed.contains(s) && matches!(plan.step(*s).kind, StepKind::Op(_)))
        .collect();

    let unfolder = Unfolder {
        plan,
        ground,
        support: &support,
        order: &order,
    };
    let tree = unfolder.unfold(0, Context::universal());
    let branches = branches_of(&tree);
    let mut uncovered: Vec<Context> = branches.iter().filter(|b| b.goal.is_none()).map(|b| b.context.clone()).collect();
    uncovered.sort();
    uncovered.dedup();

    let steps = order
        .iter()
        .map(|&s| {
            let op = plan.ground_op(ground, s).expect("operator step");
            PlanStep {
                id: s,
                name: op.name(),
                kind: op.kind,
                pre: op.pre.clone(),
                outcomes: op.family.outcomes.clone(),
                observes: op.observes.clone(),
                influences: op.influences.clone(),
                distribution: op.distribution.clone(),
                cpt: op
                    .cpt
                    .as_ref()
                    .map(|c| {
                        c.rows
                            .iter()
                            .map(|(k, v)| CptRow {
                                parents: k.clone(),
                                probs: v.clone(),
                            })
                            .collect()
                    })
                    .unwrap_or_default(),
                context: plan.context(s).clone(),
            }
        })
        .collect();
    let net = build_initial_net(ground).map(|n| n.to_json()).unwrap_or(serde_json::Value::Null);
    Ok(ConditionalPlan {
        steps,
        tree,
        branches,
        contexts: covered.iter().map(|&g| plan.context(g).clone()).collect(),
        links: plan
            .links()
            .iter()
            .filter(|l| needed.contains(&l.consumer))
            .cloned()
            .collect(),
        achieved_mass: 0.0,
        uncovered_contexts: uncovered,
        initial: ground.initial.iter().map(|(a, v)| (a.to_string(), *v)).collect(),
        goals: ground.problem.goals.clone(),
        model: String::new(),
        epsilon: ground.problem.epsilon,
        net,
    })
}

struct Unfolder<'a> {
    plan: &'a PlanGraph,
    ground: &'a GroundDomain,
    support: &'a [(StepId, BTreeSet<StepId>)],
    order: &'a [StepId],
}

impl Unfolder<'_> {
    /// A step runs when its context agrees with what has been observed and
    /// some covered goal still reachable from here needs it.
    fn runs(&self, s: StepId, observed: &Context) -> bool {
        contexts_compatible(self.plan.context(s), observed)
            && self
                .support
                .iter()
                .any(|(g, anc)| anc.contains(&s) && contexts_compatible(self.plan.context(*g), observed))
    }

    fn unfold(&self, from: usize, observed: Context) -> PlanNode {
        let Some(i) = (from..self.order.len()).find(|&i| self.runs(self.order[i], &observed)) else {
            return self.leaf(observed);
        };
        let s = self.order[i];
        let op = self.plan.ground_op(self.ground, s).expect("operator step");
        if op.is_branching() {
            let arms = op
                .family
                .outcomes
                .iter()
                .map(|o| Arm {
                    outcome: o.name.clone(),
                    node: self.unfold(i + 1, observed.with(Label::step(s, o.name.clone()))),
                })
                .collect();
            PlanNode::Branch { step: s, arms }
        } else {
            PlanNode::Act {
                step: s,
                next: Box::new(self.unfold(i + 1, observed)),
            }
        }
    }

    fn leaf(&self, observed: Context) -> PlanNode {
        match self
            .support
            .iter()
            .find(|(g, _)| self.plan.context(*g).is_subset(&observed))
        {
            Some((g, _)) => PlanNode::Goal {
                step: *g,
                context: observed,
            },
            None => PlanNode::GiveUp { context: observed },
        }
    }
}
