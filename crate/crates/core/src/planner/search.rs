use std::cmp::Ordering;
use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, BinaryHeap, HashSet};
use std::hash::{Hash, Hasher};

use tracing::{debug, info};

use super::{PlanOutcome, PlannerConfig};
use crate::domain::GroundDomain;
use crate::error::PlanError;
use crate::plangraph::{complete_goals, extract_covered, PlanGraph, StepId};
use crate::probmodel::{Model, SuccessBound};

/// A plan together with its evaluation.
#[derive(Debug, Clone)]
pub struct SearchNode {
    pub plan: PlanGraph,
    pub bound: SuccessBound,
    pub complete: BTreeSet<StepId>,
}

impl SearchNode {
    fn size(&self) -> usize {
        self.plan.steps().len() + self.plan.open_goals.len() + self.plan.open_influences.len()
    }
}

struct Entry {
    node: SearchNode,
    seq: usize,
}

impl Entry {
    fn key(&self) -> (f64, f64, std::cmp::Reverse<usize>, usize) {
        let b = &self.node.bound;
        (b.potential_mass, b.achieved_mass, std::cmp::Reverse(self.node.size()), self.seq)
    }
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        let (pa, aa, sa, qa) = self.key();
        let (pb, ab, sb, qb) = other.key();
        pa.total_cmp(&pb)
            .then(aa.total_cmp(&ab))
            .then(sa.cmp(&sb))
            .then(qa.cmp(&qb))
    }
}

pub(crate) struct Exhausted {
    pub best_achieved: f64,
    pub max_pruned: f64,
    pub expanded: usize,
}

fn evaluate(model: &Model<'_>, plan: PlanGraph, epsilon: f64) -> Option<SearchNode> {
    let pm = match model.for_plan(&plan) {
        Ok(pm) => pm,
        Err(e) => {
            debug!(target: "epsafe::search", event = "model_error", error = %e);
            return None;
        }
    };
    let complete = complete_goals(&plan, model.ground);
    match pm.success_bound(&plan, &complete, epsilon) {
        Ok(bound) => Some(SearchNode { plan, bound, complete }),
        Err(e) => {
            debug!(target: "epsafe::search", event = "model_error", error = %e);
            None
        }
    }
}

fn fingerprint(plan: &PlanGraph) -> u64 {
    let mut h = DefaultHasher::new();
    plan.hash(&mut h);
    h.finish()
}

/// Best-first search on potential mass, then achieved mass, then smaller
/// plans, then newest first.
pub(crate) fn best_first<F>(
    model: &Model<'_>,
    budget: usize,
    epsilon: f64,
    initial: PlanGraph,
    expand: &F,
) -> Result<(SearchNode, usize), Exhausted>
where
    F: Fn(&Model<'_>, &SearchNode) -> Vec<PlanGraph>,
{
    let mut best_achieved = 0.0;
    let mut max_pruned: f64 = 0.0;
    let Some(root) = evaluate(model, initial, epsilon) else {
        return Err(Exhausted {
            best_achieved,
            max_pruned,
            expanded: 0,
        });
    };
    if root.bound.accepted() {
        return Ok((root, 0));
    }
    let mut seen = HashSet::new();
    seen.insert(fingerprint(&root.plan));
    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    heap.push(Entry { node: root, seq });
    let mut expanded = 0;

    while let Some(Entry { node, .. }) = heap.pop() {
        if expanded >= budget {
            break;
        }
        expanded += 1;
        debug!(
            target: "epsafe::search",
            event = "node_expanded",
            expanded,
            steps = node.plan.steps().len(),
            achieved = node.bound.achieved_mass,
            potential = node.bound.potential_mass,
        );
        for child in expand(model, &node) {
            if !seen.insert(fingerprint(&child)) {
                continue;
            }
            let Some(c) = evaluate(model, child, epsilon) else { continue };
            for g in c.complete.difference(&node.complete) {
                info!(target: "epsafe::search", event = "branch_completed", goal = *g, achieved = c.bound.achieved_mass);
            }
            if c.bound.achieved_mass > best_achieved {
                best_achieved = c.bound.achieved_mass;
                info!(target: "epsafe::search", event = "bound_updated", achieved = best_achieved, potential = c.bound.potential_mass);
            }
            if c.bound.accepted() {
                return Ok((c, expanded));
            }
            if !c.bound.viable() {
                max_pruned = max_pruned.max(c.bound.potential_mass);
                continue;
            }
            seq += 1;
            heap.push(Entry { node: c, seq });
        }
    }
    Err(Exhausted {
        best_achieved,
        max_pruned,
        expanded,
    })
}

/// Runs the search and turns the accepted plan into an executable one.
/// On failure, searches once more against the best bound that was pruned
/// so the error can report the best mass actually reachable.
pub(crate) fn run<F>(
    ground: &GroundDomain,
    config: &PlannerConfig,
    initial: PlanGraph,
    expand: F,
) -> Result<PlanOutcome, PlanError>
where
    F: Fn(&Model<'_>, &SearchNode) -> Vec<PlanGraph>,
{
    let model = Model::new(ground, config.model)?;
    let epsilon = config.epsilon.unwrap_or(ground.problem.epsilon);
    match best_first(&model, config.node_budget, epsilon, initial.clone(), &expand) {
        Ok((node, expanded)) => finish(ground, config, node, expanded),
        Err(ex) => {
            let mut best = ex.best_achieved;
            let mut expanded = ex.expanded;
            if ex.max_pruned > best + 1e-12 {
                let relaxed = 1.0 - ex.max_pruned;
                info!(target: "epsafe::search", event = "relaxed_search", epsilon = relaxed);
                match best_first(&model, config.node_budget, relaxed, initial, &expand) {
                    Ok((node, n)) => {
                        best = best.max(node.bound.achieved_mass);
                        expanded += n;
                    }
                    Err(again) => {
                        best = best.max(again.best_achieved);
                        expanded += again.expanded;
                    }
                }
            }
            Err(PlanError::UnsolvableWithinEpsilon {
                target: 1.0 - epsilon,
                best_achieved: best,
                expanded,
            })
        }
    }
}

fn finish(ground: &GroundDomain, config: &PlannerConfig, node: SearchNode, expanded: usize) -> Result<PlanOutcome, PlanError> {
    let mut plan = extract_covered(&node.plan, ground, &node.complete)?;
    plan.achieved_mass = node.bound.achieved_mass;
    plan.model = config.model.to_string();
    plan.epsilon = node.bound.epsilon;
    Ok(PlanOutcome {
        plan,
        graph: node.plan,
        bound: node.bound,
        expanded,
    })
}
