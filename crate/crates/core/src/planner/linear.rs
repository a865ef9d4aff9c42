//! Tree-shaped planning. Every open goal lives on one branch, the path from
//! the start to a goal node, and only steps on that path can be reused.
//! Protections are checked when links and steps are added, so a tree plan
//! never contains a threat.

use std::collections::{BTreeMap, HashSet};

use super::search::{run, SearchNode};
use super::{bool_name, is_boolean_var, new_step_items, observed, usable, PlanOutcome, PlannerConfig, Target};
use crate::domain::{Atom, GroundDomain, GroundOp, Literal, Outcome};
use crate::error::PlanError;
use crate::plangraph::{Link, LinkKind, PlanGraph, Shape, StepId, StepKind, START};
use crate::probmodel::{Model, ModelKind};

pub fn plan_linear(ground: &GroundDomain, config: &PlannerConfig) -> Result<PlanOutcome, PlanError> {
    let planner = Linear {
        ground,
        model: config.model,
        max_steps: config.max_steps,
    };
    let initial = PlanGraph::with_goal(Shape::Tree, &ground.problem.goals);
    run(ground, config, initial, |model, node| planner.expand(model, node))
}

pub struct Linear<'a> {
    ground: &'a GroundDomain,
    model: ModelKind,
    max_steps: usize,
}

/// A branch: steps from the start to a goal node.
struct Path {
    steps: Vec<StepId>,
    /// Outcome taken at each step toward the next one (None when the step
    /// does not branch or is last).
    taken: Vec<Option<String>>,
}

impl Path {
    fn of(plan: &PlanGraph, goal: StepId) -> Self {
        let steps = plan.tree_path(goal);
        let taken = (0..steps.len())
            .map(|k| steps.get(k + 1).and_then(|&n| plan.tree_parent(n)).and_then(|(_, o)| o))
            .collect();
        Path { steps, taken }
    }

    fn index(&self, s: StepId) -> Option<usize> {
        self.steps.iter().position(|&x| x == s)
    }
}

impl<'a> Linear<'a> {
    pub fn new(ground: &'a GroundDomain, config: &PlannerConfig) -> Self {
        Linear {
            ground,
            model: config.model,
            max_steps: config.max_steps,
        }
    }

    fn op_at(&self, plan: &PlanGraph, s: StepId) -> Option<&'a GroundOp> {
        plan.ground_op(self.ground, s)
    }

    /// Outcome of path step `k` along the path.
    fn outcome_at(&self, plan: &PlanGraph, path: &Path, k: usize) -> Option<(&'a GroundOp, &'a Outcome)> {
        let op = self.op_at(plan, path.steps[k])?;
        let o = match &path.taken[k] {
            Some(name) => op.family.outcomes.iter().find(|o| &o.name == name)?,
            None => op.family.outcomes.first()?,
        };
        Some((op, o))
    }

    /// No step strictly between path positions `from` and `to` satisfies `bad`.
    fn clear_between(
        &self,
        plan: &PlanGraph,
        path: &Path,
        from: usize,
        to: usize,
        bad: impl Fn(&GroundOp, &Outcome) -> bool,
    ) -> bool {
        (from + 1..to).all(|k| match self.outcome_at(plan, path, k) {
            Some((op, o)) => !bad(op, o),
            None => true,
        })
    }

    /// Whether a step with `outcome` placed just below path position `k`
    /// breaks a protection spanning that point.
    fn breaks_protection(&self, plan: &PlanGraph, path: &Path, k: usize, op: &GroundOp, outcome: &Outcome) -> bool {
        let below = path.steps[k + 1];
        let above = &path.steps[..=k];
        plan.links().iter().any(|l| {
            if !above.contains(&l.producer) || !(l.consumer == below || plan.precedes(below, l.consumer)) {
                return false;
            }
            match &l.kind {
                LinkKind::Causal { lit, .. } => match lit.value() {
                    Some(b) => outcome.sets(&lit.atom) == Some(!b),
                    None => op.touches(&lit.atom),
                },
                LinkKind::Ignorance { var } => op.touches(var),
                LinkKind::Influence { var, value, .. } => {
                    matches!(outcome.sets(var), Some(v) if bool_name(v) != *value)
                }
                LinkKind::Ordering | LinkKind::Conditioning { .. } => false,
            }
        })
    }

    /// Splices `op` in below path position `k`, continuing the branch
    /// under outcome `oi` and opening a fresh goal node for every other
    /// outcome. Returns the plan and the new step.
    pub fn add_conditional_step(&self, plan: &PlanGraph, path_parent: StepId, path_child: StepId, op: &GroundOp, oi: usize) -> (PlanGraph, StepId) {
        let mut p = plan.clone();
        let chosen = op.is_branching().then(|| op.family.outcomes[oi].name.clone());
        let n = p.splice(path_parent, path_child, StepKind::Op(op.id), chosen);
        if op.is_branching() {
            for (j, o) in op.family.outcomes.iter().enumerate() {
                if j == oi {
                    continue;
                }
                let g = p.add_tree_child(n, Some(o.name.clone()), StepKind::Goal);
                for lit in &self.ground.problem.goals {
                    p.open_goals.insert((g, lit.clone()));
                }
            }
        }
        let (goals, influences) = new_step_items(self.ground, self.model, op, n);
        p.open_goals.extend(goals);
        p.open_influences.extend(influences);
        (p, n)
    }

    /// Successors that make `target` hold at path position `at`: from the
    /// initial state, from a step already on the path, or from a new step.
    fn establish(&self, plan: &PlanGraph, path: &Path, at: usize, target: &Target) -> Vec<PlanGraph> {
        let w = path.steps[at];
        let atom = target.atom().clone();
        let b = target.value();
        let clobber = |_: &GroundOp, o: &Outcome| o.sets(&atom) == Some(!b);
        let mut out = Vec::new();

        if self.ground.initial.get(&atom) == Some(&b) && self.clear_between(plan, path, 0, at, clobber) {
            out.extend(plan.add_link(target.link(START, None, w)).ok());
        }
        for k in 1..at {
            let Some((op, o)) = self.outcome_at(plan, path, k) else { continue };
            // observing a value is handled as observation, not as a way of
            // fixing it
            if matches!(target, Target::Value(..)) && op.observes.is_some() {
                continue;
            }
            if o.sets(&atom) == Some(b) && self.clear_between(plan, path, k, at, clobber) {
                let label = op.is_branching().then(|| o.name.clone());
                out.extend(plan.add_link(target.link(path.steps[k], label, w)).ok());
            }
        }
        if plan.op_ids().count() < self.max_steps {
            for &(o, oi) in self.ground.establishers(&Literal::from_value(atom.clone(), b)) {
                let op = self.ground.op(o);
                if (matches!(target, Target::Value(..)) && op.observes.is_some()) || !usable(self.ground, op) {
                    continue;
                }
                let outcome = &op.family.outcomes[oi];
                for k in 0..at {
                    if !self.clear_between(plan, path, k, at, clobber) || self.breaks_protection(plan, path, k, op, outcome) {
                        continue;
                    }
                    let (mut p, n) = self.add_conditional_step(plan, path.steps[k], path.steps[k + 1], op, oi);
                    let label = op.is_branching().then(|| outcome.name.clone());
                    if p.push_link(target.link(n, label, w)).is_ok() {
                        out.push(p);
                    }
                }
            }
        }
        out
    }

    /// Whether the branch to `goal` passes through the same known state
    /// twice, with no branching and only finished steps in between. Such a
    /// detour never helps. Steps with open items are still in the making,
    /// so their effects are not yet meaningful and they reset the check.
    fn loops(&self, plan: &PlanGraph, goal: StepId) -> bool {
        let path = Path::of(plan, goal);
        let name = |b: bool| if b { "true" } else { "false" };
        let mut state: BTreeMap<&Atom, &str> = self.ground.initial.iter().map(|(a, v)| (a, name(*v))).collect();
        let mut seen = HashSet::new();
        seen.insert(state.clone());
        for k in 1..path.steps.len() {
            let Some((op, o)) = self.outcome_at(plan, &path, k) else { continue };
            for a in &o.add {
                state.insert(a, "true");
            }
            for a in &o.del {
                state.insert(a, "false");
            }
            if let (Some(x), Some(alpha)) = (&op.observes, &path.taken[k]) {
                state.insert(x, alpha.as_str());
            }
            if op.is_branching() || plan.has_open_items(path.steps[k]) {
                seen.clear();
            }
            if !seen.insert(state.clone()) {
                return true;
            }
        }
        false
    }

    /// Successors for the open goal `(step, lit)` on the branch to `goal`.
    pub fn resolve_goal(&self, plan: &PlanGraph, goal: StepId, flaw: &(StepId, Literal)) -> Vec<PlanGraph> {
        let path = Path::of(plan, goal);
        let Some(at) = path.index(flaw.0) else { return Vec::new() };
        let mut base = plan.clone();
        base.open_goals.remove(flaw);
        let lit = &flaw.1;
        match lit.value() {
            Some(_) => self.establish(&base, &path, at, &Target::Goal(lit.clone())),
            None => {
                let x = &lit.atom;
                let unknown = self.ground.is_prior(x) && !self.ground.initial.contains_key(x);
                if unknown && self.clear_between(&base, &path, 0, at, |op, _| op.touches(x)) {
                    base.add_link(Link::ignorance(x.clone(), flaw.0)).into_iter().collect()
                } else {
                    Vec::new()
                }
            }
        }
    }

    /// Successors for the open influence `(step, var)`: learn the value by
    /// observing it, fix it by establishing it, or act in ignorance of it.
    pub fn discharge_influence(&self, plan: &PlanGraph, goal: StepId, flaw: &(StepId, Atom)) -> Vec<PlanGraph> {
        let path = Path::of(plan, goal);
        let Some(at) = path.index(flaw.0) else { return Vec::new() };
        let (s, x) = flaw;
        let mut base = plan.clone();
        base.open_influences.remove(flaw);
        if !self.ground.is_prior(x) {
            return [true, false]
                .iter()
                .flat_map(|&b| self.establish(&base, &path, at, &Target::Value(x.clone(), b)))
                .collect();
        }

        let changes = |_: &GroundOp, o: &Outcome| o.sets(x).is_some();
        let known: Vec<PlanGraph> = (1..at)
            .filter_map(|k| {
                let (op, _) = self.outcome_at(&base, &path, k)?;
                let alpha = path.taken[k].clone()?;
                if op.observes.as_ref() != Some(x) || !self.clear_between(&base, &path, k, at, changes) {
                    return None;
                }
                base.add_link(observed(path.steps[k], x, alpha, *s)).ok()
            })
            .collect();
        if !known.is_empty() {
            return known;
        }

        let mut out = Vec::new();
        if plan.op_ids().count() < self.max_steps {
            for &o in self.ground.observers(x) {
                let op = self.ground.op(o);
                if !usable(self.ground, op) {
                    continue;
                }
                for k in 0..at {
                    if !self.clear_between(&base, &path, k, at, changes) {
                        continue;
                    }
                    for (oi, outcome) in op.family.outcomes.iter().enumerate() {
                        if self.breaks_protection(&base, &path, k, op, outcome) {
                            continue;
                        }
                        let (mut p, n) = self.add_conditional_step(&base, path.steps[k], path.steps[k + 1], op, oi);
                        if p.push_link(observed(n, x, outcome.name.clone(), *s)).is_ok() {
                            out.push(p);
                        }
                    }
                }
            }
        }
        if is_boolean_var(self.ground, x) {
            for b in [true, false] {
                out.extend(self.establish(&base, &path, at, &Target::Value(x.clone(), b)));
            }
        }
        if self.clear_between(&base, &path, 0, at, |op, _| op.touches(x)) {
            out.extend(base.add_link(Link::ignorance(x.clone(), *s)).ok());
        }
        out
    }

    /// Works on the most probable unfinished goal node, resolving the flaw
    /// on its branch with the fewest alternatives. A flaw with none
    /// abandons that goal node.
    pub fn expand(&self, model: &Model<'_>, node: &SearchNode) -> Vec<PlanGraph> {
        let plan = &node.plan;
        let candidates: Vec<StepId> = plan
            .goal_steps()
            .filter(|g| !plan.abandoned.contains(g) && !node.complete.contains(g))
            .collect();
        if candidates.is_empty() {
            return Vec::new();
        }
        let Ok(pm) = model.for_plan(plan) else { return Vec::new() };
        let Ok(goal) = pm.select_goal_node(plan, &candidates) else { return Vec::new() };
        let on_path = plan.tree_path(goal);

        let mut best: Option<Vec<PlanGraph>> = None;
        let goal_flaws: Vec<(StepId, Literal)> = plan.open_goals.iter().filter(|(s, _)| on_path.contains(s)).cloned().collect();
        for f in &goal_flaws {
            let mut succ = self.resolve_goal(plan, goal, f);
            succ.retain(|p| !self.loops(p, goal));
            if best.as_ref().is_none_or(|b| succ.len() < b.len()) {
                best = Some(succ);
            }
            if best.as_ref().is_some_and(Vec::is_empty) {
                break;
            }
        }
        if best.is_none() {
            let infl: Vec<(StepId, Atom)> = plan.open_influences.iter().filter(|(s, _)| on_path.contains(s)).cloned().collect();
            for f in &infl {
                let mut succ = self.discharge_influence(plan, goal, f);
                succ.retain(|p| !self.loops(p, goal));
                if best.as_ref().is_none_or(|b| succ.len() < b.len()) {
                    best = Some(succ);
                }
                if best.as_ref().is_some_and(Vec::is_empty) {
                    break;
                }
            }
        }
        match best {
            Some(succ) if !succ.is_empty() => succ,
            _ => {
                let mut p = plan.clone();
                p.abandoned.insert(goal);
                vec![p]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ground, parse_domain, parse_problem};

    const DOMAIN: &str = r#"
        (operator put (params (?x obj)) (kind det) (outcomes (ok (add (p ?x)))))
        (operator place (params (?x obj)) (kind det) (outcomes (ok (add (p ?x)))))
        (operator wipe (params (?x obj)) (kind det) (outcomes (ok (del (p ?x)))))
        (operator swap (params (?x obj)) (kind det) (outcomes (ok (add (r ?x)) (del (p ?x)))))
        (operator look (params (?x obj)) (kind obs) (observes (q ?x))
          (outcomes (true (prob 0.5) (add (q ?x))) (false (prob 0.5) (del (q ?x)))))
        (clause (head (q ?x) (true false)) (cpt ((true) 0.5) ((false) 0.5)))
    "#;

    fn domain(problem: &str) -> GroundDomain {
        ground(&parse_domain(DOMAIN).unwrap(), &parse_problem(problem).unwrap()).unwrap()
    }

    fn default_problem() -> GroundDomain {
        domain("(problem (objects (obj a)) (unknown (q a)) (default-false p q r) (goal (p a)))")
    }

    fn planner(g: &GroundDomain) -> Linear<'_> {
        Linear::new(g, &PlannerConfig::default())
    }

    fn op(g: &GroundDomain, name: &str) -> usize {
        g.ops.iter().position(|o| o.name() == name).unwrap()
    }

    fn lit(name: &str) -> Literal {
        Literal::pos(Atom::new(name, ["a"]))
    }

    fn goal_of(plan: &PlanGraph) -> StepId {
        plan.goal_steps().next().unwrap()
    }

    #[test]
    fn each_establisher_gives_a_successor() {
        let g = default_problem();
        let plan = PlanGraph::with_goal(Shape::Tree, &g.problem.goals);
        let goal = goal_of(&plan);
        let succ = planner(&g).resolve_goal(&plan, goal, &(goal, lit("p")));
        assert_eq!(succ.len(), 2);
        assert!(succ.iter().all(|s| s.steps().len() == 3 && s.open_goals.is_empty()));
    }

    #[test]
    fn initial_state_supplies_without_new_steps() {
        let g = domain("(problem (objects (obj a)) (init (p a)) (default-false p q r) (goal (p a)))");
        let plan = PlanGraph::with_goal(Shape::Tree, &g.problem.goals);
        let goal = goal_of(&plan);
        let succ = planner(&g).resolve_goal(&plan, goal, &(goal, lit("p")));
        assert!(succ.iter().any(|s| s.steps().len() == 2));
    }

    #[test]
    fn protected_condition_blocks_clobberer() {
        let g = domain("(problem (objects (obj a)) (init (p a)) (default-false p q r) (goal (p a) (r a)))");
        let plan = PlanGraph::with_goal(Shape::Tree, &g.problem.goals);
        let goal = goal_of(&plan);
        let lin = planner(&g);
        let kept = lin.resolve_goal(&plan, goal, &(goal, lit("p")));
        let from_start = kept.iter().find(|s| s.steps().len() == 2).unwrap();
        assert!(lin.resolve_goal(from_start, goal, &(goal, lit("r"))).is_empty());
    }

    #[test]
    fn branching_step_opens_goal_node_per_other_outcome() {
        let g = default_problem();
        let plan = PlanGraph::with_goal(Shape::Tree, &g.problem.goals);
        let goal = goal_of(&plan);
        let look = g.op(op(&g, "look(a)"));
        let (p, n) = planner(&g).add_conditional_step(&plan, START, goal, look, 0);
        assert_eq!(p.goal_steps().count(), 2);
        let other = p.goal_steps().find(|&s| s != goal).unwrap();
        assert_eq!(p.tree_parent(other), Some((n, Some("false".to_string()))));
        assert_eq!(p.tree_parent(goal), Some((n, Some("true".to_string()))));
        assert!(p.open_goals.contains(&(other, lit("p"))));
    }

    #[test]
    fn detour_to_a_known_state_is_a_loop() {
        let g = default_problem();
        let plan = PlanGraph::with_goal(Shape::Tree, &g.problem.goals);
        let goal = goal_of(&plan);
        let lin = planner(&g);
        let (idle, _) = lin.add_conditional_step(&plan, START, goal, g.op(op(&g, "wipe(a)")), 0);
        assert!(lin.loops(&idle, goal));
        let (useful, _) = lin.add_conditional_step(&plan, START, goal, g.op(op(&g, "put(a)")), 0);
        assert!(!lin.loops(&useful, goal));
    }

    #[test]
    fn unreachable_goal_is_abandoned() {
        let g = domain("(problem (objects (obj a)) (default-false p q r s) (goal (s a)))");
        let cfg = PlannerConfig::default();
        let err = plan_linear(&g, &cfg).unwrap_err();
        assert!(matches!(err, PlanError::UnsolvableWithinEpsilon { .. }), "{err:?}");
    }

    #[test]
    fn deterministic_problem_reaches_full_mass() {
        let g = default_problem();
        let out = plan_linear(&g, &PlannerConfig::default()).unwrap();
        assert_eq!(out.bound.achieved_mass, 1.0);
        assert_eq!(out.plan.branches.len(), 1);
    }
}
