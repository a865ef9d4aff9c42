//! Partial-order conditional planning. Steps carry contexts, threats are
//! resolved by ordering or by conditioning the clobberer and the protected
//! link on different outcomes, and goal steps are added for contexts that
//! no goal covers yet.

use std::collections::BTreeSet;

use super::search::{run, SearchNode};
use super::{is_boolean_var, new_step_items, observed, usable, PlanOutcome, PlannerConfig, Target};
use crate::domain::{Atom, GroundDomain, GroundOp, Literal};
use crate::error::PlanError;
use crate::plangraph::{
    contexts_compatible, find_threats, Context, Label, LabelSource, Link, PlanGraph, Shape,
    StepId, StepKind, Threat, START,
};
use crate::probmodel::{build_initial_net, BeliefNet, Model, ModelKind};

/// Start plus one goal step holding the goals as open preconditions.
pub fn make_init_plan(goals: &[Literal]) -> PlanGraph {
    PlanGraph::with_goal(Shape::Dag, goals)
}

pub fn plan_nonlinear(ground: &GroundDomain, config: &PlannerConfig) -> Result<PlanOutcome, PlanError> {
    let planner = Nonlinear::new(ground, config)?;
    run(ground, config, make_init_plan(&ground.problem.goals), |model, node| {
        planner.expand(model, node)
    })
}

pub struct Nonlinear<'a> {
    ground: &'a GroundDomain,
    model: ModelKind,
    max_steps: usize,
    net: BeliefNet,
}

impl<'a> Nonlinear<'a> {
    pub fn new(ground: &'a GroundDomain, config: &PlannerConfig) -> Result<Self, PlanError> {
        Ok(Nonlinear {
            ground,
            model: config.model,
            max_steps: config.max_steps,
            net: build_initial_net(ground)?,
        })
    }

    fn room(&self, plan: &PlanGraph) -> bool {
        plan.op_ids().count() < self.max_steps
    }

    /// A new step running `op`, with its own open items.
    fn insert(&self, plan: &PlanGraph, op: &GroundOp) -> (PlanGraph, StepId) {
        let (mut p, n) = plan.add_step(StepKind::Op(op.id), Context::universal());
        let (goals, influences) = new_step_items(self.ground, self.model, op, n);
        p.open_goals.extend(goals);
        p.open_influences.extend(influences);
        (p, n)
    }

    fn link_checked(plan: &PlanGraph, link: Link) -> Option<PlanGraph> {
        plan.add_link(link).ok().filter(PlanGraph::contexts_consistent)
    }

    /// Steps that may supply something to `w`: not after it and able to
    /// run alongside it.
    fn candidates(&self, plan: &PlanGraph, w: StepId) -> Vec<StepId> {
        (1..plan.steps().len())
            .filter(|&s| s != w && !plan.precedes(w, s) && plan.step(s).op().is_some())
            .filter(|&s| contexts_compatible(plan.context(s), plan.context(w)))
            .collect()
    }

    /// Successors making `target` hold for `w`: from the initial state, from
    /// an existing step, or from a new one.
    fn establish(&self, plan: &PlanGraph, w: StepId, target: &Target) -> Vec<PlanGraph> {
        let atom = target.atom();
        let b = target.value();
        let mut out = Vec::new();
        if self.ground.initial.get(atom) == Some(&b) {
            out.extend(Self::link_checked(plan, target.link(START, None, w)));
        }
        for s in self.candidates(plan, w) {
            let op = plan.ground_op(self.ground, s).expect("operator step");
            if matches!(target, Target::Value(..)) && op.observes.is_some() {
                continue;
            }
            for o in op.family.outcomes.iter().filter(|o| o.sets(atom) == Some(b)) {
                let label = op.is_branching().then(|| o.name.clone());
                out.extend(Self::link_checked(plan, target.link(s, label, w)));
            }
        }
        if self.room(plan) {
            let lit = Literal::from_value(atom.clone(), b);
            for &(o, oi) in self.ground.establishers(&lit) {
                let op = self.ground.op(o);
                // observing a value is handled as observation, not as a way
                // of fixing it
                let observes = matches!(target, Target::Value(..)) && op.observes.is_some();
                if observes || !usable(self.ground, op) {
                    continue;
                }
                let (p, n) = self.insert(plan, op);
                let label = op.is_branching().then(|| op.family.outcomes[oi].name.clone());
                out.extend(Self::link_checked(&p, target.link(n, label, w)));
            }
        }
        out
    }

    /// Promotion, demotion, or conditioning the clobberer and the link on
    /// different outcomes of an earlier branching step.
    pub fn resolve_threat(&self, plan: &PlanGraph, threat: &Threat) -> Vec<PlanGraph> {
        let link = &plan.links()[threat.link];
        let (v, s, w) = (threat.step, link.producer, link.consumer);
        let mut out = Vec::new();
        if !plan.step(w).is_goal() {
            out.extend(plan.add_link(Link::ordering(w, v)).ok());
        }
        if s != START {
            out.extend(plan.add_link(Link::ordering(v, s)).ok());
        }
        let targets: Vec<StepId> = [s, w].into_iter().filter(|&t| t != START).collect();
        for a in 1..plan.steps().len() {
            let Some(op) = plan.ground_op(self.ground, a) else { continue };
            if !op.is_branching() || a == v || plan.precedes(v, a) {
                continue;
            }
            for &t in &targets {
                if a == t || plan.precedes(t, a) {
                    continue;
                }
                for oi in &op.family.outcomes {
                    for oj in &op.family.outcomes {
                        if oi.name == oj.name {
                            continue;
                        }
                        let next = plan
                            .add_link(Link::conditioning(a, oi.name.clone(), v))
                            .and_then(|p| p.add_link(Link::conditioning(a, oj.name.clone(), t)));
                        out.extend(next.ok().filter(PlanGraph::contexts_consistent));
                    }
                }
            }
        }
        out
    }

    /// Successors for an open precondition. `Unknown(X)` is met only by an
    /// ignorance link from the start.
    pub fn resolve_open_precondition(&self, plan: &PlanGraph, flaw: &(StepId, Literal)) -> Vec<PlanGraph> {
        let mut base = plan.clone();
        base.open_goals.remove(flaw);
        let (w, lit) = flaw;
        match lit.value() {
            Some(_) => self.establish(&base, *w, &Target::Goal(lit.clone())),
            None => {
                let x = &lit.atom;
                if self.ground.is_prior(x) && !self.ground.initial.contains_key(x) {
                    base.add_link(Link::ignorance(x.clone(), *w)).into_iter().collect()
                } else {
                    Vec::new()
                }
            }
        }
    }

    /// Successors for an open influence: learn the variable by observing
    /// it, fix it by establishing it, or act in ignorance of it, optionally
    /// observing something related instead.
    pub fn resolve_open_influence(&self, plan: &PlanGraph, flaw: &(StepId, Atom)) -> Vec<PlanGraph> {
        let mut base = plan.clone();
        base.open_influences.remove(flaw);
        let (s, x) = flaw;
        if !self.ground.is_prior(x) {
            return [true, false]
                .iter()
                .flat_map(|&b| self.establish(&base, *s, &Target::Value(x.clone(), b)))
                .collect();
        }
        let mut out = Vec::new();
        for s2 in self.candidates(&base, *s) {
            let op = base.ground_op(self.ground, s2).expect("operator step");
            if op.observes.as_ref() == Some(x) {
                for o in &op.family.outcomes {
                    out.extend(Self::link_checked(&base, observed(s2, x, o.name.clone(), *s)));
                }
            }
        }
        if self.room(&base) {
            out.extend(self.observe_new(&base, *s, x));
        }
        if is_boolean_var(self.ground, x) {
            for b in [true, false] {
                out.extend(self.establish(&base, *s, &Target::Value(x.clone(), b)));
            }
        }
        if let Ok(ignorant) = base.add_link(Link::ignorance(x.clone(), *s)) {
            out.extend(self.collect_information(&ignorant, *s, x));
            out.push(ignorant);
        }
        out
    }

    /// New observers of `seen`, one successor per outcome, each telling
    /// step `s` what was observed.
    fn observe_new(&self, plan: &PlanGraph, s: StepId, seen: &Atom) -> Vec<PlanGraph> {
        let mut out = Vec::new();
        for &o in self.ground.observers(seen) {
            let op = self.ground.op(o);
            if !usable(self.ground, op) {
                continue;
            }
            let (p, n) = self.insert(plan, op);
            for outcome in &op.family.outcomes {
                out.extend(Self::link_checked(&p, observed(n, seen, outcome.name.clone(), s)));
            }
        }
        out
    }

    /// With `x` unknown at `s`, observing a variable that is still
    /// dependent on `x`, given what `s` already knows, sharpens what `s`
    /// can expect.
    pub fn collect_information(&self, plan: &PlanGraph, s: StepId, x: &Atom) -> Vec<PlanGraph> {
        if !self.room(plan) {
            return Vec::new();
        }
        let given: Vec<String> = plan
            .context(s)
            .labels()
            .filter_map(|l| match &l.source {
                LabelSource::Step(a) => plan.ground_op(self.ground, *a).and_then(|op| op.observes.as_ref()).map(Atom::to_string),
                LabelSource::Var(v) => Some(v.clone()),
            })
            .collect();
        let own = plan.ground_op(self.ground, s).and_then(|op| op.observes.as_ref());
        let mut out = Vec::new();
        for p in self.ground.clauses.iter().map(|c| &c.head) {
            if p == x || Some(p) == own || self.ground.initial.contains_key(p) || given.contains(&p.to_string()) {
                continue;
            }
            if self.net.d_connected(&p.to_string(), &x.to_string(), &given).unwrap_or(false) {
                out.extend(self.observe_new(plan, s, p));
            }
        }
        out
    }

    /// A fresh goal step restricted to `context`, either pursued or
    /// given up on.
    pub fn cover_context(&self, plan: &PlanGraph, context: &Context, give_up: bool) -> Option<PlanGraph> {
        let (mut p, g) = plan.add_step(StepKind::Goal, Context::universal());
        for l in context.labels() {
            let LabelSource::Step(a) = l.source else { return None };
            p.push_link(Link::conditioning(a, l.outcome.clone(), g)).ok()?;
        }
        if give_up {
            p.abandoned.insert(g);
        } else {
            for lit in &self.ground.problem.goals {
                p.open_goals.insert((g, lit.clone()));
            }
        }
        p.contexts_consistent().then_some(p)
    }

    /// Contexts reachable by some outcome of a branching step that no goal
    /// step covers. Each flips one label of a goal context, dropping the
    /// labels that only existed under the old outcome.
    pub fn uncovered_contexts(&self, plan: &PlanGraph) -> Vec<Context> {
        let goals: Vec<StepId> = plan.goal_steps().collect();
        let live: Vec<StepId> = goals.iter().copied().filter(|g| !plan.abandoned.contains(g)).collect();
        let relevant: BTreeSet<StepId> = live.iter().flat_map(|&g| plan.ancestors_or_self(g)).collect();
        let mut found = BTreeSet::new();
        for &a in &relevant {
            let Some(op) = plan.ground_op(self.ground, a) else { continue };
            if !op.is_branching() {
                continue;
            }
            let mut seeds = vec![plan.context(a).clone()];
            for &g in &live {
                let gc = plan.context(g);
                let Some(taken) = gc.outcome_of(&LabelSource::Step(a)) else { continue };
                let dropped = Label::step(a, taken);
                let kept = gc.labels().filter(|l| match &l.source {
                    LabelSource::Step(b) => *b != a && !plan.context(*b).contains(&dropped),
                    LabelSource::Var(_) => true,
                });
                seeds.push(Context::from_labels(kept.cloned()).union(plan.context(a)));
            }
            for seed in seeds {
                for o in &op.family.outcomes {
                    let c = seed.with(Label::step(a, o.name.clone()));
                    if c.is_consistent() && goals.iter().all(|&g| !contexts_compatible(&c, plan.context(g))) {
                        found.insert(c);
                    }
                }
            }
        }
        found.into_iter().collect()
    }

    /// Works on the most probable unfinished goal step: its threats first,
    /// then open preconditions, then open influences, each time taking the
    /// flaw with the fewest alternatives. A flaw with none abandons the goal
    /// step. Once every live goal is finished, uncovered contexts get new
    /// goal steps.
    pub fn expand(&self, model: &Model<'_>, node: &SearchNode) -> Vec<PlanGraph> {
        let plan = &node.plan;
        let candidates: Vec<StepId> = plan
            .goal_steps()
            .filter(|g| !plan.abandoned.contains(g) && !node.complete.contains(g))
            .collect();
        if candidates.is_empty() {
            return self
                .uncovered_contexts(plan)
                .iter()
                .flat_map(|c| [false, true].map(|give_up| self.cover_context(plan, c, give_up)))
                .flatten()
                .collect();
        }
        let Ok(pm) = model.for_plan(plan) else { return Vec::new() };
        let Ok(goal) = pm.select_goal_node(plan, &candidates) else { return Vec::new() };
        let support: BTreeSet<StepId> = plan.ancestors_or_self(goal).into_iter().collect();

        let live: Vec<StepId> = plan.goal_steps().filter(|g| !plan.abandoned.contains(g)).collect();
        let relevant: BTreeSet<StepId> = live.iter().flat_map(|&g| plan.ancestors_or_self(g)).collect();
        let threats: Vec<Threat> = find_threats(plan, self.ground)
            .into_iter()
            .filter(|t| relevant.contains(&t.step) && support.contains(&plan.links()[t.link].consumer))
            .collect();

        let best = if !threats.is_empty() {
            fewest(threats.iter().map(|t| self.resolve_threat(plan, t)))
        } else {
            let goals: Vec<(StepId, Literal)> = plan.open_goals.iter().filter(|(s, _)| support.contains(s)).cloned().collect();
            if !goals.is_empty() {
                fewest(goals.iter().map(|f| self.resolve_open_precondition(plan, f)))
            } else {
                let infl: Vec<(StepId, Atom)> =
                    plan.open_influences.iter().filter(|(s, _)| support.contains(s)).cloned().collect();
                fewest(infl.iter().map(|f| self.resolve_open_influence(plan, f)))
            }
        };
        if best.is_empty() {
            let mut p = plan.clone();
            p.abandoned.insert(goal);
            return vec![p];
        }
        best
    }
}

/// The smallest successor list, stopping early at an empty one.
fn fewest(lists: impl Iterator<Item = Vec<PlanGraph>>) -> Vec<PlanGraph> {
    let mut best: Option<Vec<PlanGraph>> = None;
    for succ in lists {
        if best.as_ref().is_none_or(|b| succ.len() < b.len()) {
            let empty = succ.is_empty();
            best = Some(succ);
            if empty {
                break;
            }
        }
    }
    best.unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ground, parse_domain, parse_problem};
    use crate::plangraph::LinkKind;

    const DOMAIN: &str = r#"
        (operator put (params (?x obj)) (kind det) (outcomes (ok (add (p ?x)))))
        (operator place (params (?x obj)) (kind det) (outcomes (ok (add (p ?x)))))
        (operator wipe (params (?x obj)) (kind det) (outcomes (ok (del (p ?x)))))
        (operator look (params (?x obj)) (kind obs) (observes (q ?x))
          (outcomes (true (prob 0.5) (add (q ?x))) (false (prob 0.5) (del (q ?x)))))
        (clause (head (q ?x) (true false)) (cpt ((true) 0.5) ((false) 0.5)))
    "#;

    fn domain() -> GroundDomain {
        let d = parse_domain(DOMAIN).unwrap();
        let p = parse_problem("(problem (objects (obj a b)) (unknown (q a)) (default-false p q) (goal (p a)))").unwrap();
        ground(&d, &p).unwrap()
    }

    fn radio() -> GroundDomain {
        let d = parse_domain(include_str!("../../data/skiworld-radio.domain")).unwrap();
        let p = parse_problem(include_str!("../../data/skiworld-radio.problem")).unwrap();
        ground(&d, &p).unwrap()
    }

    fn op(g: &GroundDomain, name: &str) -> usize {
        g.ops.iter().position(|o| o.name() == name).unwrap()
    }

    fn planner(g: &GroundDomain) -> Nonlinear<'_> {
        Nonlinear::new(g, &PlannerConfig::default()).unwrap()
    }

    fn p(x: &str) -> Literal {
        Literal::pos(Atom::new("p", [x]))
    }

    #[test]
    fn initial_plans() {
        let one = make_init_plan(&[p("a")]);
        assert_eq!(one.steps().len(), 2);
        assert_eq!(one.open_goals.len(), 1);
        assert!(one.precedes(START, 1));
        assert!(one.context(1).is_empty());
        assert!(make_init_plan(&[]).open_goals.is_empty());
        assert_eq!(make_init_plan(&[p("a"), p("b"), Literal::neg(Atom::new("q", ["a"]))]).open_goals.len(), 3);
    }

    #[test]
    fn trivial_goal_is_solved_at_once() {
        let g = ground(&parse_domain(DOMAIN).unwrap(), &parse_problem("(problem (objects (obj a)))").unwrap()).unwrap();
        let out = plan_nonlinear(&g, &PlannerConfig::default()).unwrap();
        assert_eq!(out.bound.achieved_mass, 1.0);
        assert_eq!(out.expanded, 0);
    }

    #[test]
    fn one_new_step_per_establisher() {
        let g = domain();
        let plan = make_init_plan(&[p("a")]);
        let succ = planner(&g).resolve_open_precondition(&plan, &(1, p("a")));
        assert_eq!(succ.len(), 2);
        assert!(succ.iter().all(|s| s.steps().len() == 3 && s.open_goals.is_empty()));
    }

    #[test]
    fn initial_state_supplies() {
        let g = domain();
        let plan = make_init_plan(&[Literal::neg(Atom::new("p", ["a"]))]);
        let succ = planner(&g).resolve_open_precondition(&plan, &(1, Literal::neg(Atom::new("p", ["a"]))));
        assert!(succ.iter().any(|s| s.links().iter().any(|l| l.producer == START && matches!(l.kind, LinkKind::Causal { .. }))));
    }

    #[test]
    fn unknown_only_from_start() {
        let g = domain();
        let (plan, s) = make_init_plan(&[]).add_step(StepKind::Op(op(&g, "look(a)")), Context::universal());
        let lit = Literal::unknown(Atom::new("q", ["a"]));
        let succ = planner(&g).resolve_open_precondition(&plan, &(s, lit));
        assert_eq!(succ.len(), 1);
        let last = succ[0].links().last().unwrap();
        assert_eq!(last.producer, START);
        assert!(matches!(last.kind, LinkKind::Ignorance { .. }));
        // a variable that is already known cannot be ignored
        let known = Literal::unknown(Atom::new("p", ["a"]));
        assert!(planner(&g).resolve_open_precondition(&plan, &(s, known)).is_empty());
    }

    /// put(a) supplies p(a) to the goal while wipe(a) floats free.
    fn threatened(g: &GroundDomain) -> (PlanGraph, Threat) {
        let plan = make_init_plan(&[]);
        let (plan, put) = plan.add_step(StepKind::Op(op(g, "put(a)")), Context::universal());
        let (plan, wipe) = plan.add_step(StepKind::Op(op(g, "wipe(a)")), Context::universal());
        let plan = plan.add_link(Link::causal(put, p("a"), None, 1)).unwrap();
        let threats = find_threats(&plan, g);
        assert_eq!(threats.len(), 1);
        assert_eq!(threats[0].step, wipe);
        (plan, threats[0].clone())
    }

    #[test]
    fn demotion_when_consumer_is_a_goal() {
        let g = domain();
        let (plan, t) = threatened(&g);
        let succ = planner(&g).resolve_threat(&plan, &t);
        assert_eq!(succ.len(), 1);
        assert!(succ[0].precedes(t.step, plan.links()[t.link].producer));
        assert!(find_threats(&succ[0], &g).is_empty());
    }

    #[test]
    fn conditioning_separates() {
        let g = domain();
        let (plan, t) = threatened(&g);
        let (plan, look) = plan.add_step(StepKind::Op(op(&g, "look(a)")), Context::universal());
        let succ = planner(&g).resolve_threat(&plan, &t);
        let conditioned: Vec<&PlanGraph> = succ
            .iter()
            .filter(|s| s.links().iter().any(|l| l.producer == look && matches!(l.kind, LinkKind::Conditioning { .. })))
            .collect();
        assert!(!conditioned.is_empty());
        for s in conditioned {
            assert!(!find_threats(s, &g).contains(&t));
            assert!(!contexts_compatible(s.context(t.step), s.context(s.links()[t.link].consumer)));
        }
    }

    #[test]
    fn ignorance_or_observation_for_influence() {
        let g = radio();
        let (plan, s) = make_init_plan(&[]).add_step(StepKind::Op(op(&g, "observe-road(B,S)")), Context::universal());
        let blizzard = Atom::new("blizzard", Vec::<String>::new());
        let succ = planner(&g).resolve_open_influence(&plan, &(s, blizzard.clone()));
        let ignorant = succ.iter().filter(|p| {
            p.links()
                .iter()
                .any(|l| l.consumer == s && matches!(&l.kind, LinkKind::Ignorance { var } if *var == blizzard))
        });
        assert!(ignorant.count() >= 1);
        let radio_steps = succ
            .iter()
            .filter(|p| p.op_ids().any(|(_, o)| g.op(o).name() == "listen-radio"))
            .count();
        assert_eq!(radio_steps, 2, "one successor per radio outcome");
    }

    #[test]
    fn related_observation_is_offered() {
        let g = radio();
        let n = planner(&g);
        let (plan, s) = make_init_plan(&[]).add_step(StepKind::Op(op(&g, "go(B,S)")), Context::universal());
        let clear = Atom::new("clear", ["B", "S"]);
        let plan = plan.add_link(Link::ignorance(clear.clone(), s)).unwrap();
        let succ = n.collect_information(&plan, s, &clear);
        let names: BTreeSet<String> = succ
            .iter()
            .flat_map(|p| p.op_ids().map(|(_, o)| g.op(o).name()).collect::<Vec<_>>())
            .collect();
        assert!(names.contains("listen-radio"));
        assert!(names.contains("observe-road(C,P)"));
        assert!(!names.contains("observe-road(B,S)"));
    }

    #[test]
    fn uncovered_outcome_gets_a_goal() {
        let g = domain();
        let n = planner(&g);
        let plan = make_init_plan(&[]);
        let (plan, look) = plan.add_step(StepKind::Op(op(&g, "look(a)")), Context::universal());
        let plan = plan.add_link(Link::conditioning(look, "true", 1)).unwrap();
        let open = n.uncovered_contexts(&plan);
        assert_eq!(open, vec![Context::from_labels([Label::step(look, "false")])]);
        let covered = n.cover_context(&plan, &open[0], false).unwrap();
        assert!(n.uncovered_contexts(&covered).is_empty());
        assert_eq!(covered.goal_steps().count(), 2);
        let given_up = n.cover_context(&plan, &open[0], true).unwrap();
        assert_eq!(given_up.abandoned.len(), 1);
    }
}
