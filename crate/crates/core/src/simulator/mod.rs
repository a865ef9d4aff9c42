//! Executes conditional plans against sampled or enumerated worlds. This is
//! the independent check on the planners: it knows nothing about contexts
//! or masses, only the plan's steps, the prior network, and the rules of
//! execution.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{OpKind, Sign};
use crate::error::SimError;
use crate::plan::{ConditionalPlan, PlanNode, PlanStep};
use crate::plangraph::{LinkKind, StepId};
use crate::probmodel::BeliefNet;

pub const GENERATOR: &str = "chacha8 (one stream per trial)";

/// Outcome of every network variable, by variable name.
pub type World = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub step: StepId,
    pub name: String,
    pub condition: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrialResult {
    pub success: bool,
    /// Executed steps with the outcome each one had.
    pub trace: Vec<(StepId, String)>,
    pub violation: Option<Violation>,
    pub world_sample: World,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationCount {
    pub step: StepId,
    pub name: String,
    pub condition: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub trials: usize,
    pub successes: usize,
    pub frequency: f64,
    pub stderr: f64,
    pub violations: Vec<ViolationCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exact {
    pub probability: f64,
    /// Violations reachable with nonzero probability.
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimulationReport {
    pub plan_id: String,
    pub trials: usize,
    pub frequency: f64,
    pub stderr: f64,
    pub analytic: f64,
    /// None when the standard error is zero.
    pub z_score: Option<f64>,
    pub violations: Vec<ViolationCount>,
    pub seed: u64,
    pub generator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<f64>,
}

fn bool_name(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn draw<R: Rng + ?Sized>(rng: &mut R, dist: &[(usize, f64)]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &(i, p) in dist {
        acc += p;
        if u < acc {
            return i;
        }
    }
    dist.last().map(|&(i, _)| i).unwrap_or(0)
}

fn world_of(net: &BeliefNet, values: &[usize]) -> World {
    net.variables()
        .zip(values)
        .map(|(v, &o)| (v.name.clone(), v.outcomes[o].clone()))
        .collect()
}

pub fn plan_network(plan: &ConditionalPlan) -> Result<BeliefNet, SimError> {
    if plan.net.is_null() {
        return Ok(BeliefNet::new());
    }
    Ok(BeliefNet::from_json(&plan.net)?)
}

/// Ancestral sample of the prior network.
pub fn sample_world(net: &BeliefNet, seed: u64) -> World {
    world_of(net, &net.sample(&mut ChaCha8Rng::seed_from_u64(seed)))
}

/// Execution state along one run of the plan.
#[derive(Clone)]
struct Exec<'p> {
    plan: &'p ConditionalPlan,
    world: &'p World,
    state: BTreeMap<String, bool>,
    /// Variables the agent has observed or set.
    known: BTreeSet<String>,
    trace: Vec<(StepId, String)>,
}

impl<'p> Exec<'p> {
    fn new(plan: &'p ConditionalPlan, world: &'p World) -> Self {
        let mut state = plan.initial.clone();
        for (var, value) in world {
            if let "true" | "false" = value.as_str() {
                state.insert(var.clone(), value == "true");
            }
        }
        Exec {
            plan,
            world,
            state,
            known: plan.initial.keys().cloned().collect(),
            trace: Vec::new(),
        }
    }

    fn step(&self, id: StepId) -> Result<&'p PlanStep, SimError> {
        self.plan
            .step(id)
            .ok_or_else(|| SimError::MalformedPlan(format!("tree refers to missing step {id}")))
    }

    fn value(&self, var: &str) -> String {
        match self.state.get(var) {
            Some(b) => bool_name(*b).to_string(),
            None => self.world.get(var).cloned().unwrap_or_else(|| "false".to_string()),
        }
    }

    fn violation(s: &PlanStep, condition: String) -> Violation {
        Violation {
            step: s.id,
            name: s.name.clone(),
            condition,
        }
    }

    /// First unmet precondition or broken ignorance protection of `s`.
    fn check(&self, s: &PlanStep) -> Option<Violation> {
        for lit in &s.pre {
            let name = lit.atom.to_string();
            let ok = match lit.sign {
                Sign::Pos => self.state.get(&name) == Some(&true),
                Sign::Neg => self.state.get(&name) != Some(&true),
                Sign::Unknown => !self.known.contains(&name),
            };
            if !ok {
                return Some(Self::violation(s, lit.to_string()));
            }
        }
        if let Some(x) = &s.observes {
            let name = x.to_string();
            if self.known.contains(&name) {
                return Some(Self::violation(s, format!("unknown {name}")));
            }
        }
        for l in self.plan.links.iter().filter(|l| l.consumer == s.id) {
            if let LinkKind::Ignorance { var } = &l.kind {
                let name = var.to_string();
                if self.known.contains(&name) {
                    return Some(Self::violation(s, format!("unknown {name}")));
                }
            }
        }
        None
    }

    /// Possible outcomes of `s` in the current state with their
    /// probabilities.
    fn outcomes(&self, s: &PlanStep) -> Result<Vec<(usize, f64)>, SimError> {
        match s.kind {
            OpKind::Deterministic => Ok(vec![(0, 1.0)]),
            OpKind::Observation => {
                let x = s
                    .observes
                    .as_ref()
                    .ok_or_else(|| SimError::MalformedPlan(format!("{} observes nothing", s.name)))?;
                let v = self.value(&x.to_string());
                let i = s
                    .outcome_index(&v)
                    .ok_or_else(|| SimError::MalformedPlan(format!("{} has no outcome `{v}`", s.name)))?;
                Ok(vec![(i, 1.0)])
            }
            OpKind::Conditional => {
                let row = if s.cpt.is_empty() {
                    s.distribution.clone()
                } else {
                    let key: Vec<String> = s.influences.iter().map(|x| self.value(&x.to_string())).collect();
                    s.cpt_row(&key).map(<[f64]>::to_vec)
                };
                let row = row.ok_or_else(|| SimError::MalformedPlan(format!("{} has no distribution here", s.name)))?;
                Ok(row.into_iter().enumerate().filter(|&(_, p)| p > 0.0).collect())
            }
        }
    }

    fn apply(&mut self, s: &PlanStep, oi: usize) {
        let o = &s.outcomes[oi];
        for a in &o.add {
            self.state.insert(a.to_string(), true);
            self.known.insert(a.to_string());
        }
        for a in &o.del {
            self.state.insert(a.to_string(), false);
            self.known.insert(a.to_string());
        }
        if let Some(x) = &s.observes {
            self.known.insert(x.to_string());
        }
        self.trace.push((s.id, o.name.clone()));
    }

    fn goal_violation(&self, goal: StepId) -> Option<Violation> {
        self.plan.goals.iter().find_map(|lit| {
            let holds = match lit.sign {
                Sign::Pos => self.state.get(&lit.atom.to_string()) == Some(&true),
                Sign::Neg => self.state.get(&lit.atom.to_string()) != Some(&true),
                Sign::Unknown => !self.known.contains(&lit.atom.to_string()),
            };
            (!holds).then(|| Violation {
                step: goal,
                name: "goal".to_string(),
                condition: lit.to_string(),
            })
        })
    }
}

/// Where a run ended.
enum End {
    Goal(Option<Violation>),
    GiveUp,
    Violated(Violation),
}

/// Chooses one outcome index from `(index, probability)` pairs.
type Picker<'a> = dyn FnMut(&[(usize, f64)]) -> usize + 'a;

/// Follows the tree from `node`, drawing conditional outcomes with `pick`.
fn run_from<'p>(
    exec: &mut Exec<'p>,
    mut node: &'p PlanNode,
    pick: &mut Picker<'_>,
) -> Result<End, SimError> {
    loop {
        match node {
            PlanNode::Goal { step, .. } => return Ok(End::Goal(exec.goal_violation(*step))),
            PlanNode::GiveUp { .. } => return Ok(End::GiveUp),
            PlanNode::Act { step, next } => {
                let s = exec.step(*step)?;
                if let Some(v) = exec.check(s) {
                    return Ok(End::Violated(v));
                }
                let oi = pick(&exec.outcomes(s)?);
                exec.apply(s, oi);
                node = next;
            }
            PlanNode::Branch { step, arms } => {
                let s = exec.step(*step)?;
                if let Some(v) = exec.check(s) {
                    return Ok(End::Violated(v));
                }
                let oi = pick(&exec.outcomes(s)?);
                exec.apply(s, oi);
                let name = &s.outcomes[oi].name;
                node = &arms
                    .iter()
                    .find(|a| &a.outcome == name)
                    .ok_or_else(|| SimError::MalformedPlan(format!("branch {} has no arm `{name}`", s.name)))?
                    .node;
            }
        }
    }
}

/// One execution of the plan in `world`, with conditional outcomes drawn
/// from a generator seeded by `seed`.
pub fn execute_plan(plan: &ConditionalPlan, world: &World, seed: u64) -> Result<TrialResult, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    execute_with(plan, world, &mut rng)
}

fn execute_with<R: Rng>(plan: &ConditionalPlan, world: &World, rng: &mut R) -> Result<TrialResult, SimError> {
    let mut exec = Exec::new(plan, world);
    let end = run_from(&mut exec, &plan.tree, &mut |d| draw(rng, d))?;
    let (success, violation) = match end {
        End::Goal(v) => (v.is_none(), v),
        End::GiveUp => (false, None),
        End::Violated(v) => (false, Some(v)),
    };
    Ok(TrialResult {
        success,
        trace: exec.trace,
        violation,
        world_sample: world.clone(),
    })
}

fn count_violations(vs: impl IntoIterator<Item = Violation>) -> Vec<ViolationCount> {
    let mut counts: BTreeMap<Violation, usize> = BTreeMap::new();
    for v in vs {
        *counts.entry(v).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(v, count)| ViolationCount {
            step: v.step,
            name: v.name,
            condition: v.condition,
            count,
        })
        .collect()
}

/// Success frequency over independent trials. Trial `i` draws its world
/// and its outcomes from stream `i` of a generator seeded by `seed`, so the
/// result does not depend on how trials are spread over threads.
pub fn estimate_success(plan: &ConditionalPlan, trials: usize, seed: u64) -> Result<Estimate, SimError> {
    let net = plan_network(plan)?;
    let results: Vec<TrialResult> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            let world = world_of(&net, &net.sample(&mut rng));
            execute_with(plan, &world, &mut rng)
        })
        .collect::<Result<_, _>>()?;
    let successes = results.iter().filter(|r| r.success).count();
    let n = trials.max(1) as f64;
    let frequency = successes as f64 / n;
    Ok(Estimate {
        trials,
        successes,
        frequency,
        stderr: (frequency * (1.0 - frequency) / n).sqrt(),
        violations: count_violations(results.into_iter().filter_map(|r| r.violation)),
    })
}

/// Exact success probability: every world of the prior network and every
/// conditional outcome, weighted by probability.
pub fn exact_success(plan: &ConditionalPlan) -> Result<Exact, SimError> {
    let net = plan_network(plan)?;
    let mut probability = 0.0;
    let mut violations = BTreeSet::new();
    for (values, p) in net.assignments() {
        let world = world_of(&net, &values);
        let exec = Exec::new(plan, &world);
        enumerate(exec, &plan.tree, p, &mut probability, &mut violations)?;
    }
    Ok(Exact {
        probability,
        violations: violations.into_iter().collect(),
    })
}

fn enumerate<'p>(
    exec: Exec<'p>,
    node: &'p PlanNode,
    p: f64,
    total: &mut f64,
    violations: &mut BTreeSet<Violation>,
) -> Result<(), SimError> {
    let (step, arms, next) = match node {
        PlanNode::Goal { step, .. } => {
            match exec.goal_violation(*step) {
                None => *total += p,
                Some(v) => {
                    violations.insert(v);
                }
            }
            return Ok(());
        }
        PlanNode::GiveUp { .. } => return Ok(()),
        PlanNode::Act { step, next } => (*step, None, Some(next.as_ref())),
        PlanNode::Branch { step, arms } => (*step, Some(arms), None),
    };
    let s = exec.step(step)?;
    if let Some(v) = exec.check(s) {
        violations.insert(v);
        return Ok(());
    }
    for (oi, q) in exec.outcomes(s)? {
        let child = match (arms, next) {
            (Some(arms), _) => {
                let name = &s.outcomes[oi].name;
                &arms
                    .iter()
                    .find(|a| &a.outcome == name)
                    .ok_or_else(|| SimError::MalformedPlan(format!("branch {} has no arm `{name}`", s.name)))?
                    .node
            }
            (None, Some(n)) => n,
            (None, None) => unreachable!("act or branch"),
        };
        let mut e = exec.clone();
        e.apply(s, oi);
        enumerate(e, child, p * q, total, violations)?;
    }
    Ok(())
}

/// Stable identifier of a plan: a digest of its JSON form.
pub fn plan_id(plan: &ConditionalPlan) -> String {
    let digest = Sha256::digest(plan.to_json().as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Monte Carlo estimate compared against the plan's analytic mass.
pub fn simulation_report(plan: &ConditionalPlan, trials: usize, seed: u64, exhaustive: bool) -> Result<SimulationReport, SimError> {
    let est = estimate_success(plan, trials, seed)?;
    let analytic = plan.achieved_mass;
    let z_score = (est.stderr > 0.0).then(|| (est.frequency - analytic) / est.stderr);
    let exact = if exhaustive { Some(exact_success(plan)?.probability) } else { None };
    Ok(SimulationReport {
        plan_id: plan_id(plan),
        trials,
        frequency: est.frequency,
        stderr: est.stderr,
        analytic,
        z_score,
        violations: est.violations,
        seed,
        generator: GENERATOR.to_string(),
        exact,
    })
}
