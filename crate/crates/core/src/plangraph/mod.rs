//! The shared plan representation for both planners: steps with contexts,
//! causal / conditioning / ordering / influence / ignorance links, threat
//! detection, and tree- or DAG-shaped plans.

mod context;
mod dot;
mod extract;
mod threats;

use std::collections::BTreeSet;
use std::hash::{Hash, Hasher};

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

pub use context::{contexts_compatible, Context, Label, LabelSource, StepId};
pub use dot::to_dot;
pub use extract::{complete_goals, extract_conditional_plan, extract_covered};
pub use threats::{clobbers, find_threats, linearizations, possibly_between, Threat};

use crate::domain::{Atom, GroundDomain, GroundOp, Literal};
use crate::error::GraphError;

pub const START: StepId = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Tree,
    Dag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepKind {
    Start,
    Goal,
    Op(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Step {
    pub id: StepId,
    pub kind: StepKind,
    /// Labels attached directly (conditioning, or a goal's covered context).
    pub own: Context,
    /// Full context after propagation through links.
    pub context: Context,
}

impl Step {
    pub fn op(&self) -> Option<usize> {
        match self.kind {
            StepKind::Op(o) => Some(o),
            _ => None,
        }
    }

    pub fn is_goal(&self) -> bool {
        self.kind == StepKind::Goal
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LinkKind {
    /// Producer establishes `lit` (under `outcome` when branching) for the consumer.
    Causal { lit: Literal, outcome: Option<String> },
    /// Consumer executes only when the producer has this outcome.
    Conditioning { outcome: String },
    Ordering,
    /// Producer establishes or observes `var = value` for the consumer's
    /// outcome distribution.
    Influence {
        var: Atom,
        value: String,
        outcome: Option<String>,
    },
    /// `var` stays unknown from the start up to the consumer.
    Ignorance { var: Atom },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Link {
    pub kind: LinkKind,
    pub producer: StepId,
    pub consumer: StepId,
}

impl Link {
    pub fn causal(producer: StepId, lit: Literal, outcome: Option<String>, consumer: StepId) -> Self {
        Link {
            kind: LinkKind::Causal { lit, outcome },
            producer,
            consumer,
        }
    }

    pub fn ordering(before: StepId, after: StepId) -> Self {
        Link {
            kind: LinkKind::Ordering,
            producer: before,
            consumer: after,
        }
    }

    pub fn ignorance(var: Atom, consumer: StepId) -> Self {
        Link {
            kind: LinkKind::Ignorance { var },
            producer: START,
            consumer,
        }
    }

    pub fn conditioning(cond: StepId, outcome: impl Into<String>, consumer: StepId) -> Self {
        Link {
            kind: LinkKind::Conditioning { outcome: outcome.into() },
            producer: cond,
            consumer,
        }
    }

    /// The label a consumer inherits from this link, if any.
    pub fn label(&self) -> Option<Label> {
        match &self.kind {
            LinkKind::Causal { outcome: Some(o), .. }
            | LinkKind::Influence { outcome: Some(o), .. }
            | LinkKind::Conditioning { outcome: o } => Some(Label::step(self.producer, o.clone())),
            _ => None,
        }
    }

    /// Whether this link protects a condition over its interval.
    pub fn is_protection(&self) -> bool {
        matches!(
            self.kind,
            LinkKind::Causal { .. } | LinkKind::Influence { .. } | LinkKind::Ignorance { .. }
        )
    }
}

/// A partial conditional plan. Plan values are cheap to clone and every
/// editing operation returns a new value, so search can keep many variants.
#[derive(Debug, Clone)]
pub struct PlanGraph {
    steps: Vec<Step>,
    links: Vec<Link>,
    pub open_goals: BTreeSet<(StepId, Literal)>,
    pub open_influences: BTreeSet<(StepId, Atom)>,
    /// Goal steps given up on; they become explicit give-up leaves.
    pub abandoned: BTreeSet<StepId>,
    shape: Shape,
    /// `after[i]` holds every `j` with `i < j` in the transitive ordering.
    after: Vec<FixedBitSet>,
}

impl PartialEq for PlanGraph {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self.steps == other.steps
            && self.links == other.links
            && self.open_goals == other.open_goals
            && self.open_influences == other.open_influences
            && self.abandoned == other.abandoned
    }
}

impl Eq for PlanGraph {}

impl Hash for PlanGraph {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.shape.hash(state);
        self.steps.hash(state);
        self.links.hash(state);
        self.open_goals.hash(state);
        self.open_influences.hash(state);
        self.abandoned.hash(state);
    }
}

impl PlanGraph {
    /// A plan holding only the start step.
    pub fn empty(shape: Shape) -> Self {
        PlanGraph {
            steps: vec![Step {
                id: START,
                kind: StepKind::Start,
                own: Context::universal(),
                context: Context::universal(),
            }],
            links: Vec::new(),
            open_goals: BTreeSet::new(),
            open_influences: BTreeSet::new(),
            abandoned: BTreeSet::new(),
            shape,
            after: vec![FixedBitSet::with_capacity(1)],
        }
    }

    /// Start plus one goal step whose preconditions are `goals`.
    pub fn with_goal(shape: Shape, goals: &[Literal]) -> Self {
        let mut p = PlanGraph::empty(shape);
        let g = p.push_step(StepKind::Goal, Context::universal());
        p.push_link(Link::ordering(START, g)).expect("fresh ordering");
        for lit in goals {
            p.open_goals.insert((g, lit.clone()));
        }
        p
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn step(&self, id: StepId) -> &Step {
        &self.steps[id]
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn goal_steps(&self) -> impl Iterator<Item = StepId> + '_ {
        self.steps.iter().filter(|s| s.is_goal()).map(|s| s.id)
    }

    pub fn context(&self, id: StepId) -> &Context {
        &self.steps[id].context
    }

    /// Strict ordering `a < b` in the transitive closure.
    pub fn precedes(&self, a: StepId, b: StepId) -> bool {
        self.after[a].contains(b)
    }

    /// Steps ordered before `id` plus `id` itself.
    pub fn ancestors_or_self(&self, id: StepId) -> Vec<StepId> {
        (0..self.steps.len()).filter(|&s| s == id || self.precedes(s, id)).collect()
    }

    /// Canonical order key: (context size, id).
    pub fn canonical_key(&self, id: StepId) -> (usize, StepId) {
        (self.steps[id].context.len(), id)
    }

    pub fn add_step(&self, kind: StepKind, own: Context) -> (PlanGraph, StepId) {
        let mut p = self.clone();
        let id = p.push_step(kind, own);
        p.push_link(Link::ordering(START, id)).expect("start precedes everything");
        (p, id)
    }

    pub fn add_link(&self, link: Link) -> Result<PlanGraph, GraphError> {
        let mut p = self.clone();
        p.push_link(link)?;
        Ok(p)
    }

    pub(crate) fn push_step(&mut self, kind: StepKind, own: Context) -> StepId {
        let id = self.steps.len();
        self.steps.push(Step {
            id,
            kind,
            context: own.clone(),
            own,
        });
        for row in &mut self.after {
            row.grow(id + 1);
        }
        self.after.push(FixedBitSet::with_capacity(id + 1));
        self.refresh_contexts();
        id
    }

    pub(crate) fn push_link(&mut self, link: Link) -> Result<(), GraphError> {
        let n = self.steps.len();
        if link.producer >= n {
            return Err(GraphError::UnknownStep(link.producer));
        }
        if link.consumer >= n {
            return Err(GraphError::UnknownStep(link.consumer));
        }
        if matches!(link.kind, LinkKind::Ignorance { .. }) && link.producer != START {
            return Err(GraphError::IgnoranceNotFromStart(link.producer));
        }
        self.order(link.producer, link.consumer)?;
        let labelled = link.label().is_some() || matches!(link.kind, LinkKind::Causal { .. } | LinkKind::Influence { .. });
        self.links.push(link);
        if labelled {
            self.refresh_contexts();
        }
        Ok(())
    }

    /// Adds `a < b` to the transitive closure.
    fn order(&mut self, a: StepId, b: StepId) -> Result<(), GraphError> {
        if a == b || self.precedes(b, a) {
            return Err(GraphError::WouldCreateCycle(a, b));
        }
        if self.precedes(a, b) {
            return Ok(());
        }
        let mut add = self.after[b].clone();
        add.insert(b);
        for x in 0..self.steps.len() {
            if x == a || self.precedes(x, a) {
                self.after[x].union_with(&add);
            }
        }
        Ok(())
    }

    fn rebuild_closure(&mut self) {
        let n = self.steps.len();
        self.after = vec![FixedBitSet::with_capacity(n); n];
        let edges: Vec<(StepId, StepId)> = self.links.iter().map(|l| (l.producer, l.consumer)).collect();
        for (a, b) in edges {
            self.order(a, b).expect("existing links are acyclic");
        }
        self.refresh_contexts();
    }

    /// Recomputes every step's context: own labels, plus producer contexts
    /// and outcome labels inherited through links.
    pub(crate) fn refresh_contexts(&mut self) {
        let order = self.topological_order();
        for id in order {
            let mut ctx = self.steps[id].own.clone();
            for l in self.links.iter().filter(|l| l.consumer == id) {
                let inherits = match l.kind {
                    LinkKind::Causal { .. } | LinkKind::Influence { .. } | LinkKind::Conditioning { .. } => true,
                    LinkKind::Ordering => self.shape == Shape::Tree,
                    LinkKind::Ignorance { .. } => false,
                };
                if inherits {
                    ctx = ctx.union(&self.steps[l.producer].context);
                    if let Some(lab) = l.label() {
                        ctx.insert(lab);
                    }
                }
            }
            self.steps[id].context = ctx;
        }
    }

    /// Every step context is internally consistent.
    pub fn contexts_consistent(&self) -> bool {
        self.steps.iter().all(|s| s.context.is_consistent())
    }

    /// Kahn's algorithm with ties broken by canonical key.
    pub fn topological_order(&self) -> Vec<StepId> {
        let n = self.steps.len();
        let mut indeg = vec![0usize; n];
        let mut succ: Vec<BTreeSet<StepId>> = vec![BTreeSet::new(); n];
        for l in &self.links {
            if succ[l.producer].insert(l.consumer) {
                indeg[l.consumer] += 1;
            }
        }
        let mut ready: BTreeSet<((usize, StepId), StepId)> = (0..n)
            .filter(|&i| indeg[i] == 0)
            .map(|i| (self.canonical_key(i), i))
            .collect();
        let mut out = Vec::with_capacity(n);
        while let Some(first) = ready.iter().next().cloned() {
            ready.remove(&first);
            let i = first.1;
            out.push(i);
            for &j in &succ[i] {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    ready.insert((self.canonical_key(j), j));
                }
            }
        }
        out
    }

    /// Tree shape: the unique parent edge into `id`.
    pub fn tree_parent(&self, id: StepId) -> Option<(StepId, Option<String>)> {
        self.links.iter().find_map(|l| {
            if l.consumer != id {
                return None;
            }
            match &l.kind {
                LinkKind::Ordering => Some((l.producer, None)),
                LinkKind::Conditioning { outcome } => Some((l.producer, Some(outcome.clone()))),
                _ => None,
            }
        })
    }

    /// Tree shape: steps from start down to `id`, inclusive.
    pub fn tree_path(&self, id: StepId) -> Vec<StepId> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some((p, _)) = self.tree_parent(cur) {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Tree shape: direct children with the parent outcome leading to each.
    pub fn tree_children(&self, id: StepId) -> Vec<(StepId, Option<String>)> {
        self.links
            .iter()
            .filter(|l| l.producer == id)
            .filter_map(|l| match &l.kind {
                LinkKind::Ordering => Some((l.consumer, None)),
                LinkKind::Conditioning { outcome } => Some((l.consumer, Some(outcome.clone()))),
                _ => None,
            })
            .collect()
    }

    /// Tree shape: adds a fresh step hanging below `parent` (under
    /// `outcome` when the parent branches).
    pub(crate) fn add_tree_child(&mut self, parent: StepId, outcome: Option<String>, kind: StepKind) -> StepId {
        let id = self.push_step(kind, Context::universal());
        let link = match outcome {
            Some(o) => Link::conditioning(parent, o, id),
            None => Link::ordering(parent, id),
        };
        self.push_link(link).expect("fresh tree edge");
        id
    }

    /// Tree shape: inserts a fresh step on the edge `parent -> child`. The
    /// child hangs below the new step under `new_outcome` (None for
    /// deterministic steps).
    pub(crate) fn splice(&mut self, parent: StepId, child: StepId, kind: StepKind, new_outcome: Option<String>) -> StepId {
        let new = self.push_step(kind, Context::universal());
        let idx = self
            .links
            .iter()
            .position(|l| {
                l.producer == parent
                    && l.consumer == child
                    && matches!(l.kind, LinkKind::Ordering | LinkKind::Conditioning { .. })
            })
            .expect("tree edge exists");
        let old = self.links.remove(idx);
        self.links.push(Link {
            kind: old.kind,
            producer: parent,
            consumer: new,
        });
        self.links.push(match new_outcome {
            Some(o) => Link::conditioning(new, o, child),
            None => Link::ordering(new, child),
        });
        self.rebuild_closure();
        new
    }

    /// Tree shape: `id` and everything hanging below it.
    pub fn tree_subtree(&self, id: StepId) -> Vec<StepId> {
        (0..self.steps.len()).filter(|&s| s == id || self.precedes(id, s)).collect()
    }

    pub fn op_ids(&self) -> impl Iterator<Item = (StepId, usize)> + '_ {
        self.steps.iter().filter_map(|s| s.op().map(|o| (s.id, o)))
    }

    pub fn ground_op<'a>(&self, ground: &'a GroundDomain, id: StepId) -> Option<&'a GroundOp> {
        self.steps[id].op().map(|o| ground.op(o))
    }

    /// Links arriving at `id`.
    pub fn links_into(&self, id: StepId) -> impl Iterator<Item = &Link> {
        self.links.iter().filter(move |l| l.consumer == id)
    }

    /// Open goals and influences attached to `id`.
    pub fn open_items_at(&self, id: StepId) -> usize {
        self.open_goals.iter().filter(|(s, _)| *s == id).count()
            + self.open_influences.iter().filter(|(s, _)| *s == id).count()
    }

    pub fn has_open_items(&self, id: StepId) -> bool {
        self.open_goals.iter().any(|(s, _)| *s == id) || self.open_influences.iter().any(|(s, _)| *s == id)
    }
}
