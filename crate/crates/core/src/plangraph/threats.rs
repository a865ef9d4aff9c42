use serde::Serialize;

use super::{contexts_compatible, Context, Label, Link, LinkKind, PlanGraph, StepId};
use crate::domain::GroundDomain;

/// Step `step` may clobber `links[link]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Threat {
    pub step: StepId,
    pub link: usize,
}

/// `v` can be ordered strictly between `s` and `w`.
pub fn possibly_between(plan: &PlanGraph, v: StepId, s: StepId, w: StepId) -> bool {
    v != s && v != w && !plan.precedes(w, v) && !plan.precedes(v, s)
}

/// Whether some outcome of `v` that can occur alongside the link's
/// consumer undoes what the link protects.
pub fn clobbers(plan: &PlanGraph, ground: &GroundDomain, v: StepId, link: &Link) -> bool {
    if v == link.producer || v == link.consumer {
        return false;
    }
    let Some(op) = plan.ground_op(ground, v) else {
        return false;
    };
    let consumer_ctx = plan.context(link.consumer);
    let producer_ctx = plan.context(link.producer);
    let possible = |name: &str| {
        let l = Label::step(v, name);
        contexts_compatible(&Context::from_labels([l.clone()]), consumer_ctx)
            && contexts_compatible(&Context::from_labels([l]), producer_ctx)
    };
    let outcomes = op.family.outcomes.iter().filter(|o| possible(&o.name));
    match &link.kind {
        LinkKind::Causal { lit, .. } => match lit.value() {
            Some(b) => outcomes.into_iter().any(|o| o.sets(&lit.atom) == Some(!b)),
            None => op.touches(&lit.atom),
        },
        LinkKind::Ignorance { var } => op.touches(var),
        LinkKind::Influence { var, value, .. } => {
            let want = match value.as_str() {
                "true" => Some(true),
                "false" => Some(false),
                _ => None,
            };
            outcomes.into_iter().any(|o| match (o.sets(var), want) {
                (Some(got), Some(w)) => got != w,
                (Some(_), None) => true,
                (None, _) => false,
            })
        }
        LinkKind::Conditioning { .. } | LinkKind::Ordering => false,
    }
}

/// Every (step, protection link) pair where the step's context is
/// compatible with both link endpoints, the step may fall between them,
/// and it clobbers the protected condition.
pub fn find_threats(plan: &PlanGraph, ground: &GroundDomain) -> Vec<Threat> {
    let mut out = Vec::new();
    for (li, link) in plan.links().iter().enumerate() {
        if !link.is_protection() {
            continue;
        }
        for v in 0..plan.steps().len() {
            let cv = plan.context(v);
            if contexts_compatible(cv, plan.context(link.producer))
                && contexts_compatible(cv, plan.context(link.consumer))
                && possibly_between(plan, v, link.producer, link.consumer)
                && clobbers(plan, ground, v, link)
            {
                out.push(Threat { step: v, link: li });
            }
        }
    }
    out
}

/// All total orders of the steps compatible with `context` that respect
/// the plan's ordering.
pub fn linearizations(plan: &PlanGraph, context: &Context) -> Vec<Vec<StepId>> {
    let members: Vec<StepId> = (0..plan.steps().len())
        .filter(|&s| contexts_compatible(plan.context(s), context))
        .collect();
    let mut out = Vec::new();
    let mut prefix = Vec::with_capacity(members.len());
    let mut used = vec![false; plan.steps().len()];
    extend(plan, &members, &mut used, &mut prefix, &mut out);
    out
}

fn extend(plan: &PlanGraph, members: &[StepId], used: &mut [bool], prefix: &mut Vec<StepId>, out: &mut Vec<Vec<StepId>>) {
    if prefix.len() == members.len() {
        out.push(prefix.clone());
        return;
    }
    for &s in members {
        if used[s] {
            continue;
        }
        let ready = members.iter().all(|&p| used[p] || p == s || !plan.precedes(p, s));
        if ready {
            used[s] = true;
            prefix.push(s);
            extend(plan, members, used, prefix, out);
            prefix.pop();
            used[s] = false;
        }
    }
}
