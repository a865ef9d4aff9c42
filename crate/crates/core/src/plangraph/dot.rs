use std::fmt::Write;

use super::{LinkKind, PlanGraph, StepKind};
use crate::domain::GroundDomain;

/// Graphviz rendering. Causal links are solid, orderings dashed,
/// conditioning links labelled with the outcome, influences dotted and
/// ignorance links double-lined.
pub fn to_dot(plan: &PlanGraph, ground: &GroundDomain) -> String {
    let mut s = String::from("digraph plan {\n  rankdir=TB;\n  node [shape=box];\n");
    for step in plan.steps() {
        let name = match step.kind {
            StepKind::Start => "start".to_string(),
            StepKind::Goal => format!("goal{}", step.id),
            StepKind::Op(o) => ground.op(o).name(),
        };
        let mut attrs = String::new();
        if step.kind == StepKind::Goal {
            attrs.push_str(", shape=doubleoctagon");
            if plan.abandoned.contains(&step.id) {
                attrs.push_str(", style=dashed");
            }
        }
        writeln!(s, "  s{} [label=\"{}\\n{}\"{attrs}];", step.id, name, step.context).unwrap();
    }
    for l in plan.links() {
        let style = match &l.kind {
            LinkKind::Causal { lit, outcome } => match outcome {
                Some(o) => format!("label=\"{lit} [{o}]\""),
                None => format!("label=\"{lit}\""),
            },
            LinkKind::Ordering => "style=dashed".to_string(),
            LinkKind::Conditioning { outcome } => format!("label=\"{outcome}\", color=blue"),
            LinkKind::Influence { var, value, .. } => format!("style=dotted, label=\"{var}={value}\""),
            LinkKind::Ignorance { var } => format!("color=\"black:black\", label=\"unk {var}\""),
        };
        writeln!(s, "  s{} -> s{} [{style}];", l.producer, l.consumer).unwrap();
    }
    s.push_str("}\n");
    s
}
