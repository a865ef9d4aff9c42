use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::parse::matching_clause;
use super::{Atom, Cpt, Domain, Literal, OpKind, OutcomeFamily, Problem};
use crate::error::GroundError;

/// A fully instantiated operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundOp {
    pub id: usize,
    pub schema: String,
    pub args: Vec<String>,
    pub kind: OpKind,
    pub pre: Vec<Literal>,
    pub family: OutcomeFamily,
    pub distribution: Option<Vec<f64>>,
    pub observes: Option<Atom>,
    pub influences: Vec<Atom>,
    pub cpt: Option<Cpt>,
}

impl GroundOp {
    pub fn name(&self) -> String {
        if self.args.is_empty() {
            self.schema.clone()
        } else {
            format!("{}({})", self.schema, self.args.join(","))
        }
    }

    pub fn is_branching(&self) -> bool {
        self.kind != OpKind::Deterministic
    }

    /// Atoms this operator can change or reveal, used to detect threats to
    /// ignorance protections.
    pub fn touches(&self, atom: &Atom) -> bool {
        self.observes.as_ref() == Some(atom)
            || self.family.outcomes.iter().any(|o| o.sets(atom).is_some())
    }

    /// All atoms appearing anywhere in the operator.
    pub fn mentioned_atoms(&self) -> impl Iterator<Item = &Atom> {
        self.pre
            .iter()
            .map(|l| &l.atom)
            .chain(self.family.outcomes.iter().flat_map(|o| o.add.iter().chain(&o.del)))
            .chain(self.observes.iter())
            .chain(self.influences.iter())
    }
}

impl fmt::Display for GroundOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// A ground conditional outcome statement: one belief-net variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundClause {
    pub head: Atom,
    pub outcomes: Vec<String>,
    pub parents: Vec<Atom>,
    pub cpt: Cpt,
}

#[derive(Debug, Clone)]
pub struct GroundDomain {
    pub ops: Vec<GroundOp>,
    /// Prior clauses in topological (parents first) order.
    pub clauses: Vec<GroundClause>,
    pub problem: Problem,
    /// Initial knowledge after expanding `default-false` declarations.
    pub initial: BTreeMap<Atom, bool>,
    establishers: HashMap<(Atom, bool), Vec<(usize, usize)>>,
    observers: HashMap<Atom, Vec<usize>>,
}

impl GroundDomain {
    pub fn op(&self, id: usize) -> &GroundOp {
        &self.ops[id]
    }

    pub fn clause(&self, head: &Atom) -> Option<&GroundClause> {
        self.clauses.iter().find(|c| &c.head == head)
    }

    pub fn is_prior(&self, atom: &Atom) -> bool {
        self.clause(atom).is_some()
    }

    /// `(operator, outcome)` pairs whose outcome makes `lit` true.
    pub fn establishers(&self, lit: &Literal) -> &[(usize, usize)] {
        match lit.value() {
            Some(v) => self
                .establishers
                .get(&(lit.atom.clone(), v))
                .map(Vec::as_slice)
                .unwrap_or(&[]),
            None => &[],
        }
    }

    pub fn observers(&self, var: &Atom) -> &[usize] {
        self.observers.get(var).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Whether `lit` holds in the initial knowledge state.
    pub fn initially(&self, lit: &Literal) -> bool {
        match lit.value() {
            Some(v) => self.initial.get(&lit.atom) == Some(&v),
            None => self.is_prior(&lit.atom) && !self.initial.contains_key(&lit.atom),
        }
    }
}

/// Instantiates every operator schema over all type-compatible constant
/// tuples and assembles the prior clauses relevant to the problem's
/// uncertain atoms by chaining backwards through clause bodies.
pub fn ground(domain: &Domain, problem: &Problem) -> Result<GroundDomain, GroundError> {
    let mut ops = Vec::new();
    for schema in &domain.operators {
        let mut spaces = Vec::new();
        for p in &schema.params {
            let consts = problem.constants_of(&p.ty);
            if consts.is_empty() {
                return Err(GroundError::UninstantiableType {
                    schema: schema.name.clone(),
                    ty: p.ty.clone(),
                });
            }
            spaces.push(consts);
        }
        for args in super::parse::cartesian(&spaces) {
            let binding: BTreeMap<String, String> = schema
                .params
                .iter()
                .map(|p| p.var.clone())
                .zip(args.iter().cloned())
                .collect();
            let family = OutcomeFamily {
                id: schema.effects.id.clone(),
                outcomes: schema
                    .effects
                    .outcomes
                    .iter()
                    .map(|o| super::Outcome {
                        name: o.name.clone(),
                        add: o.add.iter().map(|a| a.substitute(&binding)).collect(),
                        del: o.del.iter().map(|a| a.substitute(&binding)).collect(),
                    })
                    .collect(),
            };
            ops.push(GroundOp {
                id: ops.len(),
                schema: schema.name.clone(),
                args,
                kind: schema.kind,
                pre: schema.pre.iter().map(|l| l.substitute(&binding)).collect(),
                family,
                distribution: schema.simple_distribution.clone(),
                observes: schema.observes.as_ref().map(|a| a.substitute(&binding)),
                influences: schema.influences.iter().map(|a| a.substitute(&binding)).collect(),
                cpt: schema.influence_cpt.clone(),
            });
        }
    }

    let clauses = assemble_priors(domain, problem)?;
    let priors: BTreeSet<&Atom> = clauses.iter().map(|c| &c.head).collect();

    let mut initial = BTreeMap::new();
    for a in &problem.known_true {
        initial.insert(a.clone(), true);
    }
    for a in &problem.known_false {
        initial.entry(a.clone()).or_insert(false);
    }
    if !problem.default_false.is_empty() {
        let mentioned = ops
            .iter()
            .flat_map(GroundOp::mentioned_atoms)
            .chain(problem.goals.iter().map(|g| &g.atom));
        for a in mentioned {
            if problem.default_false.contains(&a.name) && !priors.contains(a) {
                initial.entry(a.clone()).or_insert(false);
            }
        }
    }

    let mut establishers: HashMap<(Atom, bool), Vec<(usize, usize)>> = HashMap::new();
    let mut observers: HashMap<Atom, Vec<usize>> = HashMap::new();
    for op in &ops {
        for (oi, o) in op.family.outcomes.iter().enumerate() {
            for a in &o.add {
                establishers.entry((a.clone(), true)).or_default().push((op.id, oi));
            }
            for a in &o.del {
                establishers.entry((a.clone(), false)).or_default().push((op.id, oi));
            }
        }
        if let Some(v) = &op.observes {
            observers.entry(v.clone()).or_default().push(op.id);
        }
    }

    Ok(GroundDomain {
        ops,
        clauses,
        problem: problem.clone(),
        initial,
        establishers,
        observers,
    })
}

fn assemble_priors(domain: &Domain, problem: &Problem) -> Result<Vec<GroundClause>, GroundError> {
    let mut found: BTreeMap<Atom, GroundClause> = BTreeMap::new();
    let mut agenda: Vec<Atom> = problem.unknown.iter().rev().cloned().collect();
    while let Some(a) = agenda.pop() {
        if found.contains_key(&a) {
            continue;
        }
        let matches = matching_clause(&domain.clauses, &a);
        let (ci, binding) = match matches.as_slice() {
            [] => continue,
            [m] => m.clone(),
            _ => return Err(GroundError::AmbiguousClause(a.to_string())),
        };
        let c = &domain.clauses[ci];
        let parents: Vec<Atom> = c.body.iter().map(|b| b.substitute(&binding)).collect();
        for p in parents.iter().rev() {
            agenda.push(p.clone());
        }
        found.insert(
            a.clone(),
            GroundClause {
                head: a,
                outcomes: c.outcomes.clone(),
                parents,
                cpt: c.cpt.clone(),
            },
        );
    }

    // Topological order, ties broken by atom order.
    let mut ordered = Vec::new();
    let mut placed: BTreeSet<Atom> = BTreeSet::new();
    while ordered.len() < found.len() {
        let next = found
            .values()
            .find(|c| {
                !placed.contains(&c.head)
                    && c.parents.iter().all(|p| placed.contains(p) || !found.contains_key(p))
            })
            .cloned();
        match next {
            Some(c) => {
                placed.insert(c.head.clone());
                ordered.push(c);
            }
            None => {
                let stuck = found.keys().find(|k| !placed.contains(*k)).unwrap();
                return Err(GroundError::CyclicClauses(stuck.to_string()));
            }
        }
    }
    Ok(ordered)
}
