use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Cpt, GroundDomain, NORMALIZATION_TOLERANCE};
use crate::error::ModelError;

/// A discrete random variable with its conditional probability table.
///
/// `cpt` is laid out row-major: the row for a parent assignment is found by
/// reading the parent outcome indices as a mixed-radix number (first parent
/// most significant), and each row holds one entry per outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub outcomes: Vec<String>,
    pub parents: Vec<usize>,
    pub cpt: Vec<f64>,
}

impl Variable {
    pub fn card(&self) -> usize {
        self.outcomes.len()
    }

    pub fn outcome_index(&self, o: &str) -> Option<usize> {
        self.outcomes.iter().position(|x| x == o)
    }
}

/// A belief network. Variables are kept in insertion order, which is
/// always a topological order because parents must exist before children.
/// Cloning is cheap: variables are shared behind `Arc`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BeliefNet {
    vars: Vec<Arc<Variable>>,
    index: BTreeMap<String, usize>,
}

impl BeliefNet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn variables(&self) -> impl Iterator<Item = &Variable> {
        self.vars.iter().map(|v| v.as_ref())
    }

    pub fn var(&self, i: usize) -> &Variable {
        &self.vars[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Variable> {
        self.index_of(name).map(|i| self.var(i))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn parent_names(&self, name: &str) -> Vec<String> {
        self.get(name)
            .map(|v| v.parents.iter().map(|p| self.vars[*p].name.clone()).collect())
            .unwrap_or_default()
    }

    /// Returns a new network with `name` added (or replaced in place when it
    /// already exists and keeps a valid topological position).
    ///
    /// `cpt` rows are keyed by parent outcome names in `parents` order.
    pub fn with_variable(
        &self,
        name: &str,
        outcomes: &[String],
        parents: &[String],
        cpt: &Cpt,
    ) -> Result<BeliefNet, ModelError> {
        let mut parent_idx = Vec::with_capacity(parents.len());
        for p in parents {
            let i = self
                .index_of(p)
                .ok_or_else(|| ModelError::MissingInfluenceVariable(p.clone()))?;
            parent_idx.push(i);
        }
        let spaces: Vec<Vec<String>> = parent_idx.iter().map(|&i| self.vars[i].outcomes.clone()).collect();
        let mut table = Vec::new();
        for key in crate::domain::cartesian_product(&spaces) {
            let row = cpt.row(&key).ok_or_else(|| ModelError::MissingCptRow {
                var: name.to_string(),
                row: key.clone(),
            })?;
            if row.len() != outcomes.len() {
                return Err(ModelError::BadCpt {
                    var: name.to_string(),
                    msg: format!("row {key:?} has {} entries for {} outcomes", row.len(), outcomes.len()),
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE || row.iter().any(|p| *p < 0.0) {
                return Err(ModelError::BadCpt {
                    var: name.to_string(),
                    msg: format!("row {key:?} sums to {sum}"),
                });
            }
            table.extend_from_slice(row);
        }
        let var = Arc::new(Variable {
            name: name.to_string(),
            outcomes: outcomes.to_vec(),
            parents: parent_idx.clone(),
            cpt: table,
        });
        let mut net = self.clone();
        match self.index_of(name) {
            Some(pos) => {
                if parent_idx.iter().any(|&p| p >= pos) {
                    return Err(ModelError::Cyclic(name.to_string()));
                }
                let old = &self.vars[pos];
                if old.outcomes != outcomes {
                    let dependents = self.vars.iter().any(|v| v.parents.contains(&pos));
                    if dependents {
                        return Err(ModelError::OutcomeSpaceMismatch {
                            var: name.to_string(),
                            op: outcomes.to_vec(),
                            net: old.outcomes.clone(),
                        });
                    }
                }
                net.vars[pos] = var;
            }
            None => {
                net.index.insert(name.to_string(), net.vars.len());
                net.vars.push(var);
            }
        }
        Ok(net)
    }

    /// Probability of outcome `o` of variable `v` given parent outcome
    /// indices `parent_vals` (aligned with `v.parents`).
    pub fn cpt_entry(&self, v: usize, parent_vals: &[usize], o: usize) -> f64 {
        let var = &self.vars[v];
        let mut row = 0;
        for (k, &p) in var.parents.iter().enumerate() {
            row = row * self.vars[p].card() + parent_vals[k];
        }
        var.cpt[row * var.card() + o]
    }

    /// Draws a full assignment (outcome index per variable) by ancestral
    /// sampling in topological order.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let mut values = Vec::with_capacity(self.vars.len());
        for (i, v) in self.vars.iter().enumerate() {
            let pv: Vec<usize> = v.parents.iter().map(|&p| values[p]).collect();
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = v.card() - 1;
            for o in 0..v.card() {
                acc += self.cpt_entry(i, &pv, o);
                if u < acc {
                    pick = o;
                    break;
                }
            }
            values.push(pick);
        }
        values
    }

    /// Every full assignment with its probability, in lexicographic order.
    pub fn assignments(&self) -> Vec<(Vec<usize>, f64)> {
        let mut out = vec![(Vec::new(), 1.0)];
        for (i, v) in self.vars.iter().enumerate() {
            let mut next = Vec::with_capacity(out.len() * v.card());
            for (vals, p) in &out {
                let pv: Vec<usize> = v.parents.iter().map(|&q| vals[q]).collect();
                for o in 0..v.card() {
                    let q = self.cpt_entry(i, &pv, o);
                    if q == 0.0 {
                        continue;
                    }
                    let mut nv = vals.clone();
                    nv.push(o);
                    next.push((nv, p * q));
                }
            }
            out = next;
        }
        out
    }

    /// Whether `a` and `b` are d-connected given the observed set.
    pub fn d_connected(&self, a: &str, b: &str, given: &[String]) -> Result<bool, ModelError> {
        let ai = self.index_of(a).ok_or_else(|| ModelError::UnknownVariable(a.to_string()))?;
        let bi = self.index_of(b).ok_or_else(|| ModelError::UnknownVariable(b.to_string()))?;
        let mut observed = BTreeSet::new();
        for g in given {
            observed.insert(self.index_of(g).ok_or_else(|| ModelError::UnknownVariable(g.clone()))?);
        }
        if observed.contains(&ai) || observed.contains(&bi) {
            return Ok(false);
        }
        Ok(self.reachable(ai, &observed).contains(&bi))
    }

    /// Bayes-ball: nodes reachable from `src` along active trails.
    fn reachable(&self, src: usize, observed: &BTreeSet<usize>) -> BTreeSet<usize> {
        let n = self.vars.len();
        let mut children = vec![Vec::new(); n];
        for (i, v) in self.vars.iter().enumerate() {
            for &p in &v.parents {
                children[p].push(i);
            }
        }
        // Observed nodes and their ancestors.
        let mut anc = vec![false; n];
        let mut stack: Vec<usize> = observed.iter().copied().collect();
        while let Some(x) = stack.pop() {
            if !anc[x] {
                anc[x] = true;
                stack.extend(self.vars[x].parents.iter().copied());
            }
        }
        // (node, arrived_from_child)
        let mut visited = BTreeSet::new();
        let mut reach = BTreeSet::new();
        let mut queue = VecDeque::from([(src, true)]);
        while let Some((x, up)) = queue.pop_front() {
            if !visited.insert((x, up)) {
                continue;
            }
            let obs = observed.contains(&x);
            if !obs {
                reach.insert(x);
            }
            if up && !obs {
                for &p in &self.vars[x].parents {
                    queue.push_back((p, true));
                }
                for &c in &children[x] {
                    queue.push_back((c, false));
                }
            } else if !up {
                if !obs {
                    for &c in &children[x] {
                        queue.push_back((c, false));
                    }
                }
                if anc[x] {
                    for &p in &self.vars[x].parents {
                        queue.push_back((p, true));
                    }
                }
            }
        }
        reach.remove(&src);
        reach
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph net {\n  rankdir=TB;\n");
        for (i, v) in self.vars.iter().enumerate() {
            writeln!(s, "  v{i} [label=\"{}\\n{{{}}}\"];", escape(&v.name), v.outcomes.join(",")).unwrap();
        }
        for (i, v) in self.vars.iter().enumerate() {
            for p in &v.parents {
                writeln!(s, "  v{p} -> v{i};").unwrap();
            }
        }
        s.push_str("}\n");
        s
    }

    pub fn to_json(&self) -> serde_json::Value {
        let vars: Vec<serde_json::Value> = self
            .vars
            .iter()
            .map(|v| {
                serde_json::json!({
                    "name": v.name,
                    "outcomes": v.outcomes,
                    "parents": v.parents.iter().map(|p| self.vars[*p].name.clone()).collect::<Vec<_>>(),
                    "cpt": v.cpt,
                })
            })
            .collect();
        serde_json::json!({ "variables": vars })
    }

    /// Rebuilds a network from the layout produced by [`to_json`](Self::to_json).
    pub fn from_json(value: &serde_json::Value) -> Result<BeliefNet, ModelError> {
        #[derive(Deserialize)]
        struct RawVar {
            name: String,
            outcomes: Vec<String>,
            parents: Vec<String>,
            cpt: Vec<f64>,
        }
        let raw: Vec<RawVar> = value
            .get("variables")
            .cloned()
            .map(serde_json::from_value)
            .transpose()
            .map_err(|e| ModelError::BadCpt {
                var: "<json>".into(),
                msg: e.to_string(),
            })?
            .unwrap_or_default();
        let mut net = BeliefNet::new();
        for r in raw {
            let spaces: Vec<Vec<String>> = r
                .parents
                .iter()
                .map(|p| {
                    net.get(p)
                        .map(|v| v.outcomes.clone())
                        .ok_or_else(|| ModelError::MissingInfluenceVariable(p.clone()))
                })
                .collect::<Result<_, _>>()?;
            let keys = crate::domain::cartesian_product(&spaces);
            let k = r.outcomes.len();
            if r.cpt.len() != keys.len() * k {
                return Err(ModelError::BadCpt {
                    var: r.name,
                    msg: "table size does not match parents".into(),
                });
            }
            let mut cpt = Cpt::default();
            for (ri, key) in keys.into_iter().enumerate() {
                cpt.rows.insert(key, r.cpt[ri * k..(ri + 1) * k].to_vec());
            }
            net = net.with_variable(&r.name, &r.outcomes, &r.parents, &cpt)?;
        }
        Ok(net)
    }
}

fn escape(s: &str) -> String {
    s.replace('"', "\\\"")
}

/// One network variable per ground prior clause, with parents per clause
/// body. Known literals are certainties and are not network variables.
pub fn build_initial_net(domain: &GroundDomain) -> Result<BeliefNet, ModelError> {
    let mut net = BeliefNet::new();
    for c in &domain.clauses {
        let parents: Vec<String> = c.parents.iter().map(|p| p.to_string()).collect();
        net = net.with_variable(&c.head.to_string(), &c.outcomes, &parents, &c.cpt)?;
    }
    Ok(net)
}
