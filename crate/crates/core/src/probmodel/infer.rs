//! Exact inference: brute-force enumeration (reference) and variable
//! elimination with a min-degree ordering (fast path).

use std::collections::{BTreeMap, BTreeSet};

use super::net::BeliefNet;
use crate::error::ModelError;

/// A variable/outcome pair naming one belief-net label.
pub type VarLabel = (String, String);

/// Resolves labels to `(variable index, outcome index)` evidence.
fn evidence(net: &BeliefNet, labels: &[VarLabel]) -> Result<BTreeMap<usize, usize>, ModelError> {
    let mut ev = BTreeMap::new();
    for (name, outcome) in labels {
        let v = net
            .index_of(name)
            .ok_or_else(|| ModelError::UnknownVariable(name.clone()))?;
        let o = net.var(v).outcome_index(outcome).ok_or_else(|| ModelError::UnknownOutcome {
            var: name.clone(),
            outcome: outcome.clone(),
        })?;
        if let Some(prev) = ev.insert(v, o) {
            if prev != o {
                return Err(ModelError::InconsistentLabels(name.clone()));
            }
        }
    }
    Ok(ev)
}

/// P(all labels) by summing the full joint over every variable.
pub fn joint_probability_enumeration(net: &BeliefNet, labels: &[VarLabel]) -> Result<f64, ModelError> {
    let ev = evidence(net, labels)?;
    let n = net.len();
    let mut total = 0.0;
    let mut vals = vec![0usize; n];
    // odometer over all assignments, least significant variable last
    loop {
        if ev.iter().all(|(&v, &o)| vals[v] == o) {
            let mut p = 1.0;
            for i in 0..n {
                let pv: Vec<usize> = net.var(i).parents.iter().map(|&q| vals[q]).collect();
                p *= net.cpt_entry(i, &pv, vals[i]);
                if p == 0.0 {
                    break;
                }
            }
            total += p;
        }
        let mut k = n;
        loop {
            if k == 0 {
                return Ok(total);
            }
            k -= 1;
            vals[k] += 1;
            if vals[k] < net.var(k).card() {
                break;
            }
            vals[k] = 0;
        }
    }
}

#[derive(Debug, Clone)]
struct Factor {
    vars: Vec<usize>,
    cards: Vec<usize>,
    values: Vec<f64>,
}

impl Factor {
    fn index(&self, assignment: &BTreeMap<usize, usize>) -> usize {
        let mut idx = 0;
        for (v, c) in self.vars.iter().zip(&self.cards) {
            idx = idx * c + assignment[v];
        }
        idx
    }

    fn multiply(&self, other: &Factor) -> Factor {
        let mut scope: BTreeMap<usize, usize> = BTreeMap::new();
        for (v, c) in self.vars.iter().zip(&self.cards).chain(other.vars.iter().zip(&other.cards)) {
            scope.insert(*v, *c);
        }
        let vars: Vec<usize> = scope.keys().copied().collect();
        let cards: Vec<usize> = scope.values().copied().collect();
        let size: usize = cards.iter().product();
        let mut values = Vec::with_capacity(size);
        let mut assignment: BTreeMap<usize, usize> = vars.iter().map(|&v| (v, 0)).collect();
        for _ in 0..size {
            values.push(self.values[self.index(&assignment)] * other.values[other.index(&assignment)]);
            for (v, c) in vars.iter().zip(&cards).rev() {
                let slot = assignment.get_mut(v).unwrap();
                *slot += 1;
                if *slot < *c {
                    break;
                }
                *slot = 0;
            }
        }
        Factor { vars, cards, values }
    }

    fn sum_out(&self, var: usize) -> Factor {
        let pos = self.vars.iter().position(|&v| v == var).expect("variable in scope");
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        vars.remove(pos);
        let card = cards.remove(pos);
        let inner: usize = self.cards[pos + 1..].iter().product();
        let outer: usize = self.cards[..pos].iter().product();
        let mut values = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..card {
                for i in 0..inner {
                    values[o * inner + i] += self.values[(o * card + k) * inner + i];
                }
            }
        }
        Factor { vars, cards, values }
    }
}

/// The CPT of variable `v` as a factor, with evidence variables fixed so
/// that they drop out of scope.
fn cpt_factor(net: &BeliefNet, v: usize, ev: &BTreeMap<usize, usize>) -> Factor {
    let var = net.var(v);
    let mut family: Vec<usize> = var.parents.clone();
    family.push(v);
    let free: Vec<usize> = {
        let mut f: Vec<usize> = family.iter().copied().filter(|x| !ev.contains_key(x)).collect();
        f.sort_unstable();
        f.dedup();
        f
    };
    let cards: Vec<usize> = free.iter().map(|&x| net.var(x).card()).collect();
    let size: usize = cards.iter().product();
    let mut values = Vec::with_capacity(size);
    let mut assignment: BTreeMap<usize, usize> = free.iter().map(|&x| (x, 0)).collect();
    for _ in 0..size {
        let val_of = |x: usize| ev.get(&x).copied().unwrap_or_else(|| assignment[&x]);
        let pv: Vec<usize> = var.parents.iter().map(|&p| val_of(p)).collect();
        values.push(net.cpt_entry(v, &pv, val_of(v)));
        for (x, c) in free.iter().zip(&cards).rev() {
            let slot = assignment.get_mut(x).unwrap();
            *slot += 1;
            if *slot < *c {
                break;
            }
            *slot = 0;
        }
    }
    Factor {
        vars: free,
        cards,
        values,
    }
}

/// P(all labels) by variable elimination over the ancestral set of the
/// evidence (other variables are barren and sum to one).
pub fn joint_probability(net: &BeliefNet, labels: &[VarLabel]) -> Result<f64, ModelError> {
    let ev = evidence(net, labels)?;
    if ev.is_empty() {
        return Ok(1.0);
    }
    let mut relevant = BTreeSet::new();
    let mut stack: Vec<usize> = ev.keys().copied().collect();
    while let Some(x) = stack.pop() {
        if relevant.insert(x) {
            stack.extend(net.var(x).parents.iter().copied());
        }
    }
    let mut factors: Vec<Factor> = relevant.iter().map(|&v| cpt_factor(net, v, &ev)).collect();
    let mut hidden: BTreeSet<usize> = relevant.iter().copied().filter(|v| !ev.contains_key(v)).collect();

    while !hidden.is_empty() {
        // min-degree: fewest distinct neighbours in the current factor graph
        let pick = *hidden
            .iter()
            .min_by_key(|&&h| {
                let mut nb = BTreeSet::new();
                for f in factors.iter().filter(|f| f.vars.contains(&h)) {
                    nb.extend(f.vars.iter().copied());
                }
                (nb.len(), h)
            })
            .unwrap();
        hidden.remove(&pick);
        let (touching, rest): (Vec<Factor>, Vec<Factor>) =
            factors.into_iter().partition(|f| f.vars.contains(&pick));
        factors = rest;
        if let Some(prod) = touching.into_iter().reduce(|a, b| a.multiply(&b)) {
            factors.push(prod.sum_out(pick));
        }
    }
    Ok(factors
        .into_iter()
        .map(|f| {
            debug_assert!(f.vars.is_empty());
            f.values[0]
        })
        .product())
}

/// P(outcome | context) = P(context ∧ outcome) / P(context).
pub fn conditional_outcome_probability(
    net: &BeliefNet,
    outcome: &VarLabel,
    context: &[VarLabel],
) -> Result<f64, ModelError> {
    let denom = joint_probability(net, context)?;
    if denom <= 0.0 {
        return Err(ModelError::ZeroProbabilityContext);
    }
    let mut both = context.to_vec();
    both.push(outcome.clone());
    match joint_probability(net, &both) {
        Err(ModelError::InconsistentLabels(_)) => Ok(0.0),
        other => Ok(other? / denom),
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::domain::Cpt;

    fn tf() -> Vec<String> {
        vec!["true".into(), "false".into()]
    }

    fn cpt(rows: &[(&[&str], [f64; 2])]) -> Cpt {
        let mut c = Cpt::default();
        for (k, r) in rows {
            c.rows.insert(k.iter().map(|s| s.to_string()).collect(), r.to_vec());
        }
        c
    }

    fn l(v: &str, o: &str) -> VarLabel {
        (v.to_string(), o.to_string())
    }

    /// Blizzard with two roads that it may block.
    pub(crate) fn ski_net() -> BeliefNet {
        let road = cpt(&[(&["true"], [0.1, 0.9]), (&["false"], [0.999, 0.001])]);
        BeliefNet::new()
            .with_variable("blizzard", &tf(), &[], &cpt(&[(&[], [0.1, 0.9])]))
            .unwrap()
            .with_variable("clear(B,S)", &tf(), &["blizzard".into()], &road)
            .unwrap()
            .with_variable("clear(C,P)", &tf(), &["blizzard".into()], &road)
            .unwrap()
    }

    #[test]
    fn first_road_open() {
        let p = joint_probability(&ski_net(), &[l("clear(B,S)", "true")]).unwrap();
        assert!((p - 0.9091).abs() < 1e-9);
    }

    #[test]
    fn second_road_only() {
        let labels = [l("clear(B,S)", "false"), l("clear(C,P)", "true")];
        let by_hand = 0.1 * 0.9 * 0.1 + 0.9 * 0.001 * 0.999;
        let p = joint_probability_enumeration(&ski_net(), &labels).unwrap();
        assert!((p - by_hand).abs() < 1e-12);
        assert!((p - 0.0098991).abs() < 1e-9);
        assert!((joint_probability(&ski_net(), &labels).unwrap() - p).abs() < 1e-12);
    }

    #[test]
    fn empty_context_is_certain() {
        assert_eq!(joint_probability(&ski_net(), &[]).unwrap(), 1.0);
        assert_eq!(joint_probability_enumeration(&ski_net(), &[]).unwrap(), 1.0);
    }

    #[test]
    fn conditioning_on_itself() {
        let n = ski_net();
        let x = l("blizzard", "true");
        assert!((conditional_outcome_probability(&n, &x, std::slice::from_ref(&x)).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(conditional_outcome_probability(&n, &l("blizzard", "false"), &[x]).unwrap(), 0.0);
    }

    #[test]
    fn zero_probability_context() {
        let n = BeliefNet::new()
            .with_variable("never", &tf(), &[], &cpt(&[(&[], [0.0, 1.0])]))
            .unwrap();
        let err = conditional_outcome_probability(&n, &l("never", "false"), &[l("never", "true")]).unwrap_err();
        assert_eq!(err, ModelError::ZeroProbabilityContext);
    }

    #[test]
    fn conflicting_labels() {
        let err = joint_probability(&ski_net(), &[l("blizzard", "true"), l("blizzard", "false")]).unwrap_err();
        assert_eq!(err, ModelError::InconsistentLabels("blizzard".into()));
    }

    #[test]
    fn unknown_names() {
        assert!(matches!(
            joint_probability(&ski_net(), &[l("fog", "true")]),
            Err(ModelError::UnknownVariable(_))
        ));
        assert!(matches!(
            joint_probability(&ski_net(), &[l("blizzard", "maybe")]),
            Err(ModelError::UnknownOutcome { .. })
        ));
    }

    /// A random net over `n` variables with up to three parents each and
    /// two or three outcomes.
    pub(crate) fn random_net() -> impl Strategy<Value = BeliefNet> {
        (1usize..=12)
            .prop_flat_map(|n| {
                let vars = proptest::collection::vec(
                    (2usize..=3, proptest::collection::vec(any::<prop::sample::Index>(), 0..=3)),
                    n,
                );
                (vars, proptest::collection::vec(0.01f64..1.0, 4096))
            })
            .prop_map(|(vars, weights)| {
                let mut net = BeliefNet::new();
                let mut w = weights.into_iter().cycle();
                for (i, (card, picks)) in vars.iter().enumerate() {
                    let mut parents: Vec<usize> = if i == 0 { Vec::new() } else { picks.iter().map(|p| p.index(i)).collect() };
                    parents.sort_unstable();
                    parents.dedup();
                    let outcomes: Vec<String> = (0..*card).map(|o| format!("o{o}")).collect();
                    let spaces: Vec<Vec<String>> = parents.iter().map(|&p| net.var(p).outcomes.clone()).collect();
                    let mut c = Cpt::default();
                    for key in crate::domain::cartesian_product(&spaces) {
                        let raw: Vec<f64> = (0..*card).map(|_| w.next().unwrap()).collect();
                        let s: f64 = raw.iter().sum();
                        c.rows.insert(key, raw.iter().map(|x| x / s).collect());
                    }
                    let names: Vec<String> = parents.iter().map(|&p| net.var(p).name.clone()).collect();
                    net = net.with_variable(&format!("v{i}"), &outcomes, &names, &c).unwrap();
                }
                net
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn elimination_matches_enumeration(net in random_net(), picks in proptest::collection::vec((any::<prop::sample::Index>(), any::<prop::sample::Index>()), 0..5)) {
            let labels: Vec<VarLabel> = picks
                .iter()
                .map(|(v, o)| {
                    let var = net.var(v.index(net.len()));
                    (var.name.clone(), var.outcomes[o.index(var.card())].clone())
                })
                .collect();
            let a = joint_probability_enumeration(&net, &labels);
            let b = joint_probability(&net, &labels);
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}"),
                (Err(a), Err(b)) => prop_assert_eq!(a, b),
                (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
            }
        }

        #[test]
        fn outcomes_of_a_variable_sum_to_one(net in random_net(), v in any::<prop::sample::Index>()) {
            let var = net.var(v.index(net.len()));
            let total: f64 = var
                .outcomes
                .iter()
                .map(|o| joint_probability(&net, &[(var.name.clone(), o.clone())]).unwrap())
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
