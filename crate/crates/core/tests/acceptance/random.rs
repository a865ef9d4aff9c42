//! Criteria over generated inputs: random domains, random networks, and
//! classical deterministic problems.

use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use epsafe::domain::{cartesian_product, ground, parse_domain, parse_problem, Cpt, GroundDomain};
use epsafe::planner::{solve, PlannerConfig, PlannerKind};
use epsafe::probmodel::{joint_probability, joint_probability_enumeration, BeliefNet, Model, ModelKind};
use epsafe::simulator::exact_success;

use super::{ensure, Verdict};

const PLANNERS: [PlannerKind; 2] = [PlannerKind::Linear, PlannerKind::Nonlinear];

/// A probability in thousandths and its complement, printed so that the
/// pair parses to a normalized distribution.
fn split(rng: &mut impl Rng) -> (String, String) {
    let a: u32 = rng.gen_range(50..=950);
    (format!("{}", a as f64 / 1000.0), format!("{}", (1000 - a) as f64 / 1000.0))
}

fn build(domain: &str, problem: &str) -> Result<GroundDomain, String> {
    let d = parse_domain(domain).map_err(|e| format!("{e}\n{domain}"))?;
    let p = parse_problem(problem).map_err(|e| format!("{e}\n{problem}"))?;
    ground(&d, &p).map_err(|e| e.to_string())
}

/// Independent root priors, each observed by its own operator whose outcome
/// probabilities equal the prior, plus conditional actions with fixed
/// distributions. No two uncertain steps share an ancestor.
fn independent_domain(rng: &mut impl Rng) -> (String, String) {
    let k = rng.gen_range(1..=3);
    let mut d = String::new();
    for i in 0..k {
        let (p, q) = split(rng);
        writeln!(d, "(clause (head x{i} (true false)) (cpt ((true) {p}) ((false) {q})))").unwrap();
        writeln!(
            d,
            "(operator look{i} (kind obs) (observes x{i}) (outcomes (true (prob {p}) (add x{i})) (false (prob {q}) (del x{i}))))"
        )
        .unwrap();
        writeln!(d, "(operator use{i} (pre x{i}) (kind det) (outcomes (ok (add g))))").unwrap();
        if rng.gen_bool(0.5) {
            writeln!(d, "(operator alt{i} (pre (not x{i})) (kind det) (outcomes (ok (add g))))").unwrap();
        }
    }
    for c in 0..rng.gen_range(0..=2) {
        let (p, q) = split(rng);
        writeln!(d, "(operator try{c} (kind cond) (outcomes (ok (prob {p}) (add g)) (fail (prob {q}))))").unwrap();
    }
    let unknown: Vec<String> = (0..k).map(|i| format!("x{i}")).collect();
    let problem = format!("(problem (unknown {}) (default-false g) (goal g))", unknown.join(" "));
    (d, problem)
}

pub fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut compared = 0;
    let mut branching = 0;
    let mut worst: f64 = 0.0;
    for n in 0..20 {
        let (dt, pt) = independent_domain(&mut rng);
        let g = build(&dt, &pt)?;
        let kind = PLANNERS[n % 2];
        let search_model = if n % 4 < 2 { ModelKind::Kbmc } else { ModelKind::Simple };
        let mut solved = None;
        for epsilon in [*[0.05, 0.2, 0.5].choose(&mut rng).unwrap(), 0.95] {
            let cfg = PlannerConfig {
                model: search_model,
                epsilon: Some(epsilon),
                node_budget: 2_000,
                ..Default::default()
            };
            if let Ok(out) = solve(kind, &g, &cfg) {
                solved = Some((out, epsilon));
                break;
            }
        }
        let (out, epsilon) = solved.ok_or_else(|| format!("domain {n} unsolved:\n{dt}"))?;
        let simple = Model::new(&g, ModelKind::Simple).and_then(|m| m.success_bound(&out.graph, epsilon));
        let kbmc = Model::new(&g, ModelKind::Kbmc).and_then(|m| m.success_bound(&out.graph, epsilon));
        let (s, k) = (simple.map_err(|e| e.to_string())?, kbmc.map_err(|e| e.to_string())?);
        let gap = (s.achieved_mass - k.achieved_mass).abs().max((s.potential_mass - k.potential_mass).abs());
        ensure(gap <= 1e-12, || format!("domain {n} ({kind}): simple {s:?} vs kbmc {k:?}\n{dt}"))?;
        worst = worst.max(gap);
        compared += 1;
        branching += usize::from(!out.plan.branch_points().is_empty());
    }
    Ok(format!("{compared} domains, {branching} branching plans, largest gap {worst:.1e}"))
}

/// Up to four boolean atoms (goal, one fluent, one or two priors) and up
/// to six operators drawn from observation, deterministic and conditional
/// templates.
fn small_domain(rng: &mut ChaCha8Rng) -> (String, String) {
    let two = rng.gen_bool(0.5);
    let mut d = String::new();
    let (p, q) = split(rng);
    writeln!(d, "(clause (head x0 (true false)) (cpt ((true) {p}) ((false) {q})))").unwrap();
    let mut priors = vec!["x0"];
    if two {
        priors.push("x1");
        let (a, b) = split(rng);
        let (c, e) = split(rng);
        writeln!(d, "(clause (head x1 (true false)) (body x0) (cpt ((true true) {a}) ((false true) {b}) ((true false) {c}) ((false false) {e})))").unwrap();
    }
    let conds: Vec<String> = ["p0", "x0", "(not x0)", "(not p0)"]
        .iter()
        .map(|s| s.to_string())
        .chain(two.then(|| ["x1".to_string(), "(not x1)".to_string()]).into_iter().flatten())
        .collect();
    let pre = |rng: &mut ChaCha8Rng, max: usize| -> String {
        let n = rng.gen_range(0..=max);
        let mut picked: Vec<&String> = conds.choose_multiple(rng, n).collect();
        picked.sort();
        // one value per atom
        picked.dedup_by(|a, b| a.trim_start_matches("(not ").trim_end_matches(')') == b.trim_start_matches("(not ").trim_end_matches(')'));
        if picked.is_empty() {
            String::new()
        } else {
            format!("(pre {})", picked.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" "))
        }
    };
    let effects = |rng: &mut ChaCha8Rng| -> String {
        let mut s = String::new();
        match rng.gen_range(0..4) {
            0 => s.push_str(" (add g)"),
            1 => s.push_str(" (add p0)"),
            2 => s.push_str(" (add g p0)"),
            _ => s.push_str(" (del p0)"),
        }
        s
    };
    let mut ops = 0;
    for x in &priors {
        let (a, b) = split(rng);
        let guard = if rng.gen_bool(0.3) { "(pre p0) " } else { "" };
        writeln!(d, "(operator look-{x} {guard}(kind obs) (observes {x}) (outcomes (true (prob {a}) (add {x})) (false (prob {b}) (del {x}))))").unwrap();
        ops += 1;
    }
    writeln!(d, "(operator finish {} (kind det) (outcomes (ok (add g))))", pre(rng, 2)).unwrap();
    ops += 1;
    let extra = rng.gen_range(1..=6 - ops);
    for i in 0..extra {
        match rng.gen_range(0..3) {
            0 => {
                writeln!(d, "(operator act{i} {} (kind det) (outcomes (ok{})))", pre(rng, 2), effects(rng)).unwrap();
            }
            1 => {
                let (a, b) = split(rng);
                writeln!(d, "(operator gamble{i} {} (kind cond) (outcomes (win (prob {a}){}) (lose (prob {b}){})))", pre(rng, 1), effects(rng), effects(rng)).unwrap();
            }
            _ => {
                let (a, b) = split(rng);
                let (c, e) = split(rng);
                writeln!(
                    d,
                    "(operator nudge{i} {} (kind cond) (influences x0) (outcomes (win{}) (lose{})) (cpt ((win true) {a}) ((lose true) {b}) ((win false) {c}) ((lose false) {e})))",
                    pre(rng, 1),
                    effects(rng),
                    effects(rng)
                )
                .unwrap();
            }
        }
    }
    let init = if rng.gen_bool(0.5) { "(init p0) " } else { "" };
    let problem = format!("(problem {init}(unknown {}) (default-false g p0) (goal g))", priors.join(" "));
    (d, problem)
}


pub fn criterion_6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut domains = 0;
    let mut plans = 0;
    let mut branching = 0;
    let mut attempts = 0;
    while domains < 50 {
        attempts += 1;
        ensure(attempts <= 2_000, || format!("only {domains} solvable domains in {attempts} attempts"))?;
        let (dt, pt) = small_domain(&mut rng);
        let g = build(&dt, &pt)?;
        let epsilon = *[0.0, 0.1, 0.3, 0.5].choose(&mut rng).unwrap();
        let model = if rng.gen_bool(0.75) { ModelKind::Kbmc } else { ModelKind::Simple };
        let mut solved_any = false;
        for kind in PLANNERS {
            let cfg = PlannerConfig {
                model,
                epsilon: Some(epsilon),
                node_budget: 500,
                ..Default::default()
            };
            let Ok(out) = solve(kind, &g, &cfg) else { continue };
            solved_any = true;
            plans += 1;
            let ex = exact_success(&out.plan).map_err(|e| format!("{kind}: {e}\n{dt}{pt}"))?;
            ensure(ex.violations.is_empty(), || {
                format!("{kind} {model} eps {epsilon}: {:?}\n{dt}{pt}\n{}", ex.violations, out.plan.to_json())
            })?;
            // the simple model can misjudge correlated priors; the network model must not
            if model == ModelKind::Kbmc {
                ensure((ex.probability - out.plan.achieved_mass).abs() < 1e-9, || {
                    format!("{kind} eps {epsilon}: exact {} vs analytic {}\n{dt}{pt}", ex.probability, out.plan.achieved_mass)
                })?;
            }
            branching += usize::from(!out.plan.branch_points().is_empty());
        }
        if solved_any {
            domains += 1;
        }
    }
    Ok(format!("{domains} domains, {plans} plans ({branching} branching), {attempts} generated"))
}

const BLOCKS: &str = r#"
(operator stack (params (?b block) (?x block) (?y block))
  (pre (on ?b ?x) (clear ?b) (clear ?y))
  (kind det)
  (outcomes (ok (add (on ?b ?y) (clear ?x)) (del (on ?b ?x) (clear ?y)))))
(operator unstack (params (?b block) (?x block))
  (pre (on ?b ?x) (clear ?b))
  (kind det)
  (outcomes (ok (add (on ?b T) (clear ?x)) (del (on ?b ?x)))))
(operator lift (params (?b block) (?y block))
  (pre (on ?b T) (clear ?b) (clear ?y))
  (kind det)
  (outcomes (ok (add (on ?b ?y)) (del (on ?b T) (clear ?y)))))
"#;

const ERRANDS: &str = r#"
(operator drive (params (?x site) (?y site))
  (pre (at ?x))
  (kind det)
  (outcomes (ok (add (at ?y)) (del (at ?x)))))
(operator buy (params (?x site))
  (pre (at ?x) (sells ?x))
  (kind det)
  (outcomes (ok (add (has ?x)))))
"#;

fn classical_problems() -> Vec<(&'static str, &'static str, String)> {
    let blocks = "(objects (block A B C) (table T)) (default-false on clear)";
    vec![
        (
            "sussman",
            BLOCKS,
            format!("(problem {blocks} (init (on C A) (on A T) (on B T) (clear C) (clear B)) (goal (on A B) (on B C)))"),
        ),
        (
            "tower",
            BLOCKS,
            format!("(problem {blocks} (init (on A T) (on B T) (on C T) (clear A) (clear B) (clear C)) (goal (on A B) (on B C)))"),
        ),
        (
            "errands",
            ERRANDS,
            "(problem (objects (site H M S)) (init (at H) (sells M) (sells S)) (default-false at sells has) (goal (has M) (has S) (at H)))".to_string(),
        ),
    ]
}

pub fn criterion_7() -> Verdict {
    let mut notes = Vec::new();
    for (name, domain, problem) in classical_problems() {
        let g = build(domain, &problem)?;
        for kind in PLANNERS {
            let cfg = PlannerConfig {
                model: ModelKind::Kbmc,
                epsilon: Some(0.0),
                ..Default::default()
            };
            let out = solve(kind, &g, &cfg).map_err(|e| format!("{name} {kind}: {e}"))?;
            ensure(out.bound.achieved_mass == 1.0, || format!("{name} {kind}: mass {}", out.bound.achieved_mass))?;
            let ex = exact_success(&out.plan).map_err(|e| e.to_string())?;
            ensure(ex.probability == 1.0 && ex.violations.is_empty(), || format!("{name} {kind}: simulated {ex:?}"))?;
            notes.push(format!("{name}/{kind} {} steps", out.plan.steps.len()));
        }
    }
    Ok(notes.join(", "))
}

fn random_net(rng: &mut impl Rng) -> BeliefNet {
    let n = rng.gen_range(1..=12);
    let mut net = BeliefNet::new();
    for i in 0..n {
        let card = rng.gen_range(2..=3);
        let mut parents: Vec<usize> = if i == 0 { Vec::new() } else { (0..rng.gen_range(0..=3)).map(|_| rng.gen_range(0..i)).collect() };
        parents.sort_unstable();
        parents.dedup();
        let outcomes: Vec<String> = (0..card).map(|o| format!("o{o}")).collect();
        let spaces: Vec<Vec<String>> = parents.iter().map(|&p| net.var(p).outcomes.clone()).collect();
        let mut cpt = Cpt::default();
        for key in cartesian_product(&spaces) {
            let raw: Vec<f64> = (0..card).map(|_| rng.gen_range(0.01..1.0)).collect();
            let s: f64 = raw.iter().sum();
            cpt.rows.insert(key, raw.iter().map(|x| x / s).collect());
        }
        let names: Vec<String> = parents.iter().map(|&p| net.var(p).name.clone()).collect();
        net = net.with_variable(&format!("v{i}"), &outcomes, &names, &cpt).unwrap();
    }
    net
}

pub fn criterion_8() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let mut queries = 0;
    for n in 0..100 {
        let net = random_net(&mut rng);
        for _ in 0..5 {
            let labels: Vec<(String, String)> = (0..rng.gen_range(0..=4))
                .map(|_| {
                    let v = net.var(rng.gen_range(0..net.len()));
                    (v.name.clone(), v.outcomes[rng.gen_range(0..v.card())].clone())
                })
                .collect();
            let a = joint_probability_enumeration(&net, &labels);
            let b = joint_probability(&net, &labels);
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    ensure((a - b).abs() <= 1e-12, || format!("net {n}, {labels:?}: enumeration {a}, elimination {b}"))?;
                    worst = worst.max((a - b).abs());
                }
                (Err(x), Err(y)) => ensure(x == y, || format!("net {n}: errors {x} vs {y}"))?,
                (a, b) => return Err(format!("net {n}, {labels:?}: {a:?} vs {b:?}")),
            }
            queries += 1;
        }
    }
    Ok(format!("100 nets, {queries} queries, largest gap {worst:.1e}"))
}
