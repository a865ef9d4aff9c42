use std::collections::{BTreeMap, BTreeSet};

use super::{
    Atom, Cpt, Domain, KbmcClause, Literal, OpKind, OperatorSchema, Outcome, OutcomeFamily, Param,
    Problem, NORMALIZATION_TOLERANCE,
};
use crate::error::ParseError;
use crate::sexpr::{read_all, Pos, Sexpr};

/// Parses every `operator` and `clause` form in `text`. Other top-level
/// forms (such as `problem`) are skipped so a single file may hold both.
pub fn parse_domain(text: &str) -> Result<Domain, ParseError> {
    let forms = read_all(text)?;
    let mut domain = Domain::default();
    let mut names = BTreeSet::new();
    for form in &forms {
        match form.head() {
            Some("operator") => {
                let op = parse_operator(form)?;
                if !names.insert(op.name.clone()) {
                    return Err(ParseError::DuplicateOperator {
                        pos: form.pos(),
                        name: op.name,
                    });
                }
                domain.operators.push(op);
            }
            Some("clause") => domain.clauses.push(parse_clause(form)?),
            Some("problem") => {}
            _ => return Err(ParseError::syntax(form.pos(), "expected operator, clause or problem form")),
        }
    }
    check_clause_rows(&domain.clauses, &forms)?;
    check_clause_cycles(&domain.clauses)?;
    Ok(domain)
}

/// Parses the single `problem` form in `text`.
pub fn parse_problem(text: &str) -> Result<Problem, ParseError> {
    let forms = read_all(text)?;
    let mut found = None;
    for form in &forms {
        if form.head() == Some("problem") {
            if found.is_some() {
                return Err(ParseError::syntax(form.pos(), "more than one problem form"));
            }
            found = Some(parse_problem_form(form)?);
        }
    }
    found.ok_or_else(|| ParseError::syntax(Pos { line: 1, col: 1 }, "no problem form found"))
}

fn list<'a>(e: &'a Sexpr, what: &str) -> Result<&'a [Sexpr], ParseError> {
    e.as_list()
        .ok_or_else(|| ParseError::syntax(e.pos(), format!("expected list for {what}")))
}

fn symbol<'a>(e: &'a Sexpr, what: &str) -> Result<&'a str, ParseError> {
    e.as_atom()
        .ok_or_else(|| ParseError::syntax(e.pos(), format!("expected symbol for {what}")))
}

fn number(e: &Sexpr) -> Result<f64, ParseError> {
    let s = symbol(e, "number")?;
    let v: f64 = s
        .parse()
        .map_err(|_| ParseError::syntax(e.pos(), format!("invalid number `{s}`")))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(ParseError::syntax(e.pos(), format!("probability {v} outside [0,1]")));
    }
    Ok(v)
}

/// `sym` or `(name arg...)`.
fn atom(e: &Sexpr) -> Result<Atom, ParseError> {
    match e {
        Sexpr::Atom(s, _) => Ok(Atom::nullary(s.clone())),
        Sexpr::List(items, pos) => {
            let (head, rest) = items
                .split_first()
                .ok_or_else(|| ParseError::syntax(*pos, "empty proposition"))?;
            let name = symbol(head, "predicate name")?;
            let args = rest
                .iter()
                .map(|a| symbol(a, "argument").map(str::to_string))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Atom::new(name, args))
        }
    }
}

fn literal(e: &Sexpr) -> Result<Literal, ParseError> {
    if let (Some(items), Some(h @ ("not" | "unknown"))) = (e.as_list(), e.head()) {
        if items.len() != 2 {
            return Err(ParseError::syntax(e.pos(), format!("`{h}` takes one proposition")));
        }
        let a = atom(&items[1])?;
        return Ok(if h == "not" { Literal::neg(a) } else { Literal::unknown(a) });
    }
    Ok(Literal::pos(atom(e)?))
}

/// Splits `(key ...)` sections of a form into a map keyed by section name.
fn sections<'a>(items: &'a [Sexpr], allowed: &[&str]) -> Result<BTreeMap<&'a str, &'a Sexpr>, ParseError> {
    let mut out = BTreeMap::new();
    for item in items {
        let key = item
            .head()
            .ok_or_else(|| ParseError::syntax(item.pos(), "expected (section ...)"))?;
        if !allowed.contains(&key) {
            return Err(ParseError::syntax(item.pos(), format!("unexpected section `{key}`")));
        }
        if out.insert(key, item).is_some() {
            return Err(ParseError::syntax(item.pos(), format!("duplicate section `{key}`")));
        }
    }
    Ok(out)
}

fn rest(e: &Sexpr) -> &[Sexpr] {
    &e.as_list().expect("section is a list")[1..]
}

fn check_sum(probs: &[f64], pos: Pos, what: impl Into<String>) -> Result<(), ParseError> {
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(ParseError::NotNormalized {
            pos,
            what: what.into(),
            sum,
        });
    }
    Ok(())
}

fn parse_operator(form: &Sexpr) -> Result<OperatorSchema, ParseError> {
    let items = list(form, "operator")?;
    if items.len() < 2 {
        return Err(ParseError::syntax(form.pos(), "operator needs a name"));
    }
    let name = symbol(&items[1], "operator name")?.to_string();
    let secs = sections(
        &items[2..],
        &["params", "pre", "kind", "outcomes", "observes", "influences", "cpt"],
    )?;

    let mut params = Vec::new();
    if let Some(s) = secs.get("params") {
        for p in rest(s) {
            let pl = list(p, "parameter")?;
            let var = pl
                .first()
                .map(|v| symbol(v, "parameter"))
                .transpose()?
                .filter(|v| v.starts_with('?'))
                .ok_or_else(|| ParseError::syntax(p.pos(), "parameter must be (?var TYPE)"))?;
            let ty = match pl.len() {
                1 => "object".to_string(),
                2 => symbol(&pl[1], "type")?.to_string(),
                _ => return Err(ParseError::syntax(p.pos(), "parameter must be (?var TYPE)")),
            };
            params.push(Param {
                var: var.to_string(),
                ty,
            });
        }
    }

    let pre = match secs.get("pre") {
        Some(s) => rest(s).iter().map(literal).collect::<Result<_, _>>()?,
        None => Vec::new(),
    };

    let kind_sec = secs
        .get("kind")
        .ok_or_else(|| ParseError::syntax(form.pos(), format!("operator `{name}` lacks (kind ...)")))?;
    let kind = match rest(kind_sec) {
        [k] => match symbol(k, "kind")? {
            "det" => OpKind::Deterministic,
            "cond" => OpKind::Conditional,
            "obs" => OpKind::Observation,
            other => return Err(ParseError::syntax(k.pos(), format!("unknown kind `{other}`"))),
        },
        _ => return Err(ParseError::syntax(kind_sec.pos(), "kind takes one of det|cond|obs")),
    };

    let out_sec = secs
        .get("outcomes")
        .ok_or_else(|| ParseError::syntax(form.pos(), format!("operator `{name}` lacks (outcomes ...)")))?;
    let mut outcomes = Vec::new();
    let mut probs = Vec::new();
    for o in rest(out_sec) {
        let ol = list(o, "outcome")?;
        let oname = ol
            .first()
            .ok_or_else(|| ParseError::syntax(o.pos(), "empty outcome"))
            .and_then(|n| symbol(n, "outcome name"))?
            .to_string();
        if outcomes.iter().any(|x: &Outcome| x.name == oname) {
            return Err(ParseError::syntax(o.pos(), format!("duplicate outcome `{oname}`")));
        }
        let osecs = sections(&ol[1..], &["prob", "add", "del"])?;
        if let Some(p) = osecs.get("prob") {
            match rest(p) {
                [v] => probs.push(number(v)?),
                _ => return Err(ParseError::syntax(p.pos(), "prob takes one number")),
            }
        }
        let mut add = Vec::new();
        let mut del = Vec::new();
        if let Some(a) = osecs.get("add") {
            for l in rest(a) {
                let lit = literal(l)?;
                match lit.value() {
                    Some(true) => add.push(lit.atom),
                    Some(false) => del.push(lit.atom),
                    None => return Err(ParseError::syntax(l.pos(), "effects cannot add ignorance")),
                }
            }
        }
        if let Some(d) = osecs.get("del") {
            for l in rest(d) {
                del.push(atom(l)?);
            }
        }
        outcomes.push(Outcome { name: oname, add, del });
    }
    if outcomes.is_empty() {
        return Err(ParseError::syntax(out_sec.pos(), "operator needs at least one outcome"));
    }
    if kind == OpKind::Deterministic && outcomes.len() != 1 {
        return Err(ParseError::syntax(out_sec.pos(), "deterministic operators have exactly one outcome"));
    }
    let simple_distribution = if probs.is_empty() {
        None
    } else if probs.len() != outcomes.len() {
        return Err(ParseError::syntax(out_sec.pos(), "either every outcome or none carries (prob ...)"));
    } else {
        check_sum(&probs, out_sec.pos(), format!("operator `{name}`"))?;
        Some(probs)
    };

    let observes = match secs.get("observes") {
        Some(s) => match rest(s) {
            [v] => Some(atom(v)?),
            _ => return Err(ParseError::syntax(s.pos(), "observes takes one variable")),
        },
        None => None,
    };
    match (kind, &observes) {
        (OpKind::Observation, None) => {
            return Err(ParseError::syntax(form.pos(), format!("observation `{name}` lacks (observes ...)")))
        }
        (OpKind::Deterministic | OpKind::Conditional, Some(_)) => {
            return Err(ParseError::syntax(form.pos(), "only observation operators may declare observes"))
        }
        _ => {}
    }

    let influences: Vec<Atom> = match secs.get("influences") {
        Some(s) => rest(s).iter().map(atom).collect::<Result<_, _>>()?,
        None => Vec::new(),
    };
    if !influences.is_empty() && kind != OpKind::Conditional {
        return Err(ParseError::syntax(form.pos(), "only conditional operators declare influences"));
    }
    let family_names: Vec<String> = outcomes.iter().map(|o| o.name.clone()).collect();
    let influence_cpt = match secs.get("cpt") {
        Some(s) => Some(parse_cpt(s, &family_names, influences.len(), &format!("operator `{name}`"))?),
        None => None,
    };
    if !influences.is_empty() && influence_cpt.is_none() {
        return Err(ParseError::syntax(form.pos(), "influenced operators need a (cpt ...)"));
    }

    Ok(OperatorSchema {
        effects: OutcomeFamily {
            id: name.clone(),
            outcomes,
        },
        name,
        params,
        pre,
        kind,
        simple_distribution,
        observes,
        influences,
        influence_cpt,
    })
}

/// `(cpt ((OUT PARENTVAL...) NUM)...)`; every row present must be normalized.
fn parse_cpt(sec: &Sexpr, outcomes: &[String], arity: usize, what: &str) -> Result<Cpt, ParseError> {
    let mut rows: BTreeMap<Vec<String>, Vec<Option<f64>>> = BTreeMap::new();
    for entry in rest(sec) {
        let el = list(entry, "cpt entry")?;
        let [key, val] = el else {
            return Err(ParseError::syntax(entry.pos(), "cpt entry must be ((OUT PARENT...) NUM)"));
        };
        let kl = list(key, "cpt key")?;
        let syms = kl
            .iter()
            .map(|k| symbol(k, "outcome").map(str::to_string))
            .collect::<Result<Vec<_>, _>>()?;
        let Some((out, parents)) = syms.split_first() else {
            return Err(ParseError::syntax(key.pos(), "empty cpt key"));
        };
        if parents.len() != arity {
            return Err(ParseError::syntax(
                key.pos(),
                format!("cpt key has {} parent values, expected {arity}", parents.len()),
            ));
        }
        let idx = outcomes
            .iter()
            .position(|o| o == out)
            .ok_or_else(|| ParseError::syntax(key.pos(), format!("unknown outcome `{out}`")))?;
        let row = rows
            .entry(parents.to_vec())
            .or_insert_with(|| vec![None; outcomes.len()]);
        if row[idx].replace(number(val)?).is_some() {
            return Err(ParseError::syntax(entry.pos(), "duplicate cpt entry"));
        }
    }
    let mut cpt = Cpt::default();
    for (key, row) in rows {
        let probs: Vec<f64> = row.iter().map(|p| p.unwrap_or(0.0)).collect();
        check_sum(&probs, sec.pos(), format!("{what} given {key:?}"))?;
        cpt.rows.insert(key, probs);
    }
    Ok(cpt)
}

fn parse_clause(form: &Sexpr) -> Result<KbmcClause, ParseError> {
    let items = list(form, "clause")?;
    let secs = sections(&items[1..], &["head", "body", "cpt"])?;
    let head_sec = secs
        .get("head")
        .ok_or_else(|| ParseError::syntax(form.pos(), "clause lacks (head ...)"))?;
    let (head, outcomes) = match rest(head_sec) {
        [var, outs] => {
            let outs = list(outs, "outcome space")?
                .iter()
                .map(|o| symbol(o, "outcome").map(str::to_string))
                .collect::<Result<Vec<_>, _>>()?;
            (atom(var)?, outs)
        }
        _ => return Err(ParseError::syntax(head_sec.pos(), "head must be (head VAR (OUT...))")),
    };
    let distinct: BTreeSet<_> = outcomes.iter().collect();
    if outcomes.is_empty() || distinct.len() != outcomes.len() {
        return Err(ParseError::syntax(head_sec.pos(), "outcome space must be nonempty and distinct"));
    }
    let body: Vec<Atom> = match secs.get("body") {
        Some(s) => rest(s).iter().map(atom).collect::<Result<_, _>>()?,
        None => Vec::new(),
    };
    let head_vars: BTreeSet<&String> = head.args.iter().filter(|a| a.starts_with('?')).collect();
    for b in &body {
        if let Some(v) = b.args.iter().find(|a| a.starts_with('?') && !head_vars.contains(a)) {
            return Err(ParseError::syntax(form.pos(), format!("body variable {v} not bound by head")));
        }
    }
    let cpt_sec = secs
        .get("cpt")
        .ok_or_else(|| ParseError::syntax(form.pos(), "clause lacks (cpt ...)"))?;
    let cpt = parse_cpt(cpt_sec, &outcomes, body.len(), &format!("clause `{head}`"))?;
    if body.is_empty() && cpt.rows.is_empty() {
        return Err(ParseError::syntax(cpt_sec.pos(), "empty-body clause needs an unconditional distribution"));
    }
    Ok(KbmcClause {
        head,
        outcomes,
        body,
        cpt,
    })
}

/// Index of the clause whose head unifies with `a`.
pub(crate) fn matching_clause(clauses: &[KbmcClause], a: &Atom) -> Vec<(usize, BTreeMap<String, String>)> {
    clauses
        .iter()
        .enumerate()
        .filter_map(|(i, c)| unify(&c.head, a).map(|b| (i, b)))
        .collect()
}

/// One-way match of a (possibly lifted) pattern against an atom whose
/// variables are treated as opaque constants.
pub(crate) fn unify(pattern: &Atom, target: &Atom) -> Option<BTreeMap<String, String>> {
    if pattern.name != target.name || pattern.args.len() != target.args.len() {
        return None;
    }
    let mut binding = BTreeMap::new();
    for (p, t) in pattern.args.iter().zip(&target.args) {
        if p.starts_with('?') {
            match binding.get(p) {
                Some(prev) if prev != t => return None,
                _ => {
                    binding.insert(p.clone(), t.clone());
                }
            }
        } else if p != t {
            return None;
        }
    }
    Some(binding)
}

/// Every body assignment must have a row when the body variables'
/// outcome spaces are known from other clauses in the set.
fn check_clause_rows(clauses: &[KbmcClause], forms: &[Sexpr]) -> Result<(), ParseError> {
    let clause_pos: Vec<Pos> = forms
        .iter()
        .filter(|f| f.head() == Some("clause"))
        .map(Sexpr::pos)
        .collect();
    for (ci, c) in clauses.iter().enumerate() {
        let mut spaces = Vec::new();
        for b in &c.body {
            match matching_clause(clauses, b).first() {
                Some((j, _)) => spaces.push(clauses[*j].outcomes.clone()),
                None => break,
            }
        }
        if spaces.len() != c.body.len() {
            continue;
        }
        for assignment in cartesian(&spaces) {
            if !c.cpt.rows.contains_key(&assignment) {
                let what = format!("clause `{}` given {:?}", c.head, assignment);
                return Err(ParseError::NotNormalized {
                    pos: clause_pos[ci],
                    what,
                    sum: 0.0,
                });
            }
        }
    }
    Ok(())
}

pub fn cartesian(spaces: &[Vec<String>]) -> Vec<Vec<String>> {
    spaces.iter().fold(vec![Vec::new()], |acc, space| {
        acc.iter()
            .flat_map(|prefix| {
                space.iter().map(move |v| {
                    let mut next = prefix.clone();
                    next.push(v.clone());
                    next
                })
            })
            .collect()
    })
}

/// Cycle check on the predicate-level dependency graph of the clause set.
fn check_clause_cycles(clauses: &[KbmcClause]) -> Result<(), ParseError> {
    let mut edges: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for c in clauses {
        let e = edges.entry(c.head.name.as_str()).or_default();
        for b in &c.body {
            e.insert(b.name.as_str());
        }
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state: BTreeMap<&str, u8> = BTreeMap::new();
    fn visit<'a>(
        n: &'a str,
        edges: &BTreeMap<&'a str, BTreeSet<&'a str>>,
        state: &mut BTreeMap<&'a str, u8>,
    ) -> Result<(), ParseError> {
        match state.get(n) {
            Some(1) => return Err(ParseError::CyclicClauses(n.to_string())),
            Some(2) => return Ok(()),
            _ => {}
        }
        state.insert(n, 1);
        if let Some(next) = edges.get(n) {
            for m in next {
                visit(m, edges, state)?;
            }
        }
        state.insert(n, 2);
        Ok(())
    }
    for n in edges.keys() {
        visit(n, &edges, &mut state)?;
    }
    Ok(())
}

fn parse_problem_form(form: &Sexpr) -> Result<Problem, ParseError> {
    let items = list(form, "problem")?;
    let secs = sections(
        &items[1..],
        &["objects", "init", "unknown", "default-false", "goal", "epsilon"],
    )?;
    let mut p = Problem::default();
    if let Some(s) = secs.get("objects") {
        for group in rest(s) {
            let gl = list(group, "object group")?;
            let Some((ty, consts)) = gl.split_first() else {
                return Err(ParseError::syntax(group.pos(), "object group must be (TYPE CONST...)"));
            };
            let ty = symbol(ty, "type")?.to_string();
            for c in consts {
                p.objects
                    .entry(ty.clone())
                    .or_default()
                    .push(symbol(c, "constant")?.to_string());
            }
        }
    }
    if let Some(s) = secs.get("init") {
        for l in rest(s) {
            let lit = literal(l)?;
            match lit.value() {
                Some(true) => p.known_true.push(lit.atom),
                Some(false) => p.known_false.push(lit.atom),
                None => p.unknown.push(lit.atom),
            }
        }
    }
    if let Some(s) = secs.get("unknown") {
        for a in rest(s) {
            p.unknown.push(atom(a)?);
        }
    }
    if let Some(s) = secs.get("default-false") {
        for a in rest(s) {
            p.default_false.push(symbol(a, "predicate")?.to_string());
        }
    }
    if let Some(s) = secs.get("goal") {
        p.goals = rest(s).iter().map(literal).collect::<Result<_, _>>()?;
    }
    p.epsilon = match secs.get("epsilon") {
        Some(s) => match rest(s) {
            [v] => {
                let e = number(v)?;
                if e >= 1.0 {
                    return Err(ParseError::syntax(v.pos(), "epsilon must lie in [0,1)"));
                }
                e
            }
            _ => return Err(ParseError::syntax(s.pos(), "epsilon takes one number")),
        },
        None => 0.0,
    };
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG3: &str = r#"
        (clause (head blizzard (true false)) (cpt ((true) 0.1) ((false) 0.9)))
        (clause (head (clear ?x ?y) (true false)) (body blizzard)
          (cpt ((true true) 0.1) ((false true) 0.9) ((true false) 0.999) ((false false) 0.001)))
    "#;

    #[test]
    fn blizzard_prior_clause() {
        let d = parse_domain(FIG3).unwrap();
        assert_eq!(d.clauses.len(), 2);
        let b = &d.clauses[0];
        assert_eq!(b.head, Atom::nullary("blizzard"));
        assert!(b.body.is_empty());
        assert_eq!(b.outcomes, vec!["true", "false"]);
        assert_eq!(b.cpt.row(&[]), Some(&[0.1, 0.9][..]));
        let c = &d.clauses[1];
        assert_eq!(c.cpt.row(&["false".to_string()]), Some(&[0.999, 0.001][..]));
    }

    #[test]
    fn empty_operator_section() {
        let d = parse_domain("; nothing here\n").unwrap();
        assert!(d.operators.is_empty());
        assert!(d.clauses.is_empty());
    }

    #[test]
    fn unnormalized_distribution() {
        let text = "(operator flip (kind cond) (outcomes (o1 (prob 0.6)) (o2 (prob 0.6))))";
        let err = parse_domain(text).unwrap_err();
        match err {
            ParseError::NotNormalized { sum, .. } => assert!((sum - 1.2).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_operator() {
        let text = "(operator a (kind det) (outcomes (ok)))\n(operator a (kind det) (outcomes (ok)))";
        assert!(matches!(
            parse_domain(text),
            Err(ParseError::DuplicateOperator { pos: Pos { line: 2, col: 1 }, .. })
        ));
    }

    #[test]
    fn cyclic_clauses() {
        let text = "(clause (head a (t f)) (body b) (cpt ((t t) 1) ((f f) 1)))\n\
                    (clause (head b (t f)) (body a) (cpt ((t t) 1) ((f f) 1)))";
        assert!(matches!(parse_domain(text), Err(ParseError::CyclicClauses(_))));
    }

    #[test]
    fn missing_cpt_row_is_rejected() {
        let text = "(clause (head a (t f)) (cpt ((t) 0.5) ((f) 0.5)))\n\
                    (clause (head b (t f)) (body a) (cpt ((t t) 1)))";
        assert!(matches!(parse_domain(text), Err(ParseError::NotNormalized { .. })));
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_domain("(operator go\n  (kind teleport) (outcomes (ok)))").unwrap_err();
        assert_eq!(err.pos(), Some(Pos { line: 2, col: 9 }));
    }

    #[test]
    fn problem_sections() {
        let p = parse_problem(
            "(problem (objects (place A B) (resort S)) (init (at A) (not (at B)) (unknown (clear B S)))\
             (default-false clear) (goal (skiing)) (epsilon 0.1))",
        )
        .unwrap();
        assert_eq!(p.objects["place"], vec!["A", "B"]);
        assert_eq!(p.known_true, vec![Atom::new("at", ["A"])]);
        assert_eq!(p.known_false, vec![Atom::new("at", ["B"])]);
        assert_eq!(p.unknown, vec![Atom::new("clear", ["B", "S"])]);
        assert_eq!(p.epsilon, 0.1);
    }

    #[test]
    fn epsilon_must_be_below_one() {
        assert!(parse_problem("(problem (epsilon 1))").is_err());
    }
}
