use std::fmt::Write;

use super::{Atom, Cpt, Domain, KbmcClause, Literal, OpKind, OperatorSchema, Problem, Sign};

fn atom(a: &Atom) -> String {
    if a.args.is_empty() {
        a.name.clone()
    } else {
        format!("({} {})", a.name, a.args.join(" "))
    }
}

/// Renders a proposition in list form even when nullary, as required
/// inside `(not ...)` and `(unknown ...)`.
fn prop(a: &Atom) -> String {
    if a.args.is_empty() {
        format!("({})", a.name)
    } else {
        atom(a)
    }
}

fn literal(l: &Literal) -> String {
    match l.sign {
        Sign::Pos => prop(&l.atom),
        Sign::Neg => format!("(not {})", prop(&l.atom)),
        Sign::Unknown => format!("(unknown {})", prop(&l.atom)),
    }
}

fn cpt(c: &Cpt, outcomes: &[String]) -> String {
    let mut s = String::from("(cpt");
    for (key, row) in &c.rows {
        for (o, p) in outcomes.iter().zip(row) {
            let mut k = vec![o.clone()];
            k.extend(key.iter().cloned());
            write!(s, " (({}) {})", k.join(" "), p).unwrap();
        }
    }
    s.push(')');
    s
}

fn operator(op: &OperatorSchema) -> String {
    let mut s = format!("(operator {}", op.name);
    if !op.params.is_empty() {
        let ps: Vec<String> = op.params.iter().map(|p| format!("({} {})", p.var, p.ty)).collect();
        write!(s, "\n  (params {})", ps.join(" ")).unwrap();
    }
    if !op.pre.is_empty() {
        let ls: Vec<String> = op.pre.iter().map(literal).collect();
        write!(s, "\n  (pre {})", ls.join(" ")).unwrap();
    }
    let kind = match op.kind {
        OpKind::Deterministic => "det",
        OpKind::Conditional => "cond",
        OpKind::Observation => "obs",
    };
    write!(s, "\n  (kind {kind})\n  (outcomes").unwrap();
    for (i, o) in op.effects.outcomes.iter().enumerate() {
        write!(s, "\n    ({}", o.name).unwrap();
        if let Some(d) = &op.simple_distribution {
            write!(s, " (prob {})", d[i]).unwrap();
        }
        if !o.add.is_empty() {
            let xs: Vec<String> = o.add.iter().map(prop).collect();
            write!(s, " (add {})", xs.join(" ")).unwrap();
        }
        if !o.del.is_empty() {
            let xs: Vec<String> = o.del.iter().map(prop).collect();
            write!(s, " (del {})", xs.join(" ")).unwrap();
        }
        s.push(')');
    }
    s.push(')');
    if let Some(v) = &op.observes {
        write!(s, "\n  (observes {})", atom(v)).unwrap();
    }
    if !op.influences.is_empty() {
        let xs: Vec<String> = op.influences.iter().map(atom).collect();
        write!(s, "\n  (influences {})", xs.join(" ")).unwrap();
    }
    if let Some(c) = &op.influence_cpt {
        write!(s, "\n  {}", cpt(c, &op.effects.names())).unwrap();
    }
    s.push(')');
    s
}

fn clause(c: &KbmcClause) -> String {
    let mut s = format!("(clause (head {} ({}))", atom(&c.head), c.outcomes.join(" "));
    if !c.body.is_empty() {
        let xs: Vec<String> = c.body.iter().map(atom).collect();
        write!(s, " (body {})", xs.join(" ")).unwrap();
    }
    write!(s, "\n  {})", cpt(&c.cpt, &c.outcomes)).unwrap();
    s
}

/// Renders a domain in the same S-expression syntax `parse_domain` reads.
pub fn render_domain(d: &Domain) -> String {
    let mut parts: Vec<String> = d.operators.iter().map(operator).collect();
    parts.extend(d.clauses.iter().map(clause));
    let mut s = parts.join("\n\n");
    s.push('\n');
    s
}

pub fn render_problem(p: &Problem) -> String {
    let mut s = String::from("(problem");
    if !p.objects.is_empty() {
        s.push_str("\n  (objects");
        for (ty, cs) in &p.objects {
            write!(s, " ({} {})", ty, cs.join(" ")).unwrap();
        }
        s.push(')');
    }
    let mut init: Vec<String> = p.known_true.iter().map(|a| literal(&Literal::pos(a.clone()))).collect();
    init.extend(p.known_false.iter().map(|a| literal(&Literal::neg(a.clone()))));
    if !init.is_empty() {
        write!(s, "\n  (init {})", init.join(" ")).unwrap();
    }
    if !p.unknown.is_empty() {
        let xs: Vec<String> = p.unknown.iter().map(prop).collect();
        write!(s, "\n  (unknown {})", xs.join(" ")).unwrap();
    }
    if !p.default_false.is_empty() {
        write!(s, "\n  (default-false {})", p.default_false.join(" ")).unwrap();
    }
    let goals: Vec<String> = p.goals.iter().map(literal).collect();
    write!(s, "\n  (goal {})\n  (epsilon {}))\n", goals.join(" "), p.epsilon).unwrap();
    s
}
