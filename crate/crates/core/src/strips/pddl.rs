//! Reader and writer for the supported PDDL subset.
//!
//! Symbols are case-insensitive and lowercased on input. Costs are written
//! as integers or `(/ n d)` and may be read as decimals too. An action with
//! no `increase` effect costs 1.

use std::fmt::Write as _;

use super::{
    ActionSchema, Atom, AtomSchema, DomainModel, Literal, LiteralSchema, PredicateDecl, ProblemSpec, StripsError,
    Term, TypedName, ROOT_TYPE,
};
use crate::cost::Cost;

pub const REQUIREMENTS: [&str; 4] = [":strips", ":typing", ":negative-preconditions", ":action-costs"];

#[derive(Clone, Debug, PartialEq)]
enum Sexp {
    Sym(String, Pos),
    List(Vec<Sexp>, Pos),
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Pos {
    line: usize,
    column: usize,
}

impl Sexp {
    fn pos(&self) -> Pos {
        match self {
            Sexp::Sym(_, p) | Sexp::List(_, p) => *p,
        }
    }

    fn sym(&self) -> Option<&str> {
        match self {
            Sexp::Sym(s, _) => Some(s),
            Sexp::List(..) => None,
        }
    }

    fn list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List(items, _) => Some(items),
            Sexp::Sym(..) => None,
        }
    }

    /// Leading symbol of a list, e.g. `and` for `(and ...)`.
    fn head(&self) -> Option<&str> {
        self.list().and_then(|items| items.first()).and_then(Sexp::sym)
    }
}

fn syntax(pos: Pos, message: impl Into<String>) -> StripsError {
    StripsError::Syntax { line: pos.line, column: pos.column, message: message.into() }
}

fn read_all(text: &str) -> Result<Vec<Sexp>, StripsError> {
    let mut stack: Vec<(Vec<Sexp>, Pos)> = Vec::new();
    let mut top = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut column) = (1, 0);

    while let Some(c) = chars.next() {
        column += 1;
        let here = Pos { line, column };
        match c {
            '\n' => {
                line += 1;
                column = 0;
            }
            ';' => {
                while let Some(&next) = chars.peek() {
                    if next == '\n' {
                        break;
                    }
                    chars.next();
                }
            }
            '(' => stack.push((Vec::new(), here)),
            ')' => {
                let (items, start) = stack.pop().ok_or_else(|| syntax(here, "unbalanced `)`"))?;
                let node = Sexp::List(items, start);
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(node),
                    None => top.push(node),
                }
            }
            c if c.is_whitespace() => {}
            c => {
                let mut sym = String::new();
                sym.extend(c.to_lowercase());
                while let Some(&next) = chars.peek() {
                    if next.is_whitespace() || next == '(' || next == ')' || next == ';' {
                        break;
                    }
                    sym.extend(next.to_lowercase());
                    chars.next();
                    column += 1;
                }
                let node = Sexp::Sym(sym, here);
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(node),
                    None => top.push(node),
                }
            }
        }
    }
    if let Some((_, start)) = stack.pop() {
        return Err(syntax(start, "unclosed `(`"));
    }
    Ok(top)
}

fn read_one(text: &str) -> Result<Sexp, StripsError> {
    let mut all = read_all(text)?;
    match all.len() {
        1 => Ok(all.remove(0)),
        0 => Err(syntax(Pos { line: 1, column: 1 }, "empty input")),
        _ => Err(syntax(all[1].pos(), "trailing input after expression")),
    }
}

fn expect_sym<'a>(node: &'a Sexp, what: &str) -> Result<&'a str, StripsError> {
    node.sym().ok_or_else(|| syntax(node.pos(), format!("expected {what}")))
}

fn expect_list<'a>(node: &'a Sexp, what: &str) -> Result<&'a [Sexp], StripsError> {
    node.list().ok_or_else(|| syntax(node.pos(), format!("expected {what}")))
}

fn is_name(s: &str) -> bool {
    !s.is_empty() && !s.starts_with('?') && !s.starts_with(':') && s != "-"
}

/// Parses `a b - t c` style lists. Variables keep their `?` stripped when
/// `vars` is set, and must carry it.
fn typed_list(items: &[Sexp], vars: bool) -> Result<Vec<TypedName>, StripsError> {
    let mut out = Vec::new();
    let mut pending: Vec<String> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let sym = expect_sym(&items[i], "a name")?;
        if sym == "-" {
            let ty_node = items.get(i + 1).ok_or_else(|| syntax(items[i].pos(), "missing type after `-`"))?;
            let ty = expect_sym(ty_node, "a type name")?;
            if !is_name(ty) {
                return Err(syntax(ty_node.pos(), format!("bad type name `{ty}`")));
            }
            if pending.is_empty() {
                return Err(syntax(items[i].pos(), "type with no names before it"));
            }
            out.extend(pending.drain(..).map(|n| TypedName::new(n, ty)));
            i += 2;
            continue;
        }
        let name = if vars {
            sym.strip_prefix('?').filter(|v| !v.is_empty()).ok_or_else(|| syntax(items[i].pos(), format!("expected a variable, found `{sym}`")))?
        } else if is_name(sym) {
            sym
        } else {
            return Err(syntax(items[i].pos(), format!("expected a name, found `{sym}`")));
        };
        pending.push(name.to_string());
        i += 1;
    }
    out.extend(pending.drain(..).map(|n| TypedName::new(n, ROOT_TYPE)));
    Ok(out)
}

fn parse_number(node: &Sexp) -> Result<Cost, StripsError> {
    match node {
        Sexp::Sym(s, pos) => s.parse().map_err(|_| syntax(*pos, format!("bad cost `{s}`"))),
        Sexp::List(items, pos) => match items.as_slice() {
            [op, n, d] if op.sym() == Some("/") => {
                let n = parse_number(n)?;
                let d = parse_number(d)?;
                if !n.is_integer() || !d.is_integer() || d.numer() == 0 {
                    return Err(syntax(*pos, "cost fraction needs integer terms and a non-zero denominator"));
                }
                Ok(Cost::ratio(n.numer(), d.numer()))
            }
            _ => Err(syntax(*pos, "expected a number")),
        },
    }
}

fn print_cost(cost: Cost) -> String {
    if cost.is_integer() {
        cost.numer().to_string()
    } else {
        format!("(/ {} {})", cost.numer(), cost.denom())
    }
}

fn is_total_cost(node: &Sexp) -> bool {
    matches!(node.list(), Some([s]) if s.sym() == Some("total-cost"))
}

fn ground_atom(node: &Sexp) -> Result<Atom, StripsError> {
    let items = expect_list(node, "an atom")?;
    let (head, rest) = items.split_first().ok_or_else(|| syntax(node.pos(), "empty atom"))?;
    let predicate = expect_sym(head, "a predicate name")?;
    if !is_name(predicate) || predicate == "not" || predicate == "and" {
        return Err(syntax(head.pos(), format!("expected a predicate, found `{predicate}`")));
    }
    let args = rest
        .iter()
        .map(|a| {
            let s = expect_sym(a, "an object name")?;
            if is_name(s) {
                Ok(s.to_string())
            } else {
                Err(syntax(a.pos(), format!("expected an object, found `{s}`")))
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(Atom { predicate: predicate.to_string(), args })
}

fn ground_literal(node: &Sexp) -> Result<Literal, StripsError> {
    if node.head() == Some("not") {
        match expect_list(node, "a literal")? {
            [_, inner] => Ok(Literal::neg(ground_atom(inner)?)),
            _ => Err(syntax(node.pos(), "`not` takes exactly one atom")),
        }
    } else {
        Ok(Literal::pos(ground_atom(node)?))
    }
}

/// Parses a single ground literal such as `(not (at tb1 office1))`.
pub fn parse_literal(text: &str) -> Result<Literal, StripsError> {
    ground_literal(&read_one(text)?)
}

fn schema_atom(node: &Sexp) -> Result<AtomSchema, StripsError> {
    let items = expect_list(node, "an atom")?;
    let (head, rest) = items.split_first().ok_or_else(|| syntax(node.pos(), "empty atom"))?;
    let predicate = expect_sym(head, "a predicate name")?;
    if !is_name(predicate) {
        return Err(syntax(head.pos(), format!("expected a predicate, found `{predicate}`")));
    }
    let args = rest
        .iter()
        .map(|a| {
            let s = expect_sym(a, "a term")?;
            match s.strip_prefix('?') {
                Some(v) if !v.is_empty() => Ok(Term::Var(v.to_string())),
                Some(_) => Err(syntax(a.pos(), "empty variable name")),
                None if is_name(s) => Ok(Term::Const(s.to_string())),
                None => Err(syntax(a.pos(), format!("expected a term, found `{s}`"))),
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(AtomSchema { predicate: predicate.to_string(), args })
}

/// Flattens nested `and`s; `()` is the empty conjunction.
fn conjuncts(node: &Sexp) -> Result<Vec<&Sexp>, StripsError> {
    let mut out = Vec::new();
    match node.list() {
        Some([]) => {}
        Some(items) if node.head() == Some("and") => {
            for item in &items[1..] {
                out.extend(conjuncts(item)?);
            }
        }
        Some(_) => out.push(node),
        None => return Err(syntax(node.pos(), "expected a formula")),
    }
    Ok(out)
}

fn parse_action(items: &[Sexp], pos: Pos) -> Result<ActionSchema, StripsError> {
    let name_node = items.get(1).ok_or_else(|| syntax(pos, "action without a name"))?;
    let full = expect_sym(name_node, "an action name")?;
    let (owner, name) = match full.split_once('.') {
        Some((owner, name)) => (Some(owner.to_string()), name.to_string()),
        None => (None, full.to_string()),
    };
    if owner.as_deref() == Some("") || name.is_empty() || name.contains('.') || !is_name(full) {
        return Err(syntax(name_node.pos(), format!("bad action name `{full}`")));
    }
    let mut schema = ActionSchema::new(name);
    schema.owner = owner;
    let mut cost = None;
    let mut i = 2;
    while i < items.len() {
        let key = expect_sym(&items[i], "an action keyword")?;
        let value = items.get(i + 1).ok_or_else(|| syntax(items[i].pos(), format!("{key} without a value")))?;
        match key {
            ":parameters" => schema.params = typed_list(expect_list(value, "a parameter list")?, true)?,
            ":precondition" => {
                for lit in conjuncts(value)? {
                    let (atom, positive) = if lit.head() == Some("not") {
                        match expect_list(lit, "a literal")? {
                            [_, inner] => (schema_atom(inner)?, false),
                            _ => return Err(syntax(lit.pos(), "`not` takes exactly one atom")),
                        }
                    } else {
                        (schema_atom(lit)?, true)
                    };
                    schema.precond.push(LiteralSchema { atom, positive });
                }
            }
            ":effect" => {
                for eff in conjuncts(value)? {
                    match eff.head() {
                        Some("not") => match expect_list(eff, "an effect")? {
                            [_, inner] => schema.del.push(schema_atom(inner)?),
                            _ => return Err(syntax(eff.pos(), "`not` takes exactly one atom")),
                        },
                        Some("increase") => match expect_list(eff, "an effect")? {
                            [_, target, amount] if is_total_cost(target) => {
                                if cost.is_some() {
                                    return Err(syntax(eff.pos(), "total-cost increased twice"));
                                }
                                cost = Some(parse_number(amount)?);
                            }
                            _ => return Err(syntax(eff.pos(), "only (increase (total-cost) n) is supported")),
                        },
                        _ => schema.add.push(schema_atom(eff)?),
                    }
                }
            }
            other => return Err(syntax(items[i].pos(), format!("unsupported action keyword {other}"))),
        }
        i += 2;
    }
    schema.cost = cost.unwrap_or(Cost::ONE);
    Ok(schema)
}

fn define_header<'a>(root: &'a Sexp, kind: &str) -> Result<(&'a str, &'a [Sexp]), StripsError> {
    let items = expect_list(root, "(define ...)")?;
    if items.first().and_then(Sexp::sym) != Some("define") {
        return Err(syntax(root.pos(), "expected (define ...)"));
    }
    let header = items.get(1).ok_or_else(|| syntax(root.pos(), format!("missing ({kind} name)")))?;
    match header.list() {
        Some([k, name]) if k.sym() == Some(kind) => Ok((expect_sym(name, "a name")?, &items[2..])),
        _ => Err(syntax(header.pos(), format!("expected ({kind} name)"))),
    }
}

/// Parses a domain and checks it for undeclared names.
pub fn parse_domain(text: &str) -> Result<DomainModel, StripsError> {
    let root = read_one(text)?;
    let (name, sections) = define_header(&root, "domain")?;
    let mut domain = DomainModel::new(name);
    for section in sections {
        let items = expect_list(section, "a domain section")?;
        let key = items.first().map(|k| expect_sym(k, "a section keyword")).transpose()?.unwrap_or("");
        let body = items.get(1..).unwrap_or(&[]);
        match key {
            ":requirements" => {
                for req in body {
                    let r = expect_sym(req, "a requirement")?;
                    if !REQUIREMENTS.contains(&r) {
                        return Err(syntax(req.pos(), format!("unsupported requirement {r}")));
                    }
                }
            }
            ":types" => {
                for t in typed_list(body, false)? {
                    let parent = (t.ty != ROOT_TYPE).then_some(t.ty);
                    if t.name != ROOT_TYPE {
                        domain.types.insert(t.name, parent);
                    }
                }
            }
            ":constants" => domain.constants.extend(typed_list(body, false)?),
            ":predicates" => {
                for p in body {
                    let parts = expect_list(p, "a predicate declaration")?;
                    let (head, params) = parts.split_first().ok_or_else(|| syntax(p.pos(), "empty predicate"))?;
                    let pname = expect_sym(head, "a predicate name")?;
                    domain.predicates.push(PredicateDecl::new(pname, typed_list(params, true)?));
                }
            }
            ":functions" => {
                // only the total-cost fluent is accepted
                let ok = match body {
                    [f] => is_total_cost(f),
                    [f, dash, num] => is_total_cost(f) && dash.sym() == Some("-") && num.sym() == Some("number"),
                    _ => false,
                };
                if !ok {
                    return Err(syntax(section.pos(), "only (:functions (total-cost) - number) is supported"));
                }
            }
            ":action" => domain.schemas.push(parse_action(items, section.pos())?),
            other => return Err(syntax(section.pos(), format!("unsupported section `{other}`"))),
        }
    }
    domain.validate()?;
    Ok(domain)
}

/// Parses a problem and checks it against `domain`.
pub fn parse_problem(text: &str, domain: &DomainModel) -> Result<ProblemSpec, StripsError> {
    let problem = parse_problem_unchecked(text)?;
    if problem.domain != domain.name {
        return Err(StripsError::semantic(format!(
            "problem is for domain {}, not {}",
            problem.domain, domain.name
        )));
    }
    problem.validate(domain)?;
    Ok(problem)
}

/// Parses a problem without checking names against a domain.
pub fn parse_problem_unchecked(text: &str) -> Result<ProblemSpec, StripsError> {
    let root = read_one(text)?;
    let (name, sections) = define_header(&root, "problem")?;
    let mut problem = ProblemSpec { name: name.to_string(), ..Default::default() };
    let mut saw_domain = false;
    for section in sections {
        let items = expect_list(section, "a problem section")?;
        let key = items.first().map(|k| expect_sym(k, "a section keyword")).transpose()?.unwrap_or("");
        let body = items.get(1..).unwrap_or(&[]);
        match key {
            ":domain" => match body {
                [d] => {
                    problem.domain = expect_sym(d, "a domain name")?.to_string();
                    saw_domain = true;
                }
                _ => return Err(syntax(section.pos(), "(:domain name) takes one name")),
            },
            ":objects" => problem.objects.extend(typed_list(body, false)?),
            ":init" => {
                for fact in body {
                    if fact.head() == Some("=") {
                        match fact.list() {
                            Some([_, f, _]) if is_total_cost(f) => continue,
                            _ => return Err(syntax(fact.pos(), "only (= (total-cost) n) is supported")),
                        }
                    }
                    problem.init.insert(ground_atom(fact)?);
                }
            }
            ":goal" => match body {
                [g] => {
                    for lit in conjuncts(g)? {
                        problem.goal.push(ground_literal(lit)?);
                    }
                }
                _ => return Err(syntax(section.pos(), "(:goal ...) takes one formula")),
            },
            ":metric" => match body {
                [dir, f] if dir.sym() == Some("minimize") && is_total_cost(f) => problem.metric = true,
                _ => return Err(syntax(section.pos(), "only (:metric minimize (total-cost)) is supported")),
            },
            other => return Err(syntax(section.pos(), format!("unsupported section `{other}`"))),
        }
    }
    if !saw_domain {
        return Err(syntax(root.pos(), "problem without (:domain ...)"));
    }
    Ok(problem)
}

fn write_typed(out: &mut String, items: &[TypedName], var: bool) {
    let prefix = if var { "?" } else { "" };
    let mut first = true;
    for item in items {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{prefix}{} - {}", item.name, item.ty);
    }
}

fn literal_schema(lit: &LiteralSchema) -> String {
    if lit.positive {
        lit.atom.to_string()
    } else {
        format!("(not {})", lit.atom)
    }
}

pub fn print_domain(domain: &DomainModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (domain {})", domain.name);
    let _ = writeln!(out, "  (:requirements {})", REQUIREMENTS.join(" "));
    if !domain.types.is_empty() {
        let types: Vec<String> = domain
            .types
            .iter()
            .map(|(t, parent)| match parent {
                Some(p) => format!("{t} - {p}"),
                None => format!("{t} - {ROOT_TYPE}"),
            })
            .collect();
        let _ = writeln!(out, "  (:types {})", types.join(" "));
    }
    if !domain.constants.is_empty() {
        out.push_str("  (:constants ");
        write_typed(&mut out, &domain.constants, false);
        out.push_str(")\n");
    }
    out.push_str("  (:predicates");
    for p in &domain.predicates {
        let _ = write!(out, "\n    ({}", p.name);
        if !p.params.is_empty() {
            out.push(' ');
            write_typed(&mut out, &p.params, true);
        }
        out.push(')');
    }
    out.push_str(")\n");
    out.push_str("  (:functions (total-cost) - number)\n");
    for s in &domain.schemas {
        let _ = writeln!(out, "  (:action {}", s.qualified_name());
        out.push_str("    :parameters (");
        write_typed(&mut out, &s.params, true);
        out.push_str(")\n");
        let pre: Vec<String> = s.precond.iter().map(literal_schema).collect();
        let _ = writeln!(out, "    :precondition (and {})", pre.join(" "));
        let mut eff: Vec<String> = s.add.iter().map(ToString::to_string).collect();
        eff.extend(s.del.iter().map(|a| format!("(not {a})")));
        eff.push(format!("(increase (total-cost) {})", print_cost(s.cost)));
        let _ = writeln!(out, "    :effect (and {}))", eff.join(" "));
    }
    out.push_str(")\n");
    out
}

pub fn print_problem(problem: &ProblemSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (problem {})", problem.name);
    let _ = writeln!(out, "  (:domain {})", problem.domain);
    if !problem.objects.is_empty() {
        out.push_str("  (:objects ");
        write_typed(&mut out, &problem.objects, false);
        out.push_str(")\n");
    }
    out.push_str("  (:init");
    for atom in &problem.init {
        let _ = write!(out, "\n    {atom}");
    }
    if problem.metric {
        out.push_str("\n    (= (total-cost) 0)");
    }
    out.push_str(")\n");
    let goal: Vec<String> = problem.goal.iter().map(ToString::to_string).collect();
    let _ = writeln!(out, "  (:goal (and {}))", goal.join(" "));
    if problem.metric {
        out.push_str("  (:metric minimize (total-cost))\n");
    }
    out.push_str(")\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "
(define (domain Tiny)
  (:requirements :strips :typing)
  (:types room robot)
  (:constants r1 - robot)
  (:predicates (at ?r - robot ?l - room) (door ?a ?b - room))
  (:action r1.go
    :parameters (?a ?b - room)
    :precondition (and (at r1 ?a) (door ?a ?b) (not (at r1 ?b)))
    :effect (and (at r1 ?b) (not (at r1 ?a)) (increase (total-cost) 2.5))))";

    #[test]
    fn parses_and_lowercases() {
        let d = parse_domain(TINY).unwrap();
        assert_eq!(d.name, "tiny");
        assert_eq!(d.schemas[0].owner.as_deref(), Some("r1"));
        assert_eq!(d.schemas[0].name, "go");
        assert_eq!(d.schemas[0].cost, Cost::ratio(5, 2));
        assert_eq!(d.predicate("door").unwrap().arity_types(), vec!["room", "room"]);
    }

    #[test]
    fn print_then_parse_is_identity() {
        let d = parse_domain(TINY).unwrap();
        let printed = print_domain(&d);
        assert!(printed.contains("(/ 5 2)"));
        assert_eq!(parse_domain(&printed).unwrap(), d);
    }

    #[test]
    fn default_cost_is_one() {
        let text = "(define (domain d) (:predicates (p)) (:action a :parameters () :effect (p)))";
        assert_eq!(parse_domain(text).unwrap().schemas[0].cost, Cost::ONE);
    }

    #[test]
    fn syntax_errors_carry_positions() {
        match parse_domain("(define (domain d)\n  (:predicates (p)") {
            Err(StripsError::Syntax { line, .. }) => assert!(line >= 1),
            other => panic!("{other:?}"),
        }
        match parse_domain("(define (domain d) (:requirements :fluents))") {
            Err(StripsError::Syntax { line: 1, column: 35, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn undeclared_predicate_is_semantic() {
        let text = "(define (domain d) (:predicates (p)) (:action a :parameters () :effect (q)))";
        assert!(matches!(parse_domain(text), Err(StripsError::Semantic(_))));
    }

    #[test]
    fn problem_round_trip() {
        let d = parse_domain(TINY).unwrap();
        let text = "(define (problem p) (:domain tiny) (:objects a b - room)
            (:init (at r1 a) (door a b) (= (total-cost) 0)) (:goal (and (at r1 b) (not (at r1 a))))
            (:metric minimize (total-cost)))";
        let p = parse_problem(text, &d).unwrap();
        assert_eq!(p.goal.len(), 2);
        assert_eq!(parse_problem(&print_problem(&p), &d).unwrap(), p);
    }

    #[test]
    fn literal_text() {
        let lit = parse_literal("(NOT (At tb1 Office1))").unwrap();
        assert_eq!(lit.to_string(), "(not (at tb1 office1))");
        assert!(parse_literal("(at tb1 ?x)").is_err());
        assert!(parse_literal("(p) (q)").is_err());
    }
}
