//! STRIPS + typing subset of PDDL.
//!
//! Domains and problems are generated from a [`WorldModel`], printed to and
//! parsed from text, grounded eagerly and solved with A*. The search orders
//! nodes by `g + h_max`, breaks ties on the additive heuristic and then on
//! generation order, where successors are generated in lexicographic
//! (action name, arguments) order.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::world_model::{Literal, SkillCall, Term, WmError, WorldModel};

pub const ROOT_TYPE: &str = "object";
const SUPPORTED_REQUIREMENTS: &[&str] = &[":strips", ":typing"];

#[derive(Debug, Error)]
pub enum PddlError {
    #[error("{line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unsupported requirement `{0}`")]
    UnsupportedRequirement(String),
    #[error("invalid PDDL: {0}")]
    Invalid(String),
    #[error("world model has no skill templates")]
    NoSkills,
    #[error("skill `{skill}`: {msg}")]
    UnresolvablePattern { skill: String, msg: String },
    #[error(transparent)]
    WorldModel(#[from] WmError),
}

/// A predicate applied to variables (`?x`) or constants.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<String>,
}

impl Atom {
    pub fn new(predicate: &str, args: &[&str]) -> Self {
        Self {
            predicate: predicate.into(),
            args: args.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.args.is_empty() {
            write!(f, "({})", self.predicate)
        } else {
            write!(f, "({} {})", self.predicate, self.args.join(" "))
        }
    }
}

/// `(name, type)` pairs; variable names keep their leading `?`.
pub type TypedList = Vec<(String, String)>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateDecl {
    pub name: String,
    pub params: TypedList,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSchema {
    pub name: String,
    pub params: TypedList,
    pub precondition: Vec<Atom>,
    pub add: Vec<Atom>,
    pub delete: Vec<Atom>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PddlDomain {
    pub name: String,
    pub requirements: Vec<String>,
    /// `(type, parent)`
    pub types: TypedList,
    pub predicates: Vec<PredicateDecl>,
    pub actions: Vec<ActionSchema>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PddlProblem {
    pub name: String,
    pub domain: String,
    pub objects: TypedList,
    pub init: Vec<Atom>,
    pub goal: Vec<Atom>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroundAction {
    pub name: String,
    pub args: Vec<String>,
}

impl fmt::Display for GroundAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.args.is_empty() {
            write!(f, "({})", self.name)
        } else {
            write!(f, "({} {})", self.name, self.args.join(" "))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Plan {
    pub steps: Vec<GroundAction>,
}

impl Plan {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanOutcome {
    Solved(Plan),
    Unsolvable,
}

impl PlanOutcome {
    pub fn plan(&self) -> Option<&Plan> {
        match self {
            PlanOutcome::Solved(p) => Some(p),
            PlanOutcome::Unsolvable => None,
        }
    }
}

/// `GoToLinear` -> `go-to-linear`
pub fn pddl_name(skill: &str) -> String {
    let mut out = String::new();
    let mut prev_lower = false;
    for c in skill.chars() {
        if c.is_ascii_uppercase() {
            if prev_lower {
                out.push('-');
            }
            out.push(c.to_ascii_lowercase());
            prev_lower = false;
        } else {
            out.push(if c == '_' { '-' } else { c });
            prev_lower = c.is_ascii_lowercase() || c.is_ascii_digit();
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Generation from the world model
// ---------------------------------------------------------------------------

pub fn generate_domain(model: &WorldModel) -> Result<PddlDomain, PddlError> {
    if model.skills.is_empty() {
        return Err(PddlError::NoSkills);
    }
    let mut types: BTreeSet<String> = model.objects.iter().map(|o| o.kind.clone()).collect();
    // per predicate, per argument position: the set of types seen
    let mut usage: BTreeMap<String, Vec<BTreeSet<String>>> = BTreeMap::new();
    let mut note = |pred: &str, tys: Vec<String>| -> Result<(), String> {
        let slots = usage
            .entry(pred.to_string())
            .or_insert_with(|| vec![BTreeSet::new(); tys.len()]);
        if slots.len() != tys.len() {
            return Err(format!("predicate `{pred}` used with different arities"));
        }
        for (slot, t) in slots.iter_mut().zip(tys) {
            slot.insert(t);
        }
        Ok(())
    };

    let mut actions = Vec::new();
    for skill in &model.skills {
        let fail = |msg: String| PddlError::UnresolvablePattern {
            skill: skill.name.clone(),
            msg,
        };
        let params: TypedList = skill
            .object_parameters()
            .map(|p| (format!("?{}", p.name), p.ty.clone()))
            .collect();
        for (_, t) in &params {
            types.insert(t.clone());
        }
        let resolve = |lit: &Literal| -> Result<(Atom, Vec<String>), PddlError> {
            let mut args = Vec::new();
            let mut tys = Vec::new();
            for t in &lit.args {
                match t {
                    Term::Var(v) => {
                        let p = skill.parameter(v).ok_or_else(|| fail(format!("undeclared ?{v}")))?;
                        if !p.is_object() {
                            return Err(fail(format!("?{v} is a value parameter")));
                        }
                        args.push(format!("?{v}"));
                        tys.push(p.ty.clone());
                    }
                    Term::Const(c) => {
                        let o = model.object(c).ok_or_else(|| fail(format!("unknown object {c}")))?;
                        args.push(c.clone());
                        tys.push(o.kind.clone());
                    }
                }
            }
            Ok((
                Atom {
                    predicate: lit.predicate.clone(),
                    args,
                },
                tys,
            ))
        };
        let mut precondition = Vec::new();
        for lit in skill.precondition_literals()? {
            if lit.negated {
                return Err(fail(format!("negative precondition {lit} is not STRIPS")));
            }
            let (atom, tys) = resolve(&lit)?;
            note(&atom.predicate, tys).map_err(fail)?;
            precondition.push(atom);
        }
        let (mut add, mut delete) = (Vec::new(), Vec::new());
        for lit in skill.postcondition_literals()? {
            let (atom, tys) = resolve(&lit)?;
            note(&atom.predicate, tys).map_err(fail)?;
            if lit.negated {
                delete.push(atom);
            } else {
                add.push(atom);
            }
        }
        actions.push(ActionSchema {
            name: pddl_name(&skill.name),
            params,
            precondition,
            add,
            delete,
        });
    }
    for r in model.relations.iter().chain(&model.goal) {
        let s = model.require(&r.subject)?;
        let o = model.require(&r.object)?;
        note(&r.predicate, vec![s.kind.clone(), o.kind.clone()]).map_err(PddlError::Invalid)?;
    }
    let predicates = usage
        .into_iter()
        .map(|(name, slots)| PredicateDecl {
            name,
            params: slots
                .into_iter()
                .enumerate()
                .map(|(i, tys)| {
                    let ty = if tys.len() == 1 {
                        tys.into_iter().next().unwrap_or_default()
                    } else {
                        ROOT_TYPE.to_string()
                    };
                    (format!("?a{i}"), ty)
                })
                .collect(),
        })
        .collect();
    types.remove(ROOT_TYPE);
    let domain = PddlDomain {
        name: domain_name(&model.name),
        requirements: vec![":strips".into(), ":typing".into()],
        types: types.into_iter().map(|t| (t, ROOT_TYPE.to_string())).collect(),
        predicates,
        actions,
    };
    validate_domain(&domain)?;
    Ok(domain)
}

fn domain_name(model: &str) -> String {
    if model.is_empty() {
        "scene".into()
    } else {
        pddl_name(model)
    }
}

pub fn generate_problem(model: &WorldModel, domain: &PddlDomain) -> Result<PddlProblem, PddlError> {
    let rel = |r: &crate::world_model::Relation| Atom {
        predicate: r.predicate.clone(),
        args: vec![r.subject.clone(), r.object.clone()],
    };
    let problem = PddlProblem {
        name: format!("{}-task", domain.name),
        domain: domain.name.clone(),
        objects: model.objects.iter().map(|o| (o.id.clone(), o.kind.clone())).collect(),
        init: model.relations.iter().map(rel).collect(),
        goal: model.goal.iter().map(rel).collect(),
    };
    validate_problem(domain, &problem)?;
    Ok(problem)
}

/// Maps a plan over a generated domain back to skill template calls.
pub fn plan_to_skill_calls(plan: &Plan, model: &WorldModel) -> Result<Vec<SkillCall>, PddlError> {
    plan.steps
        .iter()
        .map(|step| {
            let skill = model
                .skills
                .iter()
                .find(|s| pddl_name(&s.name) == step.name)
                .ok_or_else(|| PddlError::Invalid(format!("no skill for action `{}`", step.name)))?;
            Ok(SkillCall {
                skill: skill.name.clone(),
                args: step.args.clone(),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

fn type_parents(domain: &PddlDomain) -> HashMap<&str, &str> {
    domain.types.iter().map(|(t, p)| (t.as_str(), p.as_str())).collect()
}

fn is_subtype(parents: &HashMap<&str, &str>, t: &str, of: &str) -> bool {
    let mut cur = t;
    for _ in 0..=parents.len() + 1 {
        if cur == of || of == ROOT_TYPE {
            return true;
        }
        match parents.get(cur) {
            Some(p) => cur = p,
            None => return false,
        }
    }
    false
}

pub fn validate_domain(domain: &PddlDomain) -> Result<(), PddlError> {
    let inv = |m: String| Err(PddlError::Invalid(m));
    for r in &domain.requirements {
        if !SUPPORTED_REQUIREMENTS.contains(&r.as_str()) {
            return Err(PddlError::UnsupportedRequirement(r.clone()));
        }
    }
    let mut declared: BTreeSet<&str> = domain.types.iter().map(|(t, _)| t.as_str()).collect();
    declared.insert(ROOT_TYPE);
    for (t, p) in &domain.types {
        if !declared.contains(p.as_str()) {
            return inv(format!("type `{t}` has undeclared parent `{p}`"));
        }
    }
    let check_ty = |t: &str| declared.contains(t);
    let mut preds: HashMap<&str, &PredicateDecl> = HashMap::new();
    for p in &domain.predicates {
        if preds.insert(p.name.as_str(), p).is_some() {
            return inv(format!("predicate `{}` declared twice", p.name));
        }
        if let Some((_, t)) = p.params.iter().find(|(_, t)| !check_ty(t)) {
            return inv(format!("predicate `{}` uses undeclared type `{t}`", p.name));
        }
    }
    let mut names = BTreeSet::new();
    for a in &domain.actions {
        if !names.insert(a.name.as_str()) {
            return inv(format!("action `{}` declared twice", a.name));
        }
        if let Some((_, t)) = a.params.iter().find(|(_, t)| !check_ty(t)) {
            return inv(format!("action `{}` uses undeclared type `{t}`", a.name));
        }
        let vars: BTreeSet<&str> = a.params.iter().map(|(v, _)| v.as_str()).collect();
        for atom in a.precondition.iter().chain(&a.add).chain(&a.delete) {
            let Some(decl) = preds.get(atom.predicate.as_str()) else {
                return inv(format!(
                    "action `{}` uses undeclared predicate `{}`",
                    a.name, atom.predicate
                ));
            };
            if decl.params.len() != atom.args.len() {
                return inv(format!("action `{}`: wrong arity for `{}`", a.name, atom.predicate));
            }
            if let Some(v) = atom
                .args
                .iter()
                .find(|x| x.starts_with('?') && !vars.contains(x.as_str()))
            {
                return inv(format!("action `{}`: unbound variable `{v}`", a.name));
            }
        }
    }
    Ok(())
}

pub fn validate_problem(domain: &PddlDomain, problem: &PddlProblem) -> Result<(), PddlError> {
    let inv = |m: String| Err(PddlError::Invalid(m));
    if problem.domain != domain.name {
        return inv(format!(
            "problem is for domain `{}`, not `{}`",
            problem.domain, domain.name
        ));
    }
    let mut declared: BTreeSet<&str> = domain.types.iter().map(|(t, _)| t.as_str()).collect();
    declared.insert(ROOT_TYPE);
    let mut objects = HashMap::new();
    for (o, t) in &problem.objects {
        if !declared.contains(t.as_str()) {
            return inv(format!("object `{o}` has undeclared type `{t}`"));
        }
        if objects.insert(o.as_str(), t.as_str()).is_some() {
            return inv(format!("object `{o}` declared twice"));
        }
    }
    let parents = type_parents(domain);
    let preds: HashMap<&str, &PredicateDecl> = domain.predicates.iter().map(|p| (p.name.as_str(), p)).collect();
    for atom in problem.init.iter().chain(&problem.goal) {
        let Some(decl) = preds.get(atom.predicate.as_str()) else {
            return inv(format!("undeclared predicate `{}`", atom.predicate));
        };
        if decl.params.len() != atom.args.len() {
            return inv(format!("wrong arity in {atom}"));
        }
        for (arg, (_, ty)) in atom.args.iter().zip(&decl.params) {
            let Some(ot) = objects.get(arg.as_str()) else {
                return inv(format!("unknown object `{arg}` in {atom}"));
            };
            if !is_subtype(&parents, ot, ty) {
                return inv(format!("object `{arg}` in {atom} is not a `{ty}`"));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

fn typed_list(list: &TypedList) -> String {
    list.iter()
        .map(|(n, t)| format!("{n} - {t}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn conjunction(atoms: &[Atom], indent: &str) -> String {
    match atoms {
        [] => "()".into(),
        [a] => a.to_string(),
        many => {
            let inner: Vec<String> = many.iter().map(|a| format!("{indent}  {a}")).collect();
            format!("(and\n{}\n{indent})", inner.join("\n"))
        }
    }
}

impl fmt::Display for PddlDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "(define (domain {})", self.name)?;
        writeln!(f, "  (:requirements {})", self.requirements.join(" "))?;
        if !self.types.is_empty() {
            writeln!(f, "  (:types {})", typed_list(&self.types))?;
        }
        writeln!(f, "  (:predicates")?;
        for p in &self.predicates {
            if p.params.is_empty() {
                writeln!(f, "    ({})", p.name)?;
            } else {
                writeln!(f, "    ({} {})", p.name, typed_list(&p.params))?;
            }
        }
        writeln!(f, "  )")?;
        for a in &self.actions {
            writeln!(f, "  (:action {}", a.name)?;
            writeln!(f, "    :parameters ({})", typed_list(&a.params))?;
            writeln!(f, "    :precondition {}", conjunction(&a.precondition, "    "))?;
            let mut effects: Vec<String> = a.add.iter().map(ToString::to_string).collect();
            effects.extend(a.delete.iter().map(|d| format!("(not {d})")));
            match effects.len() {
                0 => writeln!(f, "    :effect ()")?,
                1 => writeln!(f, "    :effect {}", effects[0])?,
                _ => {
                    writeln!(f, "    :effect (and")?;
                    for e in effects {
                        writeln!(f, "      {e}")?;
                    }
                    writeln!(f, "    )")?;
                }
            }
            writeln!(f, "  )")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for PddlProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "(define (problem {})", self.name)?;
        writeln!(f, "  (:domain {})", self.domain)?;
        writeln!(f, "  (:objects")?;
        for (o, t) in &self.objects {
            writeln!(f, "    {o} - {t}")?;
        }
        writeln!(f, "  )")?;
        writeln!(f, "  (:init")?;
        for a in &self.init {
            writeln!(f, "    {a}")?;
        }
        writeln!(f, "  )")?;
        writeln!(f, "  (:goal {})", conjunction(&self.goal, "  "))?;
        write!(f, ")")
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum Sexp {
    Sym(String, usize, usize),
    List(Vec<Sexp>, usize, usize),
}

impl Sexp {
    fn pos(&self) -> (usize, usize) {
        match self {
            Sexp::Sym(_, l, c) | Sexp::List(_, l, c) => (*l, *c),
        }
    }

    fn sym(&self) -> Option<&str> {
        match self {
            Sexp::Sym(s, ..) => Some(s),
            Sexp::List(..) => None,
        }
    }

    fn list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List(v, ..) => Some(v),
            Sexp::Sym(..) => None,
        }
    }
}

fn err_at(node: &Sexp, msg: impl Into<String>) -> PddlError {
    let (line, col) = node.pos();
    PddlError::Syntax {
        line,
        col,
        msg: msg.into(),
    }
}

fn read_sexp(text: &str) -> Result<Sexp, PddlError> {
    let mut stack: Vec<(Vec<Sexp>, usize, usize)> = Vec::new();
    let mut done: Option<Sexp> = None;
    let (mut line, mut col) = (1usize, 0usize);
    let mut chars = text.chars().peekable();
    let mut sym = String::new();
    let mut sym_pos = (0, 0);

    fn flush(sym: &mut String, pos: (usize, usize), stack: &mut [(Vec<Sexp>, usize, usize)]) -> Result<(), PddlError> {
        if sym.is_empty() {
            return Ok(());
        }
        match stack.last_mut() {
            Some(top) => {
                top.0.push(Sexp::Sym(std::mem::take(sym), pos.0, pos.1));
                Ok(())
            }
            None => Err(PddlError::Syntax {
                line: pos.0,
                col: pos.1,
                msg: format!("unexpected symbol `{sym}` outside a list"),
            }),
        }
    }

    while let Some(c) = chars.next() {
        col += 1;
        match c {
            ';' => {
                flush(&mut sym, sym_pos, &mut stack)?;
                for c in chars.by_ref() {
                    if c == '\n' {
                        line += 1;
                        col = 0;
                        break;
                    }
                }
            }
            '(' => {
                flush(&mut sym, sym_pos, &mut stack)?;
                if done.is_some() {
                    return Err(PddlError::Syntax {
                        line,
                        col,
                        msg: "trailing input after the top-level form".into(),
                    });
                }
                stack.push((Vec::new(), line, col));
            }
            ')' => {
                flush(&mut sym, sym_pos, &mut stack)?;
                let Some((items, l, c0)) = stack.pop() else {
                    return Err(PddlError::Syntax {
                        line,
                        col,
                        msg: "unbalanced `)`".into(),
                    });
                };
                let node = Sexp::List(items, l, c0);
                match stack.last_mut() {
                    Some(top) => top.0.push(node),
                    None => done = Some(node),
                }
            }
            c if c.is_whitespace() => {
                flush(&mut sym, sym_pos, &mut stack)?;
                if c == '\n' {
                    line += 1;
                    col = 0;
                }
            }
            c => {
                if sym.is_empty() {
                    sym_pos = (line, col);
                }
                sym.push(c);
            }
        }
    }
    flush(&mut sym, sym_pos, &mut stack)?;
    if let Some((_, l, c)) = stack.last() {
        return Err(PddlError::Syntax {
            line: *l,
            col: *c,
            msg: "unclosed `(`".into(),
        });
    }
    done.ok_or(PddlError::Syntax {
        line,
        col,
        msg: "empty input".into(),
    })
}

fn keyword(node: &Sexp) -> Option<String> {
    node.sym().map(|s| s.to_ascii_lowercase())
}

fn parse_typed_list(items: &[Sexp]) -> Result<TypedList, PddlError> {
    let mut out = Vec::new();
    let mut pending: Vec<String> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let s = items[i].sym().ok_or_else(|| err_at(&items[i], "expected a name"))?;
        if s == "-" {
            let ty = items
                .get(i + 1)
                .and_then(Sexp::sym)
                .ok_or_else(|| err_at(&items[i], "expected a type after `-`"))?;
            if pending.is_empty() {
                return Err(err_at(&items[i], "`-` without preceding names"));
            }
            out.extend(pending.drain(..).map(|n| (n, ty.to_string())));
            i += 2;
        } else {
            pending.push(s.to_string());
            i += 1;
        }
    }
    out.extend(pending.into_iter().map(|n| (n, ROOT_TYPE.to_string())));
    Ok(out)
}

fn parse_atom(node: &Sexp) -> Result<Atom, PddlError> {
    let items = node.list().ok_or_else(|| err_at(node, "expected an atom"))?;
    let (head, rest) = items.split_first().ok_or_else(|| err_at(node, "empty atom"))?;
    let predicate = head.sym().ok_or_else(|| err_at(head, "expected a predicate name"))?;
    let args = rest
        .iter()
        .map(|a| a.sym().map(str::to_string).ok_or_else(|| err_at(a, "expected a term")))
        .collect::<Result<_, _>>()?;
    Ok(Atom {
        predicate: predicate.to_string(),
        args,
    })
}

/// Conjunction of literals; returns (positive, negative).
fn parse_conjunction(node: &Sexp) -> Result<(Vec<Atom>, Vec<Atom>), PddlError> {
    let items = node.list().ok_or_else(|| err_at(node, "expected a formula"))?;
    if items.is_empty() {
        return Ok((vec![], vec![]));
    }
    let head = keyword(&items[0]);
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    let mut literal = |n: &Sexp| -> Result<(), PddlError> {
        let inner = n.list().ok_or_else(|| err_at(n, "expected a literal"))?;
        match inner.first().and_then(keyword).as_deref() {
            Some("not") => {
                if inner.len() != 2 {
                    return Err(err_at(n, "`not` takes one atom"));
                }
                neg.push(parse_atom(&inner[1])?);
            }
            Some("or" | "imply" | "forall" | "exists" | "when" | "and") => {
                return Err(err_at(n, "only conjunctions of literals are supported"));
            }
            _ => pos.push(parse_atom(n)?),
        }
        Ok(())
    };
    if head.as_deref() == Some("and") {
        for n in &items[1..] {
            literal(n)?;
        }
    } else {
        literal(node)?;
    }
    Ok((pos, neg))
}

fn header<'a>(root: &'a Sexp, kind: &str) -> Result<(String, &'a [Sexp]), PddlError> {
    let items = root.list().ok_or_else(|| err_at(root, "expected (define ...)"))?;
    if items.first().and_then(keyword).as_deref() != Some("define") {
        return Err(err_at(root, "expected (define ...)"));
    }
    let head = items
        .get(1)
        .ok_or_else(|| err_at(root, format!("missing ({kind} name)")))?;
    let hl = head
        .list()
        .ok_or_else(|| err_at(head, format!("expected ({kind} name)")))?;
    if hl.len() != 2 || keyword(&hl[0]).as_deref() != Some(kind) {
        return Err(err_at(head, format!("expected ({kind} name)")));
    }
    let name = hl[1].sym().ok_or_else(|| err_at(&hl[1], "expected a name"))?;
    Ok((name.to_string(), &items[2..]))
}

pub fn parse_domain(text: &str) -> Result<PddlDomain, PddlError> {
    let root = read_sexp(text)?;
    let (name, sections) = header(&root, "domain")?;
    let mut domain = PddlDomain {
        name,
        requirements: vec![],
        types: vec![],
        predicates: vec![],
        actions: vec![],
    };
    for sec in sections {
        let items = sec.list().ok_or_else(|| err_at(sec, "expected a section"))?;
        let kw = items
            .first()
            .and_then(keyword)
            .ok_or_else(|| err_at(sec, "empty section"))?;
        match kw.as_str() {
            ":requirements" => {
                for r in &items[1..] {
                    let r = keyword(r).ok_or_else(|| err_at(r, "expected a requirement flag"))?;
                    if !SUPPORTED_REQUIREMENTS.contains(&r.as_str()) {
                        return Err(PddlError::UnsupportedRequirement(r));
                    }
                    domain.requirements.push(r);
                }
            }
            ":types" => domain.types = parse_typed_list(&items[1..])?,
            ":predicates" => {
                for p in &items[1..] {
                    let pl = p.list().ok_or_else(|| err_at(p, "expected a predicate"))?;
                    let (h, rest) = pl.split_first().ok_or_else(|| err_at(p, "empty predicate"))?;
                    domain.predicates.push(PredicateDecl {
                        name: h.sym().ok_or_else(|| err_at(h, "expected a name"))?.to_string(),
                        params: parse_typed_list(rest)?,
                    });
                }
            }
            ":action" => domain.actions.push(parse_action(sec, &items[1..])?),
            other => return Err(err_at(sec, format!("unsupported section `{other}`"))),
        }
    }
    validate_domain(&domain)?;
    Ok(domain)
}

fn parse_action(sec: &Sexp, items: &[Sexp]) -> Result<ActionSchema, PddlError> {
    let name = items
        .first()
        .and_then(Sexp::sym)
        .ok_or_else(|| err_at(sec, "expected an action name"))?;
    let mut action = ActionSchema {
        name: name.to_string(),
        params: vec![],
        precondition: vec![],
        add: vec![],
        delete: vec![],
    };
    let mut i = 1;
    while i < items.len() {
        let kw = keyword(&items[i]).ok_or_else(|| err_at(&items[i], "expected a keyword"))?;
        let val = items
            .get(i + 1)
            .ok_or_else(|| err_at(&items[i], format!("missing value for {kw}")))?;
        match kw.as_str() {
            ":parameters" => {
                action.params = parse_typed_list(val.list().ok_or_else(|| err_at(val, "expected a list"))?)?
            }
            ":precondition" => {
                let (pos, neg) = parse_conjunction(val)?;
                if !neg.is_empty() {
                    return Err(PddlError::UnsupportedRequirement(":negative-preconditions".into()));
                }
                action.precondition = pos;
            }
            ":effect" => {
                let (pos, neg) = parse_conjunction(val)?;
                action.add = pos;
                action.delete = neg;
            }
            other => return Err(err_at(&items[i], format!("unsupported action field `{other}`"))),
        }
        i += 2;
    }
    Ok(action)
}

pub fn parse_problem(text: &str) -> Result<PddlProblem, PddlError> {
    let root = read_sexp(text)?;
    let (name, sections) = header(&root, "problem")?;
    let mut problem = PddlProblem {
        name,
        domain: String::new(),
        objects: vec![],
        init: vec![],
        goal: vec![],
    };
    for sec in sections {
        let items = sec.list().ok_or_else(|| err_at(sec, "expected a section"))?;
        let kw = items
            .first()
            .and_then(keyword)
            .ok_or_else(|| err_at(sec, "empty section"))?;
        match kw.as_str() {
            ":domain" => {
                problem.domain = items
                    .get(1)
                    .and_then(Sexp::sym)
                    .ok_or_else(|| err_at(sec, "expected a domain name"))?
                    .to_string()
            }
            ":objects" => problem.objects = parse_typed_list(&items[1..])?,
            ":init" => {
                for a in &items[1..] {
                    problem.init.push(parse_atom(a)?);
                }
            }
            ":goal" => {
                let g = items.get(1).ok_or_else(|| err_at(sec, "empty goal"))?;
                let (pos, neg) = parse_conjunction(g)?;
                if !neg.is_empty() {
                    return Err(PddlError::UnsupportedRequirement(":negative-preconditions".into()));
                }
                problem.goal = pos;
            }
            ":requirements" => {
                for r in &items[1..] {
                    let r = keyword(r).ok_or_else(|| err_at(r, "expected a requirement flag"))?;
                    if !SUPPORTED_REQUIREMENTS.contains(&r.as_str()) {
                        return Err(PddlError::UnsupportedRequirement(r));
                    }
                }
            }
            other => return Err(err_at(sec, format!("unsupported section `{other}`"))),
        }
    }
    Ok(problem)
}

// ---------------------------------------------------------------------------
// Grounding
// ---------------------------------------------------------------------------

/// Fully instantiated planning task over integer fact ids.
#[derive(Debug, Clone)]
pub struct GroundTask {
    pub facts: Vec<Atom>,
    pub actions: Vec<GroundOperator>,
    pub init: Vec<usize>,
    pub goal: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct GroundOperator {
    pub action: GroundAction,
    pub pre: Vec<usize>,
    pub add: Vec<usize>,
    pub del: Vec<usize>,
}

struct FactTable {
    ids: HashMap<Atom, usize>,
    facts: Vec<Atom>,
}

impl FactTable {
    fn id(&mut self, atom: Atom) -> usize {
        if let Some(&i) = self.ids.get(&atom) {
            return i;
        }
        self.facts.push(atom.clone());
        self.ids.insert(atom, self.facts.len() - 1);
        self.facts.len() - 1
    }
}

pub fn ground(domain: &PddlDomain, problem: &PddlProblem) -> Result<GroundTask, PddlError> {
    validate_problem(domain, problem)?;
    let parents = type_parents(domain);
    let mut table = FactTable {
        ids: HashMap::new(),
        facts: Vec::new(),
    };
    let init: BTreeSet<usize> = problem.init.iter().map(|a| table.id(a.clone())).collect();
    let goal: BTreeSet<usize> = problem.goal.iter().map(|a| table.id(a.clone())).collect();

    // predicates never touched by effects are static: prune on them while binding
    let dynamic: BTreeSet<&str> = domain
        .actions
        .iter()
        .flat_map(|a| a.add.iter().chain(&a.delete))
        .map(|a| a.predicate.as_str())
        .collect();
    let static_init: BTreeSet<&Atom> = problem
        .init
        .iter()
        .filter(|a| !dynamic.contains(a.predicate.as_str()))
        .collect();

    let mut actions = Vec::new();
    for schema in &domain.actions {
        let candidates: Vec<Vec<&str>> = schema
            .params
            .iter()
            .map(|(_, ty)| {
                problem
                    .objects
                    .iter()
                    .filter(|(_, ot)| is_subtype(&parents, ot, ty))
                    .map(|(o, _)| o.as_str())
                    .collect()
            })
            .collect();
        let var_index: HashMap<&str, usize> = schema
            .params
            .iter()
            .enumerate()
            .map(|(i, (v, _))| (v.as_str(), i))
            .collect();
        // static preconditions checked as soon as all their variables are bound
        let statics: Vec<(usize, &Atom)> = schema
            .precondition
            .iter()
            .filter(|a| !dynamic.contains(a.predicate.as_str()))
            .map(|a| {
                let last = a
                    .args
                    .iter()
                    .filter_map(|x| var_index.get(x.as_str()).copied())
                    .max()
                    .unwrap_or(0);
                (last, a)
            })
            .collect();
        let subst = |atom: &Atom, binding: &[&str]| Atom {
            predicate: atom.predicate.clone(),
            args: atom
                .args
                .iter()
                .map(|x| match var_index.get(x.as_str()) {
                    Some(&i) => binding[i].to_string(),
                    None => x.clone(),
                })
                .collect(),
        };
        let mut binding: Vec<&str> = Vec::with_capacity(schema.params.len());
        let mut bindings: Vec<Vec<&str>> = Vec::new();
        fn extend<'a>(
            depth: usize,
            candidates: &[Vec<&'a str>],
            binding: &mut Vec<&'a str>,
            out: &mut Vec<Vec<&'a str>>,
            ok: &dyn Fn(usize, &[&'a str]) -> bool,
        ) {
            if depth == candidates.len() {
                out.push(binding.clone());
                return;
            }
            for &c in &candidates[depth] {
                binding.push(c);
                if ok(depth, binding) {
                    extend(depth + 1, candidates, binding, out, ok);
                }
                binding.pop();
            }
        }
        let ok = |depth: usize, b: &[&str]| {
            statics
                .iter()
                .filter(|(last, _)| *last == depth)
                .all(|(_, a)| static_init.contains(&subst(a, b)))
        };
        if schema.params.is_empty() {
            bindings.push(vec![]);
        } else {
            extend(0, &candidates, &mut binding, &mut bindings, &ok);
        }
        for b in bindings {
            let mut pre: Vec<usize> = schema.precondition.iter().map(|a| table.id(subst(a, &b))).collect();
            let mut add: Vec<usize> = schema.add.iter().map(|a| table.id(subst(a, &b))).collect();
            let mut del: Vec<usize> = schema.delete.iter().map(|a| table.id(subst(a, &b))).collect();
            for v in [&mut pre, &mut add, &mut del] {
                v.sort_unstable();
                v.dedup();
            }
            // STRIPS convention: add wins over delete for the same fact
            del.retain(|d| !add.contains(d));
            actions.push(GroundOperator {
                action: GroundAction {
                    name: schema.name.clone(),
                    args: b.iter().map(|s| s.to_string()).collect(),
                },
                pre,
                add,
                del,
            });
        }
    }
    actions.sort_by(|a, b| a.action.cmp(&b.action));
    Ok(GroundTask {
        facts: table.facts,
        actions,
        init: init.into_iter().collect(),
        goal: goal.into_iter().collect(),
    })
}

// ---------------------------------------------------------------------------
// Search
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct State(Vec<u64>);

impl State {
    fn new(n: usize, facts: &[usize]) -> Self {
        let mut s = State(vec![0; n.div_ceil(64).max(1)]);
        for &f in facts {
            s.set(f);
        }
        s
    }
    fn has(&self, f: usize) -> bool {
        self.0[f / 64] & (1 << (f % 64)) != 0
    }
    fn set(&mut self, f: usize) {
        self.0[f / 64] |= 1 << (f % 64);
    }
    fn clear(&mut self, f: usize) {
        self.0[f / 64] &= !(1 << (f % 64));
    }
    fn all(&self, fs: &[usize]) -> bool {
        fs.iter().all(|&f| self.has(f))
    }
    fn apply(&self, op: &GroundOperator) -> Self {
        let mut s = self.clone();
        for &d in &op.del {
            s.clear(d);
        }
        for &a in &op.add {
            s.set(a);
        }
        s
    }
}

const INF: u32 = u32::MAX / 4;

/// Relaxed-reachability heuristics: (h_max, h_add), `INF` when unreachable.
fn relaxed_costs(task: &GroundTask, state: &State) -> (u32, u32) {
    let n = task.facts.len();
    let mut hmax = vec![INF; n];
    let mut hadd = vec![INF; n];
    for f in 0..n {
        if state.has(f) {
            hmax[f] = 0;
            hadd[f] = 0;
        }
    }
    loop {
        let mut changed = false;
        for op in &task.actions {
            let mut cmax = 0u32;
            let mut cadd = 0u32;
            let mut reachable = true;
            for &p in &op.pre {
                if hmax[p] >= INF {
                    reachable = false;
                    break;
                }
                cmax = cmax.max(hmax[p]);
                cadd = (cadd + hadd[p]).min(INF);
            }
            if !reachable {
                continue;
            }
            for &a in &op.add {
                if cmax + 1 < hmax[a] {
                    hmax[a] = cmax + 1;
                    changed = true;
                }
                if cadd + 1 < hadd[a] {
                    hadd[a] = cadd + 1;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut gmax = 0;
    let mut gadd = 0u32;
    for &g in &task.goal {
        if hmax[g] >= INF {
            return (INF, INF);
        }
        gmax = gmax.max(hmax[g]);
        gadd = (gadd + hadd[g]).min(INF);
    }
    (gmax, gadd)
}

/// A* over the grounded task. Returns the operator indices of an optimal plan.
pub fn search(task: &GroundTask) -> Option<Vec<usize>> {
    let start = State::new(task.facts.len(), &task.init);
    if start.all(&task.goal) {
        return Some(vec![]);
    }
    let (h0, a0) = relaxed_costs(task, &start);
    if h0 >= INF {
        return None;
    }
    let mut states: Vec<State> = vec![start.clone()];
    let mut parent: Vec<Option<(usize, usize)>> = vec![None];
    let mut best_g: Vec<u32> = vec![0];
    let mut index: HashMap<State, usize> = HashMap::new();
    index.insert(start, 0);
    let mut heuristics: Vec<(u32, u32)> = vec![(h0, a0)];
    let mut counter = 0u64;
    // min-heap on (f, h_add, generation order)
    let mut open = BinaryHeap::new();
    open.push(Reverse((h0, a0, counter, 0usize, 0u32)));
    while let Some(Reverse((_, _, _, id, g))) = open.pop() {
        if g > best_g[id] {
            continue;
        }
        if states[id].all(&task.goal) {
            let mut ops = Vec::new();
            let mut cur = id;
            while let Some((p, op)) = parent[cur] {
                ops.push(op);
                cur = p;
            }
            ops.reverse();
            return Some(ops);
        }
        for (oi, op) in task.actions.iter().enumerate() {
            if !states[id].all(&op.pre) {
                continue;
            }
            let next = states[id].apply(op);
            let ng = g + 1;
            let nid = match index.get(&next) {
                Some(&nid) => {
                    if ng >= best_g[nid] {
                        continue;
                    }
                    best_g[nid] = ng;
                    parent[nid] = Some((id, oi));
                    nid
                }
                None => {
                    let h = relaxed_costs(task, &next);
                    if h.0 >= INF {
                        continue;
                    }
                    states.push(next.clone());
                    parent.push(Some((id, oi)));
                    best_g.push(ng);
                    heuristics.push(h);
                    index.insert(next, states.len() - 1);
                    states.len() - 1
                }
            };
            let (hm, ha) = heuristics[nid];
            counter += 1;
            open.push(Reverse((ng + hm, ha, counter, nid, ng)));
        }
    }
    None
}

pub fn plan(domain: &PddlDomain, problem: &PddlProblem) -> Result<PlanOutcome, PddlError> {
    let task = ground(domain, problem)?;
    Ok(match search(&task) {
        Some(ops) => PlanOutcome::Solved(Plan {
            steps: ops.into_iter().map(|i| task.actions[i].action.clone()).collect(),
        }),
        None => PlanOutcome::Unsolvable,
    })
}

/// Checks a plan under STRIPS semantics: every step applicable, goal holds at the end.
pub fn validate_plan(domain: &PddlDomain, problem: &PddlProblem, plan: &Plan) -> Result<(), String> {
    let schemas: HashMap<&str, &ActionSchema> = domain.actions.iter().map(|a| (a.name.as_str(), a)).collect();
    let objects: HashMap<&str, &str> = problem.objects.iter().map(|(o, t)| (o.as_str(), t.as_str())).collect();
    let parents = type_parents(domain);
    let mut state: BTreeSet<Atom> = problem.init.iter().cloned().collect();
    for (i, step) in plan.steps.iter().enumerate() {
        let schema = schemas
            .get(step.name.as_str())
            .ok_or_else(|| format!("step {i}: unknown action `{}`", step.name))?;
        if schema.params.len() != step.args.len() {
            return Err(format!("step {i}: wrong number of arguments"));
        }
        for (arg, (_, ty)) in step.args.iter().zip(&schema.params) {
            let ot = objects
                .get(arg.as_str())
                .ok_or_else(|| format!("step {i}: unknown object `{arg}`"))?;
            if !is_subtype(&parents, ot, ty) {
                return Err(format!("step {i}: `{arg}` is not a `{ty}`"));
            }
        }
        let bind: HashMap<&str, &str> = schema
            .params
            .iter()
            .zip(&step.args)
            .map(|((v, _), a)| (v.as_str(), a.as_str()))
            .collect();
        let subst = |a: &Atom| Atom {
            predicate: a.predicate.clone(),
            args: a
                .args
                .iter()
                .map(|x| bind.get(x.as_str()).map(|s| s.to_string()).unwrap_or_else(|| x.clone()))
                .collect(),
        };
        for p in &schema.precondition {
            let g = subst(p);
            if !state.contains(&g) {
                return Err(format!("step {i} {step}: precondition {g} does not hold"));
            }
        }
        let adds: Vec<Atom> = schema.add.iter().map(subst).collect();
        for d in &schema.delete {
            let g = subst(d);
            if !adds.contains(&g) {
                state.remove(&g);
            }
        }
        state.extend(adds);
    }
    for g in &problem.goal {
        if !state.contains(g) {
            return Err(format!("goal {g} does not hold after the plan"));
        }
    }
    Ok(())
}
