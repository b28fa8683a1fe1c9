//! Typed STRIPS with action costs.
//!
//! Models are built either through the API or by parsing the PDDL subset
//! `:strips :typing :negative-preconditions :action-costs` (see [`pddl`]).
//! Schema names are owner-qualified (`tb1.move`) whenever the schema belongs
//! to an advertising agent, which lets [`compose_domain`] treat composition
//! as a plain union.

mod compose;
pub mod pddl;
mod semantics;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use compose::compose_domain;
pub use semantics::{apply, applicable, goal_satisfied, validate_plan, PlanValidation};

use crate::cost::Cost;

/// The implicit root of every type hierarchy.
pub const ROOT_TYPE: &str = "object";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StripsError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("semantic error: {0}")]
    Semantic(String),
    #[error("composition conflict: {0}")]
    CompositionConflict(String),
    #[error("precondition violated for {0}")]
    PreconditionViolation(String),
}

impl StripsError {
    pub(crate) fn semantic(message: impl Into<String>) -> Self {
        StripsError::Semantic(message.into())
    }
}

/// A ground atom such as `(at tb1 corridor)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<String>,
}

impl Atom {
    pub fn new<S: Into<String>>(predicate: impl Into<String>, args: impl IntoIterator<Item = S>) -> Self {
        Atom { predicate: predicate.into(), args: args.into_iter().map(Into::into).collect() }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.predicate)?;
        for arg in &self.args {
            write!(f, " {arg}")?;
        }
        f.write_str(")")
    }
}

impl FromStr for Atom {
    type Err = StripsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let literal: Literal = s.parse()?;
        if !literal.positive {
            return Err(StripsError::semantic(format!("expected an atom, found `{s}`")));
        }
        Ok(literal.atom)
    }
}

/// A ground literal: an atom or its negation.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    pub atom: Atom,
    pub positive: bool,
}

impl Literal {
    pub fn pos(atom: Atom) -> Self {
        Literal { atom, positive: true }
    }

    pub fn neg(atom: Atom) -> Self {
        Literal { atom, positive: false }
    }

    pub fn holds_in(&self, state: &State) -> bool {
        state.contains(&self.atom) == self.positive
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.positive {
            write!(f, "{}", self.atom)
        } else {
            write!(f, "(not {})", self.atom)
        }
    }
}

impl FromStr for Literal {
    type Err = StripsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        pddl::parse_literal(s)
    }
}

impl Serialize for Literal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Literal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

pub type State = BTreeSet<Atom>;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    /// A parameter, stored without the leading `?`.
    Var(String),
    Const(String),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "?{v}"),
            Term::Const(c) => f.write_str(c),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AtomSchema {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl AtomSchema {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        AtomSchema { predicate: predicate.into(), args }
    }

    fn bind(&self, binding: &BTreeMap<&str, &str>) -> Atom {
        Atom {
            predicate: self.predicate.clone(),
            args: self
                .args
                .iter()
                .map(|t| match t {
                    Term::Var(v) => binding[v.as_str()].to_string(),
                    Term::Const(c) => c.clone(),
                })
                .collect(),
        }
    }
}

impl fmt::Display for AtomSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.predicate)?;
        for arg in &self.args {
            write!(f, " {arg}")?;
        }
        f.write_str(")")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LiteralSchema {
    pub atom: AtomSchema,
    pub positive: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypedName {
    pub name: String,
    pub ty: String,
}

impl TypedName {
    pub fn new(name: impl Into<String>, ty: impl Into<String>) -> Self {
        TypedName { name: name.into(), ty: ty.into() }
    }
}

impl fmt::Display for TypedName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} - {}", self.name, self.ty)
    }
}

impl FromStr for TypedName {
    type Err = StripsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(" - ") {
            Some((name, ty)) => Ok(TypedName::new(name.trim(), ty.trim())),
            None => Ok(TypedName::new(s.trim(), ROOT_TYPE)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PredicateDecl {
    pub name: String,
    /// Parameter names are stored without the leading `?`.
    pub params: Vec<TypedName>,
}

impl PredicateDecl {
    pub fn new(name: impl Into<String>, params: Vec<TypedName>) -> Self {
        PredicateDecl { name: name.into(), params }
    }

    pub fn arity_types(&self) -> Vec<&str> {
        self.params.iter().map(|p| p.ty.as_str()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ActionSchema {
    /// Advertising agent; `None` for plain PDDL models.
    pub owner: Option<String>,
    pub name: String,
    pub params: Vec<TypedName>,
    pub precond: Vec<LiteralSchema>,
    pub add: Vec<AtomSchema>,
    pub del: Vec<AtomSchema>,
    pub cost: Cost,
}

impl ActionSchema {
    pub fn new(name: impl Into<String>) -> Self {
        ActionSchema {
            owner: None,
            name: name.into(),
            params: Vec::new(),
            precond: Vec::new(),
            add: Vec::new(),
            del: Vec::new(),
            cost: Cost::ONE,
        }
    }

    pub fn owned_by(mut self, owner: impl Into<String>) -> Self {
        self.owner = Some(owner.into());
        self
    }

    pub fn param(mut self, name: impl Into<String>, ty: impl Into<String>) -> Self {
        self.params.push(TypedName::new(name, ty));
        self
    }

    pub fn pre(mut self, atom: AtomSchema, positive: bool) -> Self {
        self.precond.push(LiteralSchema { atom, positive });
        self
    }

    pub fn adds(mut self, atom: AtomSchema) -> Self {
        self.add.push(atom);
        self
    }

    pub fn dels(mut self, atom: AtomSchema) -> Self {
        self.del.push(atom);
        self
    }

    pub fn with_cost(mut self, cost: Cost) -> Self {
        self.cost = cost;
        self
    }

    /// `owner.name`, or just `name` for unowned schemas.
    pub fn qualified_name(&self) -> String {
        match &self.owner {
            Some(owner) => format!("{owner}.{}", self.name),
            None => self.name.clone(),
        }
    }

    /// Grounds the schema with positional arguments. Deletes that are also
    /// added are dropped, so adds and deletes of the result are disjoint.
    pub fn instantiate(&self, args: &[String]) -> Result<GroundAction, StripsError> {
        if args.len() != self.params.len() {
            return Err(StripsError::semantic(format!(
                "{} expects {} arguments, got {}",
                self.qualified_name(),
                self.params.len(),
                args.len()
            )));
        }
        let binding: BTreeMap<&str, &str> =
            self.params.iter().zip(args).map(|(p, a)| (p.name.as_str(), a.as_str())).collect();
        let mut pre_pos = Vec::new();
        let mut pre_neg = Vec::new();
        for lit in &self.precond {
            let atom = lit.atom.bind(&binding);
            if lit.positive {
                pre_pos.push(atom);
            } else {
                pre_neg.push(atom);
            }
        }
        let adds: Vec<Atom> = self.add.iter().map(|a| a.bind(&binding)).collect();
        let dels: Vec<Atom> = self
            .del
            .iter()
            .map(|a| a.bind(&binding))
            .filter(|a| !adds.contains(a))
            .collect();
        Ok(GroundAction {
            name: self.qualified_name(),
            owner: self.owner.clone(),
            args: args.to_vec(),
            pre_pos,
            pre_neg,
            adds,
            dels,
            cost: self.cost,
        })
    }

    fn variables(&self) -> impl Iterator<Item = &str> {
        self.precond
            .iter()
            .map(|l| &l.atom)
            .chain(self.add.iter())
            .chain(self.del.iter())
            .flat_map(|a| a.args.iter())
            .filter_map(|t| match t {
                Term::Var(v) => Some(v.as_str()),
                Term::Const(_) => None,
            })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct DomainModel {
    pub name: String,
    /// Declared types and their parent (`None` means the root type).
    pub types: BTreeMap<String, Option<String>>,
    pub constants: Vec<TypedName>,
    pub predicates: Vec<PredicateDecl>,
    pub schemas: Vec<ActionSchema>,
}

impl DomainModel {
    pub fn new(name: impl Into<String>) -> Self {
        DomainModel { name: name.into(), ..Default::default() }
    }

    pub fn with_type(mut self, name: &str, parent: Option<&str>) -> Self {
        let parent = parent.filter(|p| *p != ROOT_TYPE).map(String::from);
        self.types.insert(name.to_string(), parent);
        self
    }

    pub fn with_constant(mut self, name: &str, ty: &str) -> Self {
        self.constants.push(TypedName::new(name, ty));
        self
    }

    pub fn with_predicate(mut self, name: &str, params: &[(&str, &str)]) -> Self {
        self.predicates.push(PredicateDecl::new(
            name,
            params.iter().map(|(n, t)| TypedName::new(*n, *t)).collect(),
        ));
        self
    }

    pub fn with_schema(mut self, schema: ActionSchema) -> Self {
        self.schemas.push(schema);
        self
    }

    pub fn predicate(&self, name: &str) -> Option<&PredicateDecl> {
        self.predicates.iter().find(|p| p.name == name)
    }

    pub fn schema(&self, qualified_name: &str) -> Option<&ActionSchema> {
        self.schemas.iter().find(|s| s.qualified_name() == qualified_name)
    }

    pub fn has_type(&self, ty: &str) -> bool {
        ty == ROOT_TYPE || self.types.contains_key(ty)
    }

    /// True when `ty` equals `ancestor` or descends from it.
    pub fn is_subtype(&self, ty: &str, ancestor: &str) -> bool {
        if ancestor == ROOT_TYPE {
            return true;
        }
        let mut current = ty;
        for _ in 0..=self.types.len() {
            if current == ancestor {
                return true;
            }
            match self.types.get(current) {
                Some(Some(parent)) => current = parent,
                _ => return false,
            }
        }
        false
    }

    pub fn constant_type(&self, name: &str) -> Option<&str> {
        self.constants.iter().find(|c| c.name == name).map(|c| c.ty.as_str())
    }

    /// Checks that every name used by the model is declared.
    pub fn validate(&self) -> Result<(), StripsError> {
        for (ty, parent) in &self.types {
            if let Some(parent) = parent {
                if !self.has_type(parent) {
                    return Err(StripsError::semantic(format!("type {ty} has undeclared parent {parent}")));
                }
            }
            // walking up from every type must reach the root
            let mut current = ty.as_str();
            let mut steps = 0;
            while let Some(Some(parent)) = self.types.get(current) {
                current = parent;
                steps += 1;
                if steps > self.types.len() {
                    return Err(StripsError::semantic(format!("type hierarchy has a cycle through {ty}")));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for c in &self.constants {
            if !self.has_type(&c.ty) {
                return Err(StripsError::semantic(format!("constant {} has undeclared type {}", c.name, c.ty)));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(StripsError::semantic(format!("constant {} declared twice", c.name)));
            }
        }
        let mut seen = BTreeSet::new();
        for p in &self.predicates {
            if !seen.insert(p.name.as_str()) {
                return Err(StripsError::semantic(format!("predicate {} declared twice", p.name)));
            }
            for param in &p.params {
                if !self.has_type(&param.ty) {
                    return Err(StripsError::semantic(format!(
                        "predicate {} uses undeclared type {}",
                        p.name, param.ty
                    )));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for s in &self.schemas {
            let qualified = s.qualified_name();
            if s.name.contains('.') || s.owner.as_deref().is_some_and(|o| o.contains('.') || o.is_empty()) {
                return Err(StripsError::semantic(format!("schema name {qualified} is malformed")));
            }
            if !seen.insert(qualified.clone()) {
                return Err(StripsError::semantic(format!("schema {qualified} declared twice")));
            }
            let mut params = BTreeMap::new();
            for p in &s.params {
                if !self.has_type(&p.ty) {
                    return Err(StripsError::semantic(format!("{qualified}: undeclared type {}", p.ty)));
                }
                if params.insert(p.name.as_str(), p.ty.as_str()).is_some() {
                    return Err(StripsError::semantic(format!("{qualified}: parameter ?{} repeated", p.name)));
                }
            }
            for v in s.variables() {
                if !params.contains_key(v) {
                    return Err(StripsError::semantic(format!("{qualified}: variable ?{v} is not a parameter")));
                }
            }
            for atom in s.precond.iter().map(|l| &l.atom).chain(&s.add).chain(&s.del) {
                self.check_atom_schema(&qualified, atom, &params)?;
            }
        }
        Ok(())
    }

    fn check_atom_schema(
        &self,
        context: &str,
        atom: &AtomSchema,
        params: &BTreeMap<&str, &str>,
    ) -> Result<(), StripsError> {
        let decl = self
            .predicate(&atom.predicate)
            .ok_or_else(|| StripsError::semantic(format!("{context}: undeclared predicate {}", atom.predicate)))?;
        if decl.params.len() != atom.args.len() {
            return Err(StripsError::semantic(format!(
                "{context}: {} expects {} arguments, got {}",
                atom.predicate,
                decl.params.len(),
                atom.args.len()
            )));
        }
        for (term, param) in atom.args.iter().zip(&decl.params) {
            let ty = match term {
                Term::Var(v) => params[v.as_str()],
                Term::Const(c) => self
                    .constant_type(c)
                    .ok_or_else(|| StripsError::semantic(format!("{context}: undeclared constant {c}")))?,
            };
            if !self.is_subtype(ty, &param.ty) {
                return Err(StripsError::semantic(format!(
                    "{context}: argument {term} of type {ty} does not fit {} parameter of type {}",
                    atom.predicate, param.ty
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ProblemSpec {
    pub name: String,
    pub domain: String,
    pub objects: Vec<TypedName>,
    pub init: State,
    pub goal: Vec<Literal>,
    /// Minimize total cost.
    pub metric: bool,
}

impl ProblemSpec {
    pub fn new(name: impl Into<String>, domain: &DomainModel) -> Self {
        ProblemSpec { name: name.into(), domain: domain.name.clone(), metric: true, ..Default::default() }
    }

    pub fn with_object(mut self, name: &str, ty: &str) -> Self {
        self.objects.push(TypedName::new(name, ty));
        self
    }

    pub fn with_init(mut self, atom: Atom) -> Self {
        self.init.insert(atom);
        self
    }

    pub fn with_goal(mut self, literal: Literal) -> Self {
        self.goal.push(literal);
        self
    }

    /// Type of an object or domain constant.
    pub fn object_type<'a>(&'a self, domain: &'a DomainModel, name: &str) -> Option<&'a str> {
        self.objects
            .iter()
            .find(|o| o.name == name)
            .map(|o| o.ty.as_str())
            .or_else(|| domain.constant_type(name))
    }

    /// Every object usable in grounding: problem objects plus domain
    /// constants, sorted by name.
    pub fn universe<'a>(&'a self, domain: &'a DomainModel) -> Vec<&'a TypedName> {
        let mut all: BTreeMap<&str, &TypedName> = BTreeMap::new();
        for c in &domain.constants {
            all.insert(&c.name, c);
        }
        for o in &self.objects {
            all.insert(&o.name, o);
        }
        all.into_values().collect()
    }

    pub fn validate(&self, domain: &DomainModel) -> Result<(), StripsError> {
        let mut seen = BTreeSet::new();
        for o in &self.objects {
            if !domain.has_type(&o.ty) {
                return Err(StripsError::semantic(format!("object {} has undeclared type {}", o.name, o.ty)));
            }
            if !seen.insert(o.name.as_str()) {
                return Err(StripsError::semantic(format!("object {} declared twice", o.name)));
            }
            if let Some(ty) = domain.constant_type(&o.name) {
                if ty != o.ty {
                    return Err(StripsError::semantic(format!("object {} clashes with constant of type {ty}", o.name)));
                }
            }
        }
        for atom in self.init.iter().chain(self.goal.iter().map(|l| &l.atom)) {
            self.check_atom(domain, atom)?;
        }
        Ok(())
    }

    pub(crate) fn check_atom(&self, domain: &DomainModel, atom: &Atom) -> Result<(), StripsError> {
        let decl = domain
            .predicate(&atom.predicate)
            .ok_or_else(|| StripsError::semantic(format!("undeclared predicate {} in {atom}", atom.predicate)))?;
        if decl.params.len() != atom.args.len() {
            return Err(StripsError::semantic(format!("{atom}: wrong number of arguments")));
        }
        for (arg, param) in atom.args.iter().zip(&decl.params) {
            let ty = self
                .object_type(domain, arg)
                .ok_or_else(|| StripsError::semantic(format!("undeclared object {arg} in {atom}")))?;
            if !domain.is_subtype(ty, &param.ty) {
                return Err(StripsError::semantic(format!("{atom}: {arg} is a {ty}, expected {}", param.ty)));
            }
        }
        Ok(())
    }
}

/// A fully instantiated action.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GroundAction {
    /// Qualified schema name.
    pub name: String,
    pub owner: Option<String>,
    pub args: Vec<String>,
    pub pre_pos: Vec<Atom>,
    pub pre_neg: Vec<Atom>,
    pub adds: Vec<Atom>,
    pub dels: Vec<Atom>,
    pub cost: Cost,
}

impl GroundAction {
    /// The unqualified method name the owner executes.
    pub fn method(&self) -> &str {
        match &self.owner {
            Some(owner) => self.name.strip_prefix(owner.as_str()).and_then(|s| s.strip_prefix('.')).unwrap_or(&self.name),
            None => &self.name,
        }
    }
}

impl fmt::Display for GroundAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.name)?;
        for arg in &self.args {
            write!(f, " {arg}")?;
        }
        f.write_str(")")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Plan {
    pub steps: Vec<GroundAction>,
    pub total_cost: Cost,
}

impl Plan {
    pub fn new(steps: Vec<GroundAction>) -> Self {
        let total_cost = steps.iter().map(|s| s.cost).sum();
        Plan { steps, total_cost }
    }

    pub fn empty() -> Self {
        Plan::default()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn to_body(&self) -> crate::acl::PlanBody {
        crate::acl::PlanBody {
            steps: self
                .steps
                .iter()
                .map(|s| crate::acl::StepRef { action: s.name.clone(), args: s.args.clone(), cost: s.cost })
                .collect(),
            total_cost: self.total_cost,
        }
    }

    /// Rebuilds a plan from its wire form by instantiating each step against
    /// `domain`.
    pub fn from_body(domain: &DomainModel, body: &crate::acl::PlanBody) -> Result<Plan, StripsError> {
        let steps = body
            .steps
            .iter()
            .map(|step| {
                domain
                    .schema(&step.action)
                    .ok_or_else(|| StripsError::semantic(format!("unknown action {}", step.action)))?
                    .instantiate(&step.args)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Plan::new(steps))
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for step in &self.steps {
            writeln!(f, "{step}")?;
        }
        write!(f, "; cost = {}", self.total_cost)
    }
}
