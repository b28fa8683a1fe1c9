//! Forward state-space planner over ground STRIPS.
//!
//! Optimal mode is uniform-cost search; satisficing mode is greedy best-first
//! on the additive heuristic. Both share a total tie-break order (f, then g,
//! then the index of the generating ground action, then insertion order) so
//! the same input always yields the same plan.

mod external;
mod ground;
mod heuristic;

use std::cmp::Reverse;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::str::FromStr;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

pub use external::{parse_plan_text, ExternalPlanner};
pub use ground::ground;
pub use heuristic::h_add;

use crate::cost::Cost;
use crate::strips::{Atom, DomainModel, GroundAction, Literal, Plan, ProblemSpec, State, StripsError};
use crate::Execution;

pub const DEFAULT_NODE_LIMIT: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Optimal,
    Satisficing,
}

impl FromStr for SearchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "optimal" => Ok(SearchMode::Optimal),
            "satisficing" => Ok(SearchMode::Satisficing),
            other => Err(format!("unknown search mode `{other}`")),
        }
    }
}

impl fmt::Display for SearchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SearchMode::Optimal => "optimal",
            SearchMode::Satisficing => "satisficing",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Heuristic {
    Blind,
    HAdd,
}

/// The only tie-break rule: f, g, generating action index, insertion order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    #[default]
    FGActionFifo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SearchConfig {
    pub mode: SearchMode,
    pub node_limit: usize,
    pub heuristic: Heuristic,
    #[serde(default)]
    pub tie_break: TieBreak,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig::optimal()
    }
}

impl SearchConfig {
    pub fn optimal() -> Self {
        SearchConfig {
            mode: SearchMode::Optimal,
            node_limit: DEFAULT_NODE_LIMIT,
            heuristic: Heuristic::Blind,
            tie_break: TieBreak::default(),
        }
    }

    pub fn satisficing() -> Self {
        SearchConfig { mode: SearchMode::Satisficing, heuristic: Heuristic::HAdd, ..SearchConfig::optimal() }
    }

    pub fn with_mode(mode: SearchMode) -> Self {
        match mode {
            SearchMode::Optimal => SearchConfig::optimal(),
            SearchMode::Satisficing => SearchConfig::satisficing(),
        }
    }

    pub fn with_node_limit(mut self, node_limit: usize) -> Self {
        self.node_limit = node_limit;
        self
    }

    /// h_add is inadmissible, so optimal mode always searches blind.
    pub fn effective_heuristic(&self) -> Heuristic {
        match self.mode {
            SearchMode::Optimal => Heuristic::Blind,
            SearchMode::Satisficing => self.heuristic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlannerError {
    #[error("unsolvable: {0}")]
    Unsolvable(String),
    #[error("resource limit: more than {limit} {what}")]
    ResourceLimit { what: &'static str, limit: usize },
    #[error(transparent)]
    Model(#[from] StripsError),
    #[error("planner backend error: {0}")]
    Backend(String),
}

impl PlannerError {
    /// Short reason string used in Refuse payloads.
    pub fn reason_code(&self) -> &'static str {
        match self {
            PlannerError::Unsolvable(_) => "unsolvable",
            PlannerError::ResourceLimit { .. } => "resource-limit",
            PlannerError::Model(_) => "invalid-model",
            PlannerError::Backend(_) => "backend-error",
        }
    }
}

/// Ground task with atoms numbered and actions compiled to bit masks.
pub(crate) struct Task {
    pub init: FixedBitSet,
    pub goal_pos: Vec<usize>,
    pub goal_neg: Vec<usize>,
    pub actions: Vec<GroundAction>,
    pub ops: Vec<Op>,
}

pub(crate) struct Op {
    pub pre_pos: Vec<usize>,
    pub pre_neg: Vec<usize>,
    pub add: Vec<usize>,
    pub del: Vec<usize>,
    pub cost: Cost,
}

impl Task {
    pub(crate) fn build(actions: Vec<GroundAction>, init: &State, goal: &[Literal]) -> Task {
        let mut index: HashMap<Atom, usize> = HashMap::new();
        let mut atoms = Vec::new();
        let mut id = |atom: &Atom| -> usize {
            match index.entry(atom.clone()) {
                Entry::Occupied(e) => *e.get(),
                Entry::Vacant(e) => {
                    atoms.push(atom.clone());
                    *e.insert(atoms.len() - 1)
                }
            }
        };
        let init_ids: Vec<usize> = init.iter().map(&mut id).collect();
        let mut goal_pos = Vec::new();
        let mut goal_neg = Vec::new();
        for lit in goal {
            if lit.positive {
                goal_pos.push(id(&lit.atom));
            } else {
                goal_neg.push(id(&lit.atom));
            }
        }
        let ops: Vec<Op> = actions
            .iter()
            .map(|a| Op {
                pre_pos: a.pre_pos.iter().map(&mut id).collect(),
                pre_neg: a.pre_neg.iter().map(&mut id).collect(),
                add: a.adds.iter().map(&mut id).collect(),
                del: a.dels.iter().map(&mut id).collect(),
                cost: a.cost,
            })
            .collect();
        let mut init = FixedBitSet::with_capacity(atoms.len());
        for i in init_ids {
            init.insert(i);
        }
        Task { init, goal_pos, goal_neg, actions, ops }
    }

    fn applicable(&self, state: &FixedBitSet, op: &Op) -> bool {
        op.pre_pos.iter().all(|&i| state.contains(i)) && op.pre_neg.iter().all(|&i| !state.contains(i))
    }

    fn successor(&self, state: &FixedBitSet, op: &Op) -> FixedBitSet {
        let mut next = state.clone();
        for &d in &op.del {
            next.set(d, false);
        }
        for &a in &op.add {
            next.insert(a);
        }
        next
    }

    fn is_goal(&self, state: &FixedBitSet) -> bool {
        self.goal_pos.iter().all(|&i| state.contains(i)) && self.goal_neg.iter().all(|&i| !state.contains(i))
    }
}

/// Drops ground actions whose positive preconditions mention a static atom
/// that is false initially. Static means no action adds or deletes it.
fn prune_static(actions: Vec<GroundAction>, problem: &ProblemSpec) -> Vec<GroundAction> {
    let mut fluent = std::collections::HashSet::new();
    for a in &actions {
        for atom in a.adds.iter().chain(&a.dels) {
            fluent.insert(atom.predicate.as_str().to_owned());
        }
    }
    actions
        .into_iter()
        .filter(|a| {
            a.pre_pos.iter().all(|p| fluent.contains(&p.predicate) || problem.init.contains(p))
                && a.pre_neg.iter().all(|p| fluent.contains(&p.predicate) || !problem.init.contains(p))
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Key {
    f: Cost,
    g: Cost,
    action: usize,
    seq: u64,
}

struct Node {
    parent: Option<usize>,
    action: usize,
}

/// Solves `problem` with the internal planner.
pub fn plan(domain: &DomainModel, problem: &ProblemSpec, cfg: &SearchConfig) -> Result<Plan, PlannerError> {
    problem.validate(domain)?;
    let ground_limit = cfg.node_limit.saturating_mul(10);
    let actions = prune_static(ground(domain, problem, ground_limit)?, problem);
    let task = Task::build(actions, &problem.init, &problem.goal);

    if task.is_goal(&task.init) {
        return Ok(Plan::empty());
    }
    let h0 = heuristic::relaxed_cost(&task, &task.init);
    if h0.is_none() {
        return Err(PlannerError::Unsolvable("goal unreachable even ignoring deletes".into()));
    }
    let use_h = cfg.effective_heuristic() == Heuristic::HAdd;

    let mut nodes: Vec<Node> = vec![Node { parent: None, action: usize::MAX }];
    let mut states: Vec<FixedBitSet> = vec![task.init.clone()];
    let mut best_g: HashMap<FixedBitSet, Cost> = HashMap::new();
    best_g.insert(task.init.clone(), Cost::ZERO);
    let mut closed: std::collections::HashSet<FixedBitSet> = std::collections::HashSet::new();
    let mut open: BinaryHeap<Reverse<(Key, usize)>> = BinaryHeap::new();
    let mut seq = 0u64;
    let f0 = if use_h { h0.unwrap_or(Cost::ZERO) } else { Cost::ZERO };
    open.push(Reverse((Key { f: f0, g: Cost::ZERO, action: 0, seq }, 0)));
    let mut expanded = 0usize;

    while let Some(Reverse((key, node_id))) = open.pop() {
        let state = states[node_id].clone();
        if closed.contains(&state) {
            continue;
        }
        if best_g.get(&state).is_some_and(|g| *g < key.g) {
            continue;
        }
        if task.is_goal(&state) {
            return Ok(extract(&task, &nodes, node_id));
        }
        closed.insert(state.clone());
        expanded += 1;
        if expanded > cfg.node_limit {
            return Err(PlannerError::ResourceLimit { what: "expanded nodes", limit: cfg.node_limit });
        }
        for (i, op) in task.ops.iter().enumerate() {
            if !task.applicable(&state, op) {
                continue;
            }
            let next = task.successor(&state, op);
            if closed.contains(&next) {
                continue;
            }
            let g = key.g + op.cost;
            if best_g.get(&next).is_some_and(|old| *old <= g) {
                continue;
            }
            let f = if use_h {
                match heuristic::relaxed_cost(&task, &next) {
                    Some(h) => h,
                    None => continue,
                }
            } else {
                g
            };
            best_g.insert(next.clone(), g);
            nodes.push(Node { parent: Some(node_id), action: i });
            states.push(next);
            seq += 1;
            open.push(Reverse((Key { f, g, action: i, seq }, nodes.len() - 1)));
        }
    }
    Err(PlannerError::Unsolvable("reachable state space exhausted".into()))
}

fn extract(task: &Task, nodes: &[Node], mut id: usize) -> Plan {
    let mut steps = Vec::new();
    while let Some(parent) = nodes[id].parent {
        steps.push(task.actions[nodes[id].action].clone());
        id = parent;
    }
    steps.reverse();
    Plan::new(steps)
}

/// Internal search or an external process.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PlannerBackend {
    Internal(SearchConfig),
    External(ExternalPlanner),
}

impl Default for PlannerBackend {
    fn default() -> Self {
        PlannerBackend::Internal(SearchConfig::default())
    }
}

impl PlannerBackend {
    pub fn solve(&self, domain: &DomainModel, problem: &ProblemSpec) -> Result<Plan, PlannerError> {
        match self {
            PlannerBackend::Internal(cfg) => plan(domain, problem, cfg),
            PlannerBackend::External(ext) => ext.solve(domain, problem),
        }
    }
}

/// Solves independent problems, in parallel when `exec` asks for it and the
/// `parallel` feature is enabled. Results keep the input order.
pub fn plan_batch(
    jobs: &[(DomainModel, ProblemSpec)],
    cfg: &SearchConfig,
    exec: Execution,
) -> Vec<Result<Plan, PlannerError>> {
    let solve = |(domain, problem): &(DomainModel, ProblemSpec)| plan(domain, problem, cfg);
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            jobs.par_iter().map(solve).collect()
        }
        _ => jobs.iter().map(solve).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strips::pddl::{parse_domain, parse_problem};
    use crate::strips::validate_plan;

    const LINE: &str = "(define (domain line) (:types cell)
        (:predicates (at ?c - cell) (next ?a ?b - cell) (marked ?c - cell))
        (:action step :parameters (?a ?b - cell)
          :precondition (and (at ?a) (next ?a ?b))
          :effect (and (at ?b) (not (at ?a))))
        (:action mark :parameters (?c - cell)
          :precondition (and (at ?c) (not (marked ?c)))
          :effect (and (marked ?c) (increase (total-cost) 3))))";

    fn problem(d: &DomainModel, goal: &str) -> ProblemSpec {
        parse_problem(
            &format!(
                "(define (problem p) (:domain line) (:objects a b c d - cell)
                 (:init (at a) (next a b) (next b c) (next c d) (next d a)) (:goal {goal}))"
            ),
            d,
        )
        .unwrap()
    }

    #[test]
    fn empty_plan_when_goal_holds() {
        let d = parse_domain(LINE).unwrap();
        let p = plan(&d, &problem(&d, "(at a)"), &SearchConfig::optimal()).unwrap();
        assert!(p.is_empty());
        assert_eq!(p.total_cost, Cost::ZERO);
    }

    #[test]
    fn both_modes_produce_valid_plans() {
        let d = parse_domain(LINE).unwrap();
        let pr = problem(&d, "(and (marked c) (at a))");
        let opt = plan(&d, &pr, &SearchConfig::optimal()).unwrap();
        assert_eq!(opt.total_cost, Cost::integer(7));
        assert!(validate_plan(&d, &pr, &opt).is_valid());
        let sat = plan(&d, &pr, &SearchConfig::satisficing()).unwrap();
        assert!(validate_plan(&d, &pr, &sat).is_valid());
    }

    #[test]
    fn unreachable_goal_is_unsolvable() {
        let d = parse_domain(LINE).unwrap();
        let mut pr = problem(&d, "(at b)");
        pr.init.remove(&Atom::new("next", ["a", "b"]));
        pr.init.remove(&Atom::new("next", ["d", "a"]));
        assert!(matches!(plan(&d, &pr, &SearchConfig::optimal()), Err(PlannerError::Unsolvable(_))));
    }

    #[test]
    fn node_limit_is_distinct_from_unsolvable() {
        let d = parse_domain(LINE).unwrap();
        let pr = problem(&d, "(and (marked a) (marked b) (marked c) (marked d) (at c))");
        let cfg = SearchConfig::optimal().with_node_limit(3);
        assert!(matches!(plan(&d, &pr, &cfg), Err(PlannerError::ResourceLimit { .. })));
        assert!(matches!(ground(&d, &pr, 5), Err(PlannerError::ResourceLimit { .. })));
    }

    #[test]
    fn negative_goal() {
        let d = parse_domain(LINE).unwrap();
        let pr = problem(&d, "(not (at a))");
        let p = plan(&d, &pr, &SearchConfig::optimal()).unwrap();
        assert_eq!(p.len(), 1);
        assert!(pr.goal.contains(&Literal::neg(Atom::new("at", ["a"]))));
    }

    #[test]
    fn batch_matches_single() {
        let d = parse_domain(LINE).unwrap();
        let jobs: Vec<_> = ["(marked b)", "(at d)", "(marked d)"].iter().map(|g| (d.clone(), problem(&d, g))).collect();
        let cfg = SearchConfig::optimal();
        let par = plan_batch(&jobs, &cfg, Execution::Parallel);
        let seq = plan_batch(&jobs, &cfg, Execution::Sequential);
        assert_eq!(par, seq);
    }
}
