//! Random instance generators and brute-force oracles shared by the
//! property tests and the acceptance run. Nothing here calls the code under
//! test except to build inputs.

#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use officemesh::acl::*;
use officemesh::cost::Cost;
use officemesh::strips::{ActionSchema, Atom, AtomSchema, DomainModel, Literal, ProblemSpec, Term};

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- wire

/// The performative/payload table, written out independently of the crate.
pub const COMPAT: &[(&str, &[&str])] = &[
    ("request", &["GoalSubmission", "PlanRequest", "ActionRequest", "StateUpdate"]),
    ("call-for-proposals", &["PlanRequest"]),
    ("propose", &["ProposalBody", "PlanReply"]),
    ("agree", &["ProposalBody"]),
    ("accept", &["ProposalBody"]),
    ("reject", &["ProposalBody"]),
    ("inform", &["CapabilityAdvertBody", "StateUpdate", "QueryAnswer"]),
    ("confirm", &["ActionResult", "Observation"]),
    ("query", &["QueryBody"]),
    ("refuse", &["PlanRequest", "ActionRequest"]),
    ("cancel", &["CancelBody"]),
];

pub fn allowed(performative: &str, kind: &str) -> bool {
    COMPAT.iter().any(|(p, kinds)| *p == performative && kinds.contains(&kind))
}

const ALPHABET: &[char] = &[
    'a', 'b', 'z', 'A', 'Q', '0', '7', '-', '_', ':', '/', '.', ' ', '"', '\\', '\n', '\t', '{', '}', 'é', 'ß', '東', '🙂',
];

fn text(r: &mut ChaCha8Rng) -> String {
    let n = r.gen_range(0..12);
    (0..n).map(|_| *ALPHABET.choose(r).unwrap()).collect()
}

fn ident(r: &mut ChaCha8Rng) -> String {
    let n = r.gen_range(1..8);
    (0..n).map(|_| *b"abcdefghijklmnopqrstuvwxyz0123456789-".choose(r).unwrap() as char).collect()
}

fn texts(r: &mut ChaCha8Rng) -> Vec<String> {
    (0..r.gen_range(0..4)).map(|_| text(r)).collect()
}

fn opt<T>(r: &mut ChaCha8Rng, f: impl FnOnce(&mut ChaCha8Rng) -> T) -> Option<T> {
    if r.gen_bool(0.5) {
        Some(f(r))
    } else {
        None
    }
}

fn cost(r: &mut ChaCha8Rng) -> Cost {
    Cost::ratio(r.gen_range(0..1000), r.gen_range(1..50))
}

fn mode(r: &mut ChaCha8Rng) -> Mode {
    if r.gen() {
        Mode::Centralized
    } else {
        Mode::Decentralized
    }
}

fn float(r: &mut ChaCha8Rng) -> f64 {
    match r.gen_range(0..4) {
        0 => r.gen_range(-40.0..60.0),
        1 => f64::from_bits(r.gen::<u64>() & !(0x7ff << 52) | (r.gen_range(900u64..1100) << 52)),
        2 => r.gen_range(-5i32..5) as f64,
        _ => r.gen::<f64>() * 1e-300,
    }
}

fn plan_body(r: &mut ChaCha8Rng) -> PlanBody {
    let steps: Vec<StepRef> = (0..r.gen_range(0..4))
        .map(|_| StepRef { action: format!("{}.{}", ident(r), ident(r)), args: texts(r), cost: cost(r) })
        .collect();
    PlanBody { steps, total_cost: cost(r) }
}

fn observation(r: &mut ChaCha8Rng) -> ObservationBody {
    ObservationBody {
        observer: ident(r),
        quantity: if r.gen() { Quantity::Temperature } else { Quantity::Motion },
        location: text(r),
        value: opt(r, float),
        observed_at: r.gen_range(0..100_000),
    }
}

fn state_update(r: &mut ChaCha8Rng) -> StateUpdate {
    match r.gen_range(0..7) {
        0 => StateUpdate::CapabilityChange {
            agent: ident(r),
            event: *[
                CapabilityEvent::New,
                CapabilityEvent::Updated,
                CapabilityEvent::Dead,
                CapabilityEvent::Resurrected,
                CapabilityEvent::Quarantined,
            ]
            .choose(r)
            .unwrap(),
            alive: texts(r),
            schemas: texts(r),
        },
        1 => StateUpdate::ModelRequest,
        2 => StateUpdate::ModelSnapshot { domain: text(r), facts: texts(r), objects: texts(r) },
        3 => StateUpdate::AgentState { agent: ident(r), location: text(r) },
        4 => StateUpdate::ExecutionReport {
            status: *[ExecutionStatus::Success, ExecutionStatus::Failed, ExecutionStatus::Cancelled].choose(r).unwrap(),
            per_step: (0..r.gen_range(0..3))
                .map(|_| StepRecord {
                    step: r.gen(),
                    action: ident(r),
                    args: texts(r),
                    result: text(r),
                    tick: r.gen_range(0..10_000),
                })
                .collect(),
            failure_reason: opt(r, text),
        },
        5 => StateUpdate::GoalStatus {
            status: if r.gen() { GoalState::Done } else { GoalState::Failed },
            replans: r.gen_range(0..5),
            reason: opt(r, text),
        },
        _ => StateUpdate::SetMode { mode: mode(r) },
    }
}

pub fn payload_of(r: &mut ChaCha8Rng, kind: &str) -> Payload {
    match kind {
        "GoalSubmission" => Payload::GoalSubmission(GoalSubmission { goal: texts(r), facts: texts(r), mode: opt(r, mode) }),
        "PlanRequest" => Payload::PlanRequest(PlanRequestBody {
            goal: texts(r),
            mode: mode(r),
            requester: ident(r),
            deadline: opt(r, |r| r.gen_range(0..10_000)),
            facts: texts(r),
            domain: opt(r, text),
            problem: opt(r, text),
            plan: opt(r, plan_body),
            reason: opt(r, text),
        }),
        "PlanReply" => Payload::PlanReply(PlanReply {
            status: *[PlanStatus::Solved, PlanStatus::Unsolvable, PlanStatus::ResourceLimit, PlanStatus::Error]
                .choose(r)
                .unwrap(),
            plan: opt(r, plan_body),
            reason: opt(r, text),
        }),
        "ProposalBody" => {
            Payload::ProposalBody(ProposalBody { proposer: ident(r), plan: plan_body(r), covered: texts(r), cost: cost(r) })
        }
        "ActionRequest" => {
            Payload::ActionRequest(ActionRequest { step: r.gen(), action: ident(r), args: texts(r), reason: opt(r, text) })
        }
        "ActionResult" => Payload::ActionResult(ActionResult {
            step: r.gen(),
            action: ident(r),
            args: texts(r),
            success: r.gen(),
            reason: opt(r, text),
            observation: opt(r, observation),
        }),
        "CapabilityAdvertBody" => Payload::CapabilityAdvertBody(CapabilityAdvertBody {
            agent_id: ident(r),
            kind: *[AgentKind::Actuator, AgentKind::Sensor, AgentKind::Reasoner, AgentKind::Interface].choose(r).unwrap(),
            location: opt(r, text),
            heartbeat_period: r.gen_range(1..100),
            sensed: texts(r),
            model: text(r),
        }),
        "StateUpdate" => Payload::StateUpdate(state_update(r)),
        "QueryBody" => Payload::QueryBody(QueryBody { question: text(r), about: text(r) }),
        "QueryAnswer" => Payload::QueryAnswer(QueryAnswer { answer: text(r) }),
        "CancelBody" => Payload::CancelBody(CancelBody { reason: text(r), step: opt(r, |r| r.gen()) }),
        "Observation" => Payload::Observation(observation(r)),
        other => panic!("no generator for {other}"),
    }
}

pub fn envelope_with(r: &mut ChaCha8Rng, performative: Performative, kind: &str) -> Envelope {
    Envelope {
        msg_id: text(r),
        conversation_id: text(r),
        performative,
        sender: ident(r),
        recipient: if r.gen_bool(0.3) { BROADCAST.to_string() } else { ident(r) },
        payload: payload_of(r, kind),
        sim_time: r.gen_range(0..1_000_000),
        seq: r.gen(),
    }
}

/// A random envelope whose pair is in [`COMPAT`].
pub fn valid_envelope(r: &mut ChaCha8Rng) -> Envelope {
    let (name, kinds) = COMPAT.choose(r).unwrap();
    let performative = Performative::from_name(name).expect("table names are performatives");
    let kind = kinds.choose(r).unwrap();
    envelope_with(r, performative, kind)
}

// ---------------------------------------------------------------- planning

pub fn atom_text(predicate: &str, args: &[String]) -> String {
    let mut s = format!("({predicate}");
    for a in args {
        s.push(' ');
        s.push_str(a);
    }
    s.push(')');
    s
}

pub struct Instance {
    pub domain: DomainModel,
    pub problem: ProblemSpec,
    pub ground_actions: usize,
}

const PREDICATES: &[(&str, &[&str])] = &[("p", &["a"]), ("q", &["a", "b"]), ("r", &["b"])];

/// One action of the oracle's own grounding.
pub struct OracleAction {
    pub args: Vec<String>,
    pub schema: String,
    pub pos: Vec<String>,
    pub neg: Vec<String>,
    pub add: Vec<String>,
    pub del: Vec<String>,
    pub cost: Cost,
}

fn objects_of<'a>(problem: &'a ProblemSpec, ty: &str) -> Vec<&'a str> {
    problem.objects.iter().filter(|o| o.ty == ty).map(|o| o.name.as_str()).collect()
}

pub fn oracle_ground(domain: &DomainModel, problem: &ProblemSpec) -> Vec<OracleAction> {
    let mut out = Vec::new();
    for schema in &domain.schemas {
        let choices: Vec<Vec<&str>> = schema.params.iter().map(|p| objects_of(problem, &p.ty)).collect();
        let mut tuple = vec![0usize; choices.len()];
        if choices.iter().any(Vec::is_empty) {
            continue;
        }
        loop {
            let bind = |a: &AtomSchema| {
                let args: Vec<String> = a
                    .args
                    .iter()
                    .map(|t| match t {
                        Term::Var(v) => {
                            let i = schema.params.iter().position(|p| &p.name == v).expect("bound variable");
                            choices[i][tuple[i]].to_string()
                        }
                        Term::Const(c) => c.clone(),
                    })
                    .collect();
                atom_text(&a.predicate, &args)
            };
            out.push(OracleAction {
                schema: schema.qualified_name(),
                args: (0..tuple.len()).map(|i| choices[i][tuple[i]].to_string()).collect(),
                pos: schema.precond.iter().filter(|l| l.positive).map(|l| bind(&l.atom)).collect(),
                neg: schema.precond.iter().filter(|l| !l.positive).map(|l| bind(&l.atom)).collect(),
                add: schema.add.iter().map(bind).collect(),
                del: schema.del.iter().map(bind).collect(),
                cost: schema.cost,
            });
            // Odometer increment over the parameter choices.
            let mut i = 0;
            loop {
                if i == tuple.len() {
                    break;
                }
                tuple[i] += 1;
                if tuple[i] < choices[i].len() {
                    break;
                }
                tuple[i] = 0;
                i += 1;
            }
            if i == tuple.len() {
                break;
            }
        }
    }
    out
}

pub type OracleState = BTreeSet<String>;

pub fn oracle_apply(s: &OracleState, a: &OracleAction) -> Option<OracleState> {
    if !a.pos.iter().all(|x| s.contains(x)) || a.neg.iter().any(|x| s.contains(x)) {
        return None;
    }
    let mut next = s.clone();
    for d in &a.del {
        next.remove(d);
    }
    next.extend(a.add.iter().cloned());
    Some(next)
}

fn literal_text(l: &Literal) -> (String, bool) {
    (atom_text(&l.atom.predicate, &l.atom.args), l.positive)
}

/// Exact optimal plan cost by uniform-cost search over explicit states.
pub fn ucs_cost(domain: &DomainModel, problem: &ProblemSpec) -> Option<Cost> {
    ucs(domain, problem).map(|(cost, _)| cost)
}

/// Optimal cost and the fewest steps among optimal plans.
pub fn ucs(domain: &DomainModel, problem: &ProblemSpec) -> Option<(Cost, usize)> {
    let actions = oracle_ground(domain, problem);
    let init: OracleState = problem.init.iter().map(|a| atom_text(&a.predicate, &a.args)).collect();
    ucs_over(&actions, init, &problem.goal.iter().map(literal_text).collect::<Vec<_>>())
}

fn ucs_over(actions: &[OracleAction], init: OracleState, goal: &[(String, bool)]) -> Option<(Cost, usize)> {
    let mut heap = BinaryHeap::new();
    let mut closed: HashSet<OracleState> = HashSet::new();
    heap.push(Reverse((Cost::ZERO, 0usize, init)));
    while let Some(Reverse((g, depth, s))) = heap.pop() {
        if !closed.insert(s.clone()) {
            continue;
        }
        if goal.iter().all(|(a, pos)| s.contains(a) == *pos) {
            return Some((g, depth));
        }
        for a in actions {
            if let Some(next) = oracle_apply(&s, a) {
                if !closed.contains(&next) {
                    heap.push(Reverse((g + a.cost, depth + 1, next)));
                }
            }
        }
    }
    None
}

fn random_schema(r: &mut ChaCha8Rng, index: usize) -> ActionSchema {
    let param_types: Vec<&str> = (0..r.gen_range(1..=2)).map(|_| *["a", "b"].choose(r).unwrap()).collect();
    let mut schema = ActionSchema::new(format!("act{index}"));
    for (i, ty) in param_types.iter().enumerate() {
        schema = schema.param(format!("x{i}"), *ty);
    }
    // Atoms whose argument types the parameters can fill.
    let mut candidates = Vec::new();
    for (pred, types) in PREDICATES {
        let slots: Vec<Vec<usize>> =
            types.iter().map(|t| (0..param_types.len()).filter(|&i| param_types[i] == *t).collect()).collect();
        if slots.iter().any(Vec::is_empty) {
            continue;
        }
        for _ in 0..2 {
            let args = slots.iter().map(|s| Term::Var(format!("x{}", s.choose(r).unwrap()))).collect();
            candidates.push(AtomSchema::new(*pred, args));
        }
    }
    candidates.shuffle(r);
    candidates.dedup();
    // A precondition consumed by the action makes chains of steps necessary.
    let consumed = candidates[0].clone();
    schema = schema.pre(consumed.clone(), true).dels(consumed);
    for c in candidates.iter().skip(1).take(r.gen_range(0..=1)) {
        schema = schema.pre(c.clone(), r.gen_bool(0.8));
    }
    schema = schema.adds(candidates.last().unwrap().clone());
    schema.with_cost(Cost::ratio(r.gen_range(1..=6), r.gen_range(1..=3)))
}

/// A random solvable problem: at most 6 objects, 40 ground actions and 12
/// ground atoms. The goal is read off a random walk from the initial state.
pub fn random_instance(r: &mut ChaCha8Rng) -> Instance {
    loop {
        let (na, nb) = *[(1, 1), (1, 2), (2, 1), (2, 2), (2, 3), (3, 2), (1, 3), (3, 1)].choose(r).unwrap();
        let mut domain = DomainModel::new("rand")
            .with_type("a", None)
            .with_type("b", None)
            .with_predicate("p", &[("x", "a")])
            .with_predicate("q", &[("x", "a"), ("y", "b")])
            .with_predicate("r", &[("y", "b")]);
        for i in 0..r.gen_range(3..=5) {
            domain = domain.with_schema(random_schema(r, i));
        }
        let mut problem = ProblemSpec::new("rand-problem", &domain);
        for i in 0..na {
            problem = problem.with_object(&format!("a{i}"), "a");
        }
        for i in 0..nb {
            problem = problem.with_object(&format!("b{i}"), "b");
        }
        let ground = oracle_ground(&domain, &problem);
        if ground.len() > 40 {
            continue;
        }
        let mut all_atoms = Vec::new();
        for i in 0..na {
            all_atoms.push(Atom::new("p", [format!("a{i}")]));
            for j in 0..nb {
                all_atoms.push(Atom::new("q", [format!("a{i}"), format!("b{j}")]));
            }
        }
        for j in 0..nb {
            all_atoms.push(Atom::new("r", [format!("b{j}")]));
        }
        assert!(all_atoms.len() <= 12);
        for a in &all_atoms {
            if r.gen_bool(0.5) {
                problem = problem.with_init(a.clone());
            }
        }
        let init: OracleState = problem.init.iter().map(|a| atom_text(&a.predicate, &a.args)).collect();
        let mut picked = all_atoms.clone();
        picked.shuffle(r);
        let goal: Vec<Literal> = picked
            .into_iter()
            .take(r.gen_range(1..=4))
            .map(|a| if r.gen_bool(0.75) { Literal::pos(a) } else { Literal::neg(a) })
            .collect();
        let goal_text: Vec<(String, bool)> = goal.iter().map(literal_text).collect();
        // Keep solvable goals, mostly ones that take several steps.
        match ucs_over(&ground, init, &goal_text) {
            None => continue,
            Some((_, 0)) => continue,
            Some((_, 1)) if r.gen_bool(0.8) => continue,
            Some(_) => {}
        }
        for l in goal {
            problem = problem.with_goal(l);
        }
        return Instance { domain, problem, ground_actions: ground.len() };
    }
}

// ---------------------------------------------------------------- selection

pub const GOAL_ROOMS: [&str; 4] = ["office1", "office2", "confroom", "entry"];

pub fn goal_literal(room: &str) -> String {
    format!("(temperature-reported {room})")
}

/// Proposals over a goal of `GOAL_ROOMS`, at least one of them covering it
/// all. Costs come from a small set so ties are common.
pub fn random_proposals(r: &mut ChaCha8Rng) -> Vec<ProposalBody> {
    let n = r.gen_range(1..=8);
    let full_at = r.gen_range(0..n);
    (0..n)
        .map(|i| {
            let covered: Vec<String> = if i == full_at || r.gen_bool(0.3) {
                GOAL_ROOMS.iter().map(|g| goal_literal(g)).collect()
            } else {
                GOAL_ROOMS.iter().filter(|_| r.gen_bool(0.5)).map(|g| goal_literal(g)).collect()
            };
            let mut covered = covered;
            covered.shuffle(r);
            ProposalBody {
                proposer: format!("agent-{}", r.gen_range(0..5)),
                plan: PlanBody::empty(),
                covered,
                cost: Cost::ratio(r.gen_range(1..=4), r.gen_range(1..=2)),
            }
        })
        .collect()
}

/// Index of the cheapest full-coverage proposal, ties to the smallest
/// proposer id, then to the earliest.
pub fn cheapest_full(proposals: &[ProposalBody]) -> Option<usize> {
    let wanted: BTreeSet<String> = GOAL_ROOMS.iter().map(|g| goal_literal(g)).collect();
    let mut best: Option<usize> = None;
    for (i, p) in proposals.iter().enumerate() {
        let covers: BTreeSet<String> = p.covered.iter().cloned().collect();
        if !wanted.is_subset(&covers) {
            continue;
        }
        best = match best {
            Some(b) if (proposals[b].cost, &proposals[b].proposer) <= (p.cost, &p.proposer) => Some(b),
            _ => Some(i),
        };
    }
    best
}
