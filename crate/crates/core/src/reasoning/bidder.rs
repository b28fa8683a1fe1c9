use std::collections::BTreeSet;

use crate::acl::{AgentKind, Envelope, ProposalBody, Tick};
use crate::agent::{LivenessConfig, LivenessTable};
use crate::planner::{plan, PlannerError, SearchConfig};
use crate::strips::{Atom, DomainModel, Literal, Plan, ProblemSpec, State, TypedName};

#[derive(Clone, Debug, PartialEq)]
pub enum Bid {
    Propose(ProposalBody),
    Refuse(String),
    Silent,
}

/// An agent's answer to a call for proposals, planned over its own model.
///
/// The full goal is tried first. If that fails, literals are added one at a
/// time in goal order and kept when the set stays solvable. Literals the
/// local model cannot even name are skipped.
pub fn agent_on_cfp(
    agent_id: &str,
    domain: &DomainModel,
    state: &State,
    objects: &[TypedName],
    goal: &[Literal],
    cfg: &SearchConfig,
) -> Bid {
    let mut problem = ProblemSpec::new(format!("{agent_id}-bid"), domain);
    problem.objects = objects
        .iter()
        .filter(|o| domain.has_type(&o.ty) && domain.constant_type(&o.name).is_none())
        .cloned()
        .collect();
    problem.init = state.iter().filter(|a| problem.check_atom(domain, a).is_ok()).cloned().collect();
    let candidates: Vec<Literal> =
        goal.iter().filter(|l| problem.check_atom(domain, &l.atom).is_ok()).cloned().collect();
    if candidates.is_empty() || domain.schemas.is_empty() {
        return Bid::Silent;
    }

    let attempt = |lits: &[Literal]| -> Result<Plan, PlannerError> {
        let mut p = problem.clone();
        p.goal = lits.to_vec();
        plan(domain, &p, cfg)
    };
    let (covered, found) = match attempt(&candidates) {
        Ok(p) => (candidates, p),
        Err(PlannerError::Unsolvable(_)) => {
            let mut covered: Vec<Literal> = Vec::new();
            let mut best = None;
            for lit in candidates {
                covered.push(lit);
                match attempt(&covered) {
                    Ok(p) => best = Some(p),
                    Err(PlannerError::Unsolvable(_)) => {
                        covered.pop();
                    }
                    Err(e) => return Bid::Refuse(e.reason_code().to_string()),
                }
            }
            match best {
                Some(p) => (covered, p),
                None => return Bid::Silent,
            }
        }
        Err(e) => return Bid::Refuse(e.reason_code().to_string()),
    };
    Bid::Propose(ProposalBody {
        proposer: agent_id.to_string(),
        cost: found.total_cost,
        plan: found.to_body(),
        covered: covered.iter().map(ToString::to_string).collect(),
    })
}

/// Local planning state of a decentralized actuator: its own model, what it
/// believes about the map, and which peers are alive.
#[derive(Clone, Debug)]
pub struct Bidder {
    pub fragment: DomainModel,
    pub objects: Vec<TypedName>,
    pub static_facts: Vec<Atom>,
    pub search: SearchConfig,
    /// Leave literals to live stationary sensors that advertise them.
    pub defer_to_stationary: bool,
    pub liveness: LivenessTable,
    pub liveness_cfg: LivenessConfig,
}

impl Bidder {
    pub fn new(fragment: DomainModel, objects: Vec<TypedName>, static_facts: Vec<Atom>) -> Self {
        Bidder {
            fragment,
            objects,
            static_facts,
            search: SearchConfig::optimal(),
            defer_to_stationary: false,
            liveness: LivenessTable::new(),
            liveness_cfg: LivenessConfig::default(),
        }
    }

    /// Feeds heartbeats into the local liveness table.
    pub fn observe(&mut self, envelope: &Envelope) {
        if matches!(envelope.payload, crate::acl::Payload::CapabilityAdvertBody(_)) {
            let _ = self.liveness.record_heartbeat(envelope);
        }
    }

    pub fn on_tick(&mut self, now: Tick) {
        if self.liveness_cfg.is_sweep_tick(now) {
            self.liveness.liveness_sweep(now, self.liveness_cfg.death_timeout);
        }
    }

    /// Atoms some other live stationary sensor can make true.
    pub fn deferred(&self, self_id: &str) -> BTreeSet<Atom> {
        self.liveness
            .alive()
            .filter(|e| {
                e.advert.agent_id != self_id && e.advert.kind == AgentKind::Sensor && e.advert.location.is_some()
            })
            .flat_map(|e| e.advert.sensed.iter().cloned())
            .collect()
    }

    pub fn respond(&self, self_id: &str, extra_facts: &[Atom], goal: &[Literal]) -> Bid {
        let deferred = if self.defer_to_stationary { self.deferred(self_id) } else { BTreeSet::new() };
        let goal: Vec<Literal> = goal.iter().filter(|l| !deferred.contains(&l.atom)).cloned().collect();
        let state: State = self.static_facts.iter().chain(extra_facts).cloned().collect();
        agent_on_cfp(self_id, &self.fragment, &state, &self.objects, &goal, &self.search)
    }
}
