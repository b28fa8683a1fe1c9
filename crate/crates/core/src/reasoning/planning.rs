use std::any::Any;

use crate::acl::{AgentId, AgentKind, Envelope, Payload, PlanReply, PlanStatus, Performative};
use crate::agent::{AgentCtx, Behavior, CapabilityAdvert, DEFAULT_HEARTBEAT_PERIOD};
use crate::planner::{PlannerBackend, PlannerError};
use crate::strips::pddl::{parse_domain, parse_problem};

use super::DEFAULT_PLANNER;

/// Answers `Request/PlanRequest{domain, problem}` with `Propose/PlanReply`.
pub struct PlanningAgent {
    id: AgentId,
    backend: PlannerBackend,
}

impl PlanningAgent {
    pub fn new(backend: PlannerBackend) -> Self {
        PlanningAgent { id: DEFAULT_PLANNER.into(), backend }
    }

    pub fn with_id(mut self, id: &str) -> Self {
        self.id = id.to_string();
        self
    }

    pub fn solve(&self, domain: &str, problem: &str) -> PlanReply {
        let result = parse_domain(domain)
            .and_then(|d| parse_problem(problem, &d).map(|p| (d, p)))
            .map_err(PlannerError::from)
            .and_then(|(d, p)| self.backend.solve(&d, &p));
        match result {
            Ok(plan) => PlanReply { status: PlanStatus::Solved, plan: Some(plan.to_body()), reason: None },
            Err(e) => {
                let status = match e {
                    PlannerError::Unsolvable(_) => PlanStatus::Unsolvable,
                    PlannerError::ResourceLimit { .. } => PlanStatus::ResourceLimit,
                    _ => PlanStatus::Error,
                };
                PlanReply { status, plan: None, reason: Some(e.to_string()) }
            }
        }
    }
}

impl Behavior for PlanningAgent {
    fn advert(&self) -> CapabilityAdvert {
        CapabilityAdvert::new(&self.id, AgentKind::Reasoner, None, DEFAULT_HEARTBEAT_PERIOD)
    }

    fn on_message(&mut self, ctx: &mut AgentCtx<'_>, envelope: &Envelope) {
        if let (Performative::Request, Payload::PlanRequest(req)) = (&envelope.performative, &envelope.payload) {
            let reply = match (&req.domain, &req.problem) {
                (Some(domain), Some(problem)) => self.solve(domain, problem),
                _ => PlanReply { status: PlanStatus::Error, plan: None, reason: Some("missing domain or problem".into()) },
            };
            ctx.reply(envelope, Performative::Propose, Payload::PlanReply(reply));
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}
