use std::any::Any;
use std::collections::BTreeMap;

use log::{debug, info};

use crate::acl::{
    AgentId, AgentKind, Envelope, ExecutionStatus, GoalState, GoalSubmission, Mode, Payload, PlanBody, PlanReply,
    PlanRequestBody, PlanStatus, Performative, ProposalBody, StateUpdate, Tick,
};
use crate::agent::{AgentCtx, Behavior, CapabilityAdvert, DEFAULT_HEARTBEAT_PERIOD};
use crate::cost::Cost;
use crate::strips::pddl::{parse_domain, print_domain, print_problem};
use crate::strips::{Atom, Literal, ProblemSpec, TypedName};

use super::selection::{select_proposals, Selection};
use super::{DEFAULT_DM, DEFAULT_EXECUTOR, DEFAULT_PLANNER, DEFAULT_REQUESTER};

pub const DEFAULT_PROPOSAL_WINDOW: Tick = 20;
pub const DEFAULT_MAX_REPLANS: u32 = 2;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RequesterConfig {
    pub mode: Mode,
    pub maintainer: AgentId,
    pub planner: AgentId,
    pub executor: AgentId,
    pub proposal_window: Tick,
    pub max_replans: u32,
}

impl Default for RequesterConfig {
    fn default() -> Self {
        RequesterConfig {
            mode: Mode::Centralized,
            maintainer: DEFAULT_DM.into(),
            planner: DEFAULT_PLANNER.into(),
            executor: DEFAULT_EXECUTOR.into(),
            proposal_window: DEFAULT_PROPOSAL_WINDOW,
            max_replans: DEFAULT_MAX_REPLANS,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Phase {
    AwaitModel,
    AwaitPlan,
    Collecting { deadline: Tick, proposals: Vec<ProposalBody> },
    Executing,
    Done,
    Failed(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GoalRecord {
    pub requester: AgentId,
    pub goal: Vec<Literal>,
    pub facts: Vec<Atom>,
    pub mode: Mode,
    pub replans: u32,
    pub phase: Phase,
}

/// Turns goals into plans (via the planner, or a call for proposals) and
/// hands them to the executor; replans when execution fails.
pub struct PlanRequester {
    id: AgentId,
    cfg: RequesterConfig,
    goals: BTreeMap<String, GoalRecord>,
}

impl PlanRequester {
    pub fn new(cfg: RequesterConfig) -> Self {
        PlanRequester { id: DEFAULT_REQUESTER.into(), cfg, goals: BTreeMap::new() }
    }

    pub fn with_id(mut self, id: &str) -> Self {
        self.id = id.to_string();
        self
    }

    pub fn mode(&self) -> Mode {
        self.cfg.mode
    }

    pub fn goals(&self) -> &BTreeMap<String, GoalRecord> {
        &self.goals
    }

    fn goal_text(record: &GoalRecord) -> Vec<String> {
        record.goal.iter().map(ToString::to_string).collect()
    }

    fn refuse(&mut self, ctx: &mut AgentCtx<'_>, conversation: &str, reason: String) {
        let Some(record) = self.goals.get_mut(conversation) else { return };
        info!("{conversation}: refused ({reason})");
        let mut body = PlanRequestBody::new(Self::goal_text(record), record.mode, record.requester.clone());
        body.reason = Some(reason.clone());
        record.phase = Phase::Failed(reason);
        let to = record.requester.clone();
        ctx.send(Performative::Refuse, &to, conversation, Payload::PlanRequest(body));
    }

    fn on_goal(&mut self, ctx: &mut AgentCtx<'_>, envelope: &Envelope, submission: &GoalSubmission) {
        let conversation = envelope.conversation_id.clone();
        let mode = submission.mode.unwrap_or(self.cfg.mode);
        let goal: Result<Vec<Literal>, _> = submission.goal.iter().map(|g| g.parse::<Literal>()).collect();
        let facts: Result<Vec<Atom>, _> = submission.facts.iter().map(|f| f.parse::<Atom>()).collect();
        let record = GoalRecord {
            requester: envelope.sender.clone(),
            goal: goal.clone().unwrap_or_default(),
            facts: facts.clone().unwrap_or_default(),
            mode,
            replans: 0,
            phase: Phase::AwaitModel,
        };
        self.goals.insert(conversation.clone(), record);
        if let Err(e) = goal.as_ref().map(|_| ()).and(facts.as_ref().map(|_| ())) {
            return self.refuse(ctx, &conversation, format!("semantic-error: {e}"));
        }
        self.start_attempt(ctx, &conversation);
    }

    fn start_attempt(&mut self, ctx: &mut AgentCtx<'_>, conversation: &str) {
        let Some(record) = self.goals.get_mut(conversation) else { return };
        match record.mode {
            Mode::Centralized => {
                record.phase = Phase::AwaitModel;
                let dm = self.cfg.maintainer.clone();
                ctx.send(Performative::Request, &dm, conversation, Payload::StateUpdate(StateUpdate::ModelRequest));
            }
            Mode::Decentralized => {
                let deadline = ctx.now + self.cfg.proposal_window;
                record.phase = Phase::Collecting { deadline, proposals: Vec::new() };
                let mut body = PlanRequestBody::new(Self::goal_text(record), Mode::Decentralized, self.id.clone());
                body.deadline = Some(deadline);
                body.facts = record.facts.iter().map(ToString::to_string).collect();
                ctx.broadcast(Performative::CallForProposals, conversation, Payload::PlanRequest(body));
            }
        }
    }

    /// Starts over after a failed attempt, or gives up.
    fn replan_or_fail(&mut self, ctx: &mut AgentCtx<'_>, conversation: &str, reason: String) {
        let Some(record) = self.goals.get_mut(conversation) else { return };
        if record.replans < self.cfg.max_replans {
            record.replans += 1;
            info!("{conversation}: replanning ({reason}), attempt {}", record.replans + 1);
            self.start_attempt(ctx, conversation);
        } else {
            record.phase = Phase::Failed(reason.clone());
            let update = StateUpdate::GoalStatus { status: GoalState::Failed, replans: record.replans, reason: Some(reason) };
            let to = record.requester.clone();
            ctx.send(Performative::Inform, &to, conversation, Payload::StateUpdate(update));
        }
    }

    fn on_snapshot(&mut self, ctx: &mut AgentCtx<'_>, conversation: &str, domain: &str, facts: &[String], objects: &[String]) {
        let Some(record) = self.goals.get(conversation) else { return };
        if record.phase != Phase::AwaitModel {
            return;
        }
        let domain = match parse_domain(domain) {
            Ok(d) => d,
            Err(e) => return self.refuse(ctx, conversation, format!("invalid-model: {e}")),
        };
        if domain.schemas.is_empty() {
            return self.refuse(ctx, conversation, "no-capabilities".into());
        }
        let mut problem = ProblemSpec::new(format!("goal-{}", conversation.replace([':', '/'], "-")), &domain);
        let parsed_objects: Result<Vec<TypedName>, _> = objects.iter().map(|o| o.parse()).collect();
        let parsed_facts: Result<Vec<Atom>, _> = facts.iter().map(|f| f.parse()).collect();
        match (parsed_objects, parsed_facts) {
            (Ok(objs), Ok(init)) => {
                problem.objects = objs.into_iter().filter(|o| domain.constant_type(&o.name).is_none()).collect();
                problem.init = init.into_iter().chain(record.facts.iter().cloned()).collect();
                // beliefs about agents that have since left the model
                let dropped: Vec<Atom> =
                    problem.init.iter().filter(|a| problem.check_atom(&domain, a).is_err()).cloned().collect();
                for atom in dropped {
                    debug!("{conversation}: dropping belief {atom} the model cannot express");
                    problem.init.remove(&atom);
                }
            }
            (Err(e), _) | (_, Err(e)) => return self.refuse(ctx, conversation, format!("invalid-model: {e}")),
        }
        problem.goal = record.goal.clone();
        if let Err(e) = problem.validate(&domain) {
            return self.refuse(ctx, conversation, format!("semantic-error: {e}"));
        }
        let mut body = PlanRequestBody::new(Self::goal_text(record), Mode::Centralized, self.id.clone());
        body.domain = Some(print_domain(&domain));
        body.problem = Some(print_problem(&problem));
        if let Some(r) = self.goals.get_mut(conversation) {
            r.phase = Phase::AwaitPlan;
        }
        let planner = self.cfg.planner.clone();
        ctx.send(Performative::Request, &planner, conversation, Payload::PlanRequest(body));
    }

    fn on_plan_reply(&mut self, ctx: &mut AgentCtx<'_>, conversation: &str, reply: &PlanReply) {
        let Some(record) = self.goals.get(conversation) else { return };
        if record.phase != Phase::AwaitPlan {
            return;
        }
        match (&reply.status, &reply.plan) {
            (PlanStatus::Solved, Some(plan)) => self.execute(ctx, conversation, plan.clone()),
            (PlanStatus::ResourceLimit, _) => self.refuse(ctx, conversation, "resource-limit".into()),
            (PlanStatus::Unsolvable, _) => {
                let reason = reply.reason.clone().unwrap_or_default();
                self.refuse(ctx, conversation, format!("unsolvable: {reason}"))
            }
            _ => {
                let reason = reply.reason.clone().unwrap_or_else(|| "planner error".into());
                self.refuse(ctx, conversation, reason)
            }
        }
    }

    fn execute(&mut self, ctx: &mut AgentCtx<'_>, conversation: &str, plan: PlanBody) {
        let Some(record) = self.goals.get_mut(conversation) else { return };
        record.phase = Phase::Executing;
        let mut body = PlanRequestBody::new(Self::goal_text(record), record.mode, self.id.clone());
        body.plan = Some(plan);
        let executor = self.cfg.executor.clone();
        ctx.send(Performative::Request, &executor, conversation, Payload::PlanRequest(body));
    }

    fn close_window(&mut self, ctx: &mut AgentCtx<'_>, conversation: &str) {
        let Some(record) = self.goals.get_mut(conversation) else { return };
        let Phase::Collecting { proposals, .. } = std::mem::replace(&mut record.phase, Phase::AwaitPlan) else {
            return;
        };
        let selection = select_proposals(&record.goal, &proposals);
        debug!("{conversation}: {} proposals, selection {selection:?}", proposals.len());
        let winners = selection.winners();
        let mut order: Vec<usize> = (0..proposals.len()).collect();
        order.sort_by(|&a, &b| proposals[a].proposer.cmp(&proposals[b].proposer));
        for i in order {
            let performative = if winners.contains(&i) { Performative::Accept } else { Performative::Reject };
            ctx.send(performative, &proposals[i].proposer, conversation, Payload::ProposalBody(proposals[i].clone()));
        }
        match selection {
            Selection::NoProposals => self.replan_or_fail(ctx, conversation, "no-proposals".into()),
            Selection::Uncoverable { missing } => {
                let missing: Vec<String> = missing.iter().map(ToString::to_string).collect();
                self.replan_or_fail(ctx, conversation, format!("uncoverable: {}", missing.join(" ")))
            }
            Selection::Full(_) | Selection::Cover(_) => {
                let steps: Vec<_> = winners.iter().flat_map(|&i| proposals[i].plan.steps.clone()).collect();
                let total_cost: Cost = steps.iter().map(|s| s.cost).sum();
                self.execute(ctx, conversation, PlanBody { steps, total_cost });
            }
        }
    }
}

impl Behavior for PlanRequester {
    fn advert(&self) -> CapabilityAdvert {
        CapabilityAdvert::new(&self.id, AgentKind::Reasoner, None, DEFAULT_HEARTBEAT_PERIOD)
    }

    fn on_tick(&mut self, ctx: &mut AgentCtx<'_>) {
        let due: Vec<String> = self
            .goals
            .iter()
            .filter(|(_, r)| matches!(r.phase, Phase::Collecting { deadline, .. } if ctx.now >= deadline))
            .map(|(c, _)| c.clone())
            .collect();
        for conversation in due {
            self.close_window(ctx, &conversation);
        }
    }

    fn on_message(&mut self, ctx: &mut AgentCtx<'_>, envelope: &Envelope) {
        let conversation = envelope.conversation_id.as_str();
        match (&envelope.performative, &envelope.payload) {
            (Performative::Request, Payload::GoalSubmission(submission)) => self.on_goal(ctx, envelope, submission),
            (Performative::Request, Payload::StateUpdate(StateUpdate::SetMode { mode })) => {
                info!("default mode set to {mode}");
                self.cfg.mode = *mode;
            }
            (Performative::Inform, Payload::StateUpdate(StateUpdate::ModelSnapshot { domain, facts, objects })) => {
                self.on_snapshot(ctx, conversation, domain, facts, objects)
            }
            (Performative::Propose, Payload::PlanReply(reply)) => self.on_plan_reply(ctx, conversation, reply),
            // Agree carries actuator proposals the same way Propose does
            (Performative::Propose | Performative::Agree, Payload::ProposalBody(proposal)) => {
                if let Some(GoalRecord { phase: Phase::Collecting { proposals, .. }, .. }) = self.goals.get_mut(conversation) {
                    if proposal.proposer == envelope.sender && !proposals.iter().any(|p| p.proposer == envelope.sender) {
                        proposals.push(proposal.clone());
                    }
                }
            }
            (Performative::Inform, Payload::StateUpdate(StateUpdate::ExecutionReport { status, failure_reason, .. })) => {
                if envelope.sender != self.cfg.executor {
                    return;
                }
                let Some(record) = self.goals.get_mut(conversation) else { return };
                if record.phase != Phase::Executing {
                    return;
                }
                match status {
                    ExecutionStatus::Success => {
                        record.phase = Phase::Done;
                        let update = StateUpdate::GoalStatus { status: GoalState::Done, replans: record.replans, reason: None };
                        let to = record.requester.clone();
                        ctx.send(Performative::Inform, &to, conversation, Payload::StateUpdate(update));
                    }
                    ExecutionStatus::Failed | ExecutionStatus::Cancelled => {
                        let reason = failure_reason.clone().unwrap_or_else(|| "execution failed".into());
                        self.replan_or_fail(ctx, conversation, reason);
                    }
                }
            }
            _ => {}
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}
