use std::any::Any;
use std::collections::BTreeMap;

use log::{debug, info};

use crate::acl::{
    ActionRequest, ActionResult, AgentId, AgentKind, CancelBody, Envelope, GoalSubmission, ObservationBody, Payload,
    PlanRequestBody, Performative, Quantity, QueryAnswer, QueryBody, StateUpdate, Tick,
};
use crate::agent::{AgentCtx, Behavior, CapabilityAdvert, LivenessConfig};
use crate::reasoning::{Bid, Bidder};
use crate::strips::pddl::parse_domain;
use crate::strips::{Atom, DomainModel, Literal, TypedName};

use super::{AutoRespond, ScriptedGoal, SimError};

/// Move between adjacent places, read temperature with the onboard IR sensor,
/// and show a login prompt on the onboard screen.
pub fn turtlebot_fragment(id: &str) -> DomainModel {
    let text = format!(
        "(define (domain {id})
           (:requirements :strips :typing :action-costs)
           (:types location robot)
           (:constants {id} - robot)
           (:predicates (at ?r - robot ?l - location) (connected ?a - location ?b - location)
                        (temperature-reported ?l - location) (motion-detected ?l - location)
                        (validated ?l - location))
           (:action {id}.move
             :parameters (?from - location ?to - location)
             :precondition (and (at {id} ?from) (connected ?from ?to))
             :effect (and (at {id} ?to) (not (at {id} ?from))))
           (:action {id}.report-temp-ir
             :parameters (?l - location)
             :precondition (at {id} ?l)
             :effect (temperature-reported ?l))
           (:action {id}.present-login
             :parameters (?l - location)
             :precondition (and (at {id} ?l) (motion-detected ?l))
             :effect (validated ?l)))"
    );
    parse_domain(&text).expect("turtlebot model parses")
}

pub fn sensor_fragment(id: &str, location: &str, predicate: &str) -> DomainModel {
    let text = format!(
        "(define (domain {id})
           (:requirements :strips :typing :action-costs)
           (:types location)
           (:constants {location} - location)
           (:predicates ({predicate} ?l - location))
           (:action {id}.sense
             :parameters ()
             :effect ({predicate} {location})))"
    );
    parse_domain(&text).expect("sensor model parses")
}

/// Pan/tilt/zoom, record and snap. Execution is a stub.
pub fn camera_fragment(id: &str) -> DomainModel {
    let text = format!(
        "(define (domain {id})
           (:requirements :strips :typing :action-costs)
           (:types location camera)
           (:constants {id} - camera)
           (:predicates (in-view ?c - camera ?l - location) (aimed ?c - camera ?l - location)
                        (recorded ?l - location) (snapped ?l - location))
           (:action {id}.ptz
             :parameters (?l - location)
             :precondition (in-view {id} ?l)
             :effect (aimed {id} ?l))
           (:action {id}.record
             :parameters (?l - location)
             :precondition (aimed {id} ?l)
             :effect (recorded ?l))
           (:action {id}.snap
             :parameters (?l - location)
             :precondition (aimed {id} ?l)
             :effect (snapped ?l)))"
    );
    parse_domain(&text).expect("camera model parses")
}

fn result(req: &ActionRequest, success: bool, reason: Option<&str>, observation: Option<ObservationBody>) -> Payload {
    Payload::ActionResult(ActionResult {
        step: req.step,
        action: req.action.clone(),
        args: req.args.clone(),
        success,
        reason: reason.map(str::to_string),
        observation,
    })
}

fn refuse_action(ctx: &mut AgentCtx<'_>, envelope: &Envelope, req: &ActionRequest, reason: &str) {
    let mut body = req.clone();
    body.reason = Some(reason.to_string());
    ctx.reply(envelope, Performative::Refuse, Payload::ActionRequest(body));
}

/// Answers a call for proposals from the bidder's local model.
fn answer_cfp(ctx: &mut AgentCtx<'_>, envelope: &Envelope, bidder: &Bidder, own_facts: &[Atom], body: &PlanRequestBody) {
    let goal: Result<Vec<Literal>, _> = body.goal.iter().map(|g| g.parse()).collect();
    let Ok(goal) = goal else { return };
    let mut facts: Vec<Atom> = body.facts.iter().filter_map(|f| f.parse().ok()).collect();
    facts.extend_from_slice(own_facts);
    match bidder.respond(ctx.id, &facts, &goal) {
        Bid::Propose(proposal) => {
            debug!("{} proposes cost {} for {:?}", ctx.id, proposal.cost, proposal.covered);
            ctx.reply(envelope, Performative::Propose, Payload::ProposalBody(proposal));
        }
        Bid::Refuse(reason) => {
            let mut refusal = body.clone();
            refusal.reason = Some(reason);
            ctx.reply(envelope, Performative::Refuse, Payload::PlanRequest(refusal));
        }
        Bid::Silent => {}
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Work {
    Move { to: String },
    Report { location: String },
    /// Waiting for the answer to the query on this conversation.
    Login { query: String },
}

#[derive(Clone, Debug, PartialEq)]
struct Pending {
    request: ActionRequest,
    executor: AgentId,
    conversation: String,
    due: Option<Tick>,
    work: Work,
}

/// Mobile base with an IR thermometer and an onboard login screen.
pub struct Turtlebot {
    id: AgentId,
    position: String,
    period: Tick,
    interface: AgentId,
    pub bidder: Bidder,
    pending: Option<Pending>,
}

impl Turtlebot {
    pub fn new(id: &str, position: &str, interface: &str, bidder: Bidder, period: Tick) -> Self {
        Turtlebot {
            id: id.to_string(),
            position: position.to_string(),
            period,
            interface: interface.to_string(),
            bidder,
            pending: None,
        }
    }

    pub fn position(&self) -> &str {
        &self.position
    }

    fn on_request(&mut self, ctx: &mut AgentCtx<'_>, envelope: &Envelope, req: &ActionRequest) {
        if self.pending.is_some() {
            return refuse_action(ctx, envelope, req, "busy");
        }
        let fail = |ctx: &mut AgentCtx<'_>, reason: &str| ctx.reply(envelope, Performative::Confirm, result(req, false, Some(reason), None));
        let work = match (req.action.as_str(), req.args.as_slice()) {
            ("move", [from, to]) => {
                if *from != self.position {
                    return fail(ctx, "wrong-position");
                }
                match ctx.env.edge_weight(from, to) {
                    Some(w) => (Work::Move { to: to.clone() }, Some(ctx.now + w)),
                    None => return fail(ctx, "no-edge"),
                }
            }
            ("report-temp-ir", [location]) => {
                if *location != self.position {
                    return fail(ctx, "wrong-position");
                }
                (Work::Report { location: location.clone() }, Some(ctx.now + 1))
            }
            ("present-login", [location]) => {
                if *location != self.position {
                    return fail(ctx, "wrong-position");
                }
                let query = ctx.new_conversation();
                let body = QueryBody { question: "login".into(), about: location.clone() };
                let interface = self.interface.clone();
                ctx.send(Performative::Query, &interface, &query, Payload::QueryBody(body));
                (Work::Login { query }, None)
            }
            _ => return refuse_action(ctx, envelope, req, "unknown-action"),
        };
        self.pending = Some(Pending {
            request: req.clone(),
            executor: envelope.sender.clone(),
            conversation: envelope.conversation_id.clone(),
            due: work.1,
            work: work.0,
        });
    }

    fn complete(&mut self, ctx: &mut AgentCtx<'_>, pending: Pending) {
        let payload = match &pending.work {
            Work::Move { to } => match ctx.env.move_agent(&self.id, to) {
                Ok(()) => {
                    self.position = to.clone();
                    let state = StateUpdate::AgentState { agent: self.id.clone(), location: to.clone() };
                    let conversation = format!("{}:state", self.id);
                    ctx.broadcast(Performative::Inform, &conversation, Payload::StateUpdate(state));
                    result(&pending.request, true, None, None)
                }
                Err(e) => result(&pending.request, false, Some(&e), None),
            },
            Work::Report { location } => {
                let observation = ObservationBody {
                    observer: self.id.clone(),
                    quantity: Quantity::Temperature,
                    location: location.clone(),
                    value: ctx.env.temperature(location),
                    observed_at: ctx.now,
                };
                result(&pending.request, true, None, Some(observation))
            }
            Work::Login { .. } => result(&pending.request, true, None, None),
        };
        ctx.send(Performative::Confirm, &pending.executor, &pending.conversation, payload);
    }
}

impl Behavior for Turtlebot {
    fn advert(&self) -> CapabilityAdvert {
        CapabilityAdvert::new(&self.id, AgentKind::Actuator, Some(&self.position), self.period)
            .with_fragment(turtlebot_fragment(&self.id))
    }

    fn on_tick(&mut self, ctx: &mut AgentCtx<'_>) {
        self.bidder.on_tick(ctx.now);
        if self.pending.as_ref().is_some_and(|p| p.due.is_some_and(|d| d <= ctx.now)) {
            let pending = self.pending.take().expect("checked");
            self.complete(ctx, pending);
        }
    }

    fn on_message(&mut self, ctx: &mut AgentCtx<'_>, envelope: &Envelope) {
        self.bidder.observe(envelope);
        match (&envelope.performative, &envelope.payload) {
            (Performative::Request, Payload::ActionRequest(req)) => self.on_request(ctx, envelope, req),
            (Performative::Inform, Payload::QueryAnswer(QueryAnswer { answer })) => {
                let waiting = matches!(&self.pending, Some(Pending { work: Work::Login { query }, .. }) if *query == envelope.conversation_id);
                if waiting {
                    info!("{}: login answered by {} ({answer})", self.id, envelope.sender);
                    let pending = self.pending.take().expect("checked");
                    self.complete(ctx, pending);
                }
            }
            (Performative::Cancel, Payload::CancelBody(CancelBody { step, .. })) => {
                if self.pending.as_ref().is_some_and(|p| Some(p.request.step) == *step && p.executor == envelope.sender) {
                    self.pending = None;
                }
            }
            (Performative::CallForProposals, Payload::PlanRequest(body)) => {
                let own = [Atom::new("at", [self.id.as_str(), self.position.as_str()])];
                answer_cfp(ctx, envelope, &self.bidder, &own, body);
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

/// Fixed sensor reporting the temperature at its node.
pub struct StationarySensor {
    id: AgentId,
    location: String,
    predicate: String,
    period: Tick,
    pub bidder: Bidder,
    pending: Vec<(Tick, ActionRequest, AgentId, String)>,
}

impl StationarySensor {
    pub fn new(id: &str, location: &str, predicate: &str, objects: Vec<TypedName>, period: Tick, liveness: LivenessConfig) -> Self {
        let mut bidder = Bidder::new(sensor_fragment(id, location, predicate), objects, Vec::new());
        bidder.liveness_cfg = liveness;
        StationarySensor {
            id: id.to_string(),
            location: location.to_string(),
            predicate: predicate.to_string(),
            period,
            bidder,
            pending: Vec::new(),
        }
    }
}

impl Behavior for StationarySensor {
    fn advert(&self) -> CapabilityAdvert {
        CapabilityAdvert::new(&self.id, AgentKind::Sensor, Some(&self.location), self.period)
            .with_fragment(sensor_fragment(&self.id, &self.location, &self.predicate))
            .with_sensed(vec![Atom::new(&self.predicate, [self.location.as_str()])])
    }

    fn on_tick(&mut self, ctx: &mut AgentCtx<'_>) {
        self.bidder.on_tick(ctx.now);
        let now = ctx.now;
        let (due, rest): (Vec<_>, Vec<_>) = std::mem::take(&mut self.pending).into_iter().partition(|p| p.0 <= now);
        self.pending = rest;
        for (_, req, executor, conversation) in due {
            let observation = ObservationBody {
                observer: self.id.clone(),
                quantity: Quantity::Temperature,
                location: self.location.clone(),
                value: ctx.env.temperature(&self.location),
                observed_at: now,
            };
            ctx.send(Performative::Confirm, &executor, &conversation, result(&req, true, None, Some(observation)));
        }
    }

    fn on_message(&mut self, ctx: &mut AgentCtx<'_>, envelope: &Envelope) {
        self.bidder.observe(envelope);
        match (&envelope.performative, &envelope.payload) {
            (Performative::Request, Payload::ActionRequest(req)) => {
                if req.action != "sense" || !req.args.is_empty() {
                    return refuse_action(ctx, envelope, req, "unknown-action");
                }
                self.pending.push((ctx.now + 1, req.clone(), envelope.sender.clone(), envelope.conversation_id.clone()));
            }
            (Performative::Cancel, Payload::CancelBody(CancelBody { step, .. })) => {
                self.pending.retain(|p| !(Some(p.1.step) == *step && p.2 == envelope.sender));
            }
            (Performative::CallForProposals, Payload::PlanRequest(body)) => {
                answer_cfp(ctx, envelope, &self.bidder, &[], body);
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

/// PTZ camera with motion detection over its fields of view. A detection is
/// broadcast as an observation and turned into a validation goal.
pub struct Camera {
    id: AgentId,
    location: String,
    views: Vec<String>,
    requester: AgentId,
    period: Tick,
    pub bidder: Bidder,
    pending: Vec<(Tick, ActionRequest, AgentId, String)>,
    detections: u64,
}

impl Camera {
    pub fn new(id: &str, location: &str, views: Vec<String>, requester: &str, bidder: Bidder, period: Tick) -> Self {
        Camera {
            id: id.to_string(),
            location: location.to_string(),
            views,
            requester: requester.to_string(),
            period,
            bidder,
            pending: Vec::new(),
            detections: 0,
        }
    }

    pub fn detections(&self) -> u64 {
        self.detections
    }
}

impl Behavior for Camera {
    fn advert(&self) -> CapabilityAdvert {
        CapabilityAdvert::new(&self.id, AgentKind::Actuator, Some(&self.location), self.period)
            .with_fragment(camera_fragment(&self.id))
    }

    fn on_tick(&mut self, ctx: &mut AgentCtx<'_>) {
        self.bidder.on_tick(ctx.now);
        let now = ctx.now;
        let (due, rest): (Vec<_>, Vec<_>) = std::mem::take(&mut self.pending).into_iter().partition(|p| p.0 <= now);
        self.pending = rest;
        for (_, req, executor, conversation) in due {
            ctx.send(Performative::Confirm, &executor, &conversation, result(&req, true, None, None));
        }
        for view in self.views.clone() {
            if !ctx.env.motion_at(&view) {
                continue;
            }
            self.detections += 1;
            info!("tick {now}: {} detected motion at {view}", self.id);
            let observation = ObservationBody {
                observer: self.id.clone(),
                quantity: Quantity::Motion,
                location: view.clone(),
                value: None,
                observed_at: now,
            };
            let conversation = ctx.new_conversation();
            ctx.broadcast(Performative::Confirm, &conversation, Payload::Observation(observation));
            let goal = GoalSubmission {
                goal: vec![format!("(validated {view})")],
                facts: vec![format!("(motion-detected {view})")],
                mode: None,
            };
            let requester = self.requester.clone();
            ctx.send(Performative::Request, &requester, &conversation, Payload::GoalSubmission(goal));
        }
    }

    fn on_message(&mut self, ctx: &mut AgentCtx<'_>, envelope: &Envelope) {
        self.bidder.observe(envelope);
        match (&envelope.performative, &envelope.payload) {
            (Performative::Request, Payload::ActionRequest(req)) => {
                let known = matches!(req.action.as_str(), "ptz" | "record" | "snap") && req.args.len() == 1;
                if !known {
                    return refuse_action(ctx, envelope, req, "unknown-action");
                }
                self.pending.push((ctx.now + 1, req.clone(), envelope.sender.clone(), envelope.conversation_id.clone()));
            }
            (Performative::Cancel, Payload::CancelBody(CancelBody { step, .. })) => {
                self.pending.retain(|p| !(Some(p.1.step) == *step && p.2 == envelope.sender));
            }
            (Performative::CallForProposals, Payload::PlanRequest(body)) => {
                answer_cfp(ctx, envelope, &self.bidder, &[], body);
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

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpenQuery {
    pub asker: AgentId,
    pub question: String,
    pub about: String,
    pub asked_at: Tick,
}

/// The user interface: submits scripted goals, collects their outcomes and
/// holds agent queries until someone answers them.
pub struct Keyboard {
    id: AgentId,
    requester: AgentId,
    period: Tick,
    script: Vec<ScriptedGoal>,
    next: usize,
    auto: Option<AutoRespond>,
    open: BTreeMap<String, OpenQuery>,
    scheduled: Vec<(Tick, String)>,
    submitted: Vec<String>,
    outcomes: BTreeMap<String, StateUpdate>,
    refusals: BTreeMap<String, String>,
}

impl Keyboard {
    pub fn new(id: &str, requester: &str, mut script: Vec<ScriptedGoal>, auto: Option<AutoRespond>, period: Tick) -> Self {
        script.sort_by_key(|g| g.tick);
        Keyboard {
            id: id.to_string(),
            requester: requester.to_string(),
            period,
            script,
            next: 0,
            auto,
            open: BTreeMap::new(),
            scheduled: Vec::new(),
            submitted: Vec::new(),
            outcomes: BTreeMap::new(),
            refusals: BTreeMap::new(),
        }
    }

    pub fn open_queries(&self) -> &BTreeMap<String, OpenQuery> {
        &self.open
    }

    /// Conversation ids of the scripted goals, in submission order.
    pub fn submitted(&self) -> &[String] {
        &self.submitted
    }

    /// Final GoalStatus received per conversation.
    pub fn outcomes(&self) -> &BTreeMap<String, StateUpdate> {
        &self.outcomes
    }

    pub fn refusals(&self) -> &BTreeMap<String, String> {
        &self.refusals
    }

    /// Closes an open query so it can be answered once.
    pub fn take_query(&mut self, conversation: &str) -> Result<OpenQuery, SimError> {
        self.open
            .remove(conversation)
            .ok_or_else(|| SimError::NotFound(format!("no open query on conversation {conversation}")))
    }
}

impl Behavior for Keyboard {
    fn advert(&self) -> CapabilityAdvert {
        CapabilityAdvert::new(&self.id, AgentKind::Interface, None, self.period)
    }

    fn on_tick(&mut self, ctx: &mut AgentCtx<'_>) {
        while let Some(goal) = self.script.get(self.next).filter(|g| g.tick <= ctx.now) {
            let body = GoalSubmission { goal: goal.goal.clone(), facts: goal.facts.clone(), mode: goal.mode };
            self.next += 1;
            let conversation = ctx.new_conversation();
            info!("tick {}: submitting goal {} on {conversation}", ctx.now, body.goal.join(" "));
            let requester = self.requester.clone();
            ctx.send(Performative::Request, &requester, &conversation, Payload::GoalSubmission(body));
            self.submitted.push(conversation);
        }
        let now = ctx.now;
        let (due, rest): (Vec<_>, Vec<_>) = std::mem::take(&mut self.scheduled).into_iter().partition(|s| s.0 <= now);
        self.scheduled = rest;
        for (_, conversation) in due {
            let Ok(query) = self.take_query(&conversation) else { continue };
            let answer = self.auto.as_ref().map(|a| a.answer.clone()).unwrap_or_default();
            ctx.send(Performative::Inform, &query.asker, &conversation, Payload::QueryAnswer(QueryAnswer { answer }));
        }
    }

    fn on_message(&mut self, ctx: &mut AgentCtx<'_>, envelope: &Envelope) {
        match (&envelope.performative, &envelope.payload) {
            (Performative::Query, Payload::QueryBody(q)) => {
                self.open.insert(
                    envelope.conversation_id.clone(),
                    OpenQuery { asker: envelope.sender.clone(), question: q.question.clone(), about: q.about.clone(), asked_at: ctx.now },
                );
                if let Some(auto) = &self.auto {
                    self.scheduled.push((ctx.now + auto.delay, envelope.conversation_id.clone()));
                }
            }
            (Performative::Inform, Payload::StateUpdate(status @ StateUpdate::GoalStatus { .. })) => {
                self.outcomes.insert(envelope.conversation_id.clone(), status.clone());
            }
            (Performative::Refuse, Payload::PlanRequest(body)) => {
                self.refusals.insert(envelope.conversation_id.clone(), body.reason.clone().unwrap_or_default());
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fragments_parse_and_validate() {
        for d in [turtlebot_fragment("tb1"), sensor_fragment("s", "office2", "temperature-reported"), camera_fragment("cam")] {
            d.validate().unwrap();
            assert!(d.schemas.iter().all(|s| s.owner.as_deref() == Some(d.name.as_str())));
        }
    }

    #[test]
    fn fragments_compose() {
        let parts = vec![
            turtlebot_fragment("tb1"),
            sensor_fragment("sensor-office2", "office2", "temperature-reported"),
            sensor_fragment("sensor-confroom", "confroom", "temperature-reported"),
            camera_fragment("camera"),
        ];
        let composite = crate::strips::compose_domain(&parts).unwrap();
        assert_eq!(composite.schemas.len(), 8);
    }
}
