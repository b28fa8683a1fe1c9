use std::any::Any;
use std::collections::{BTreeMap, BTreeSet};

use log::{info, warn};

use crate::acl::{AgentId, AgentKind, CapabilityEvent, Envelope, Payload, Performative, StateUpdate};
use crate::agent::{AgentCtx, Behavior, CapabilityAdvert, HeartbeatOutcome, LivenessConfig, LivenessTable};
use crate::strips::pddl::print_domain;
use crate::strips::{compose_domain, Atom, DomainModel, StripsError, TypedName};

use super::DEFAULT_DM;

/// Composes live adverts into the system model and tracks beliefs about
/// agent positions.
pub struct DomainMaintainer {
    id: AgentId,
    liveness_cfg: LivenessConfig,
    table: LivenessTable,
    quarantined: BTreeSet<AgentId>,
    model: DomainModel,
    static_facts: Vec<Atom>,
    objects: Vec<TypedName>,
    positions: BTreeMap<AgentId, String>,
    changes: u64,
}

impl DomainMaintainer {
    pub fn new(static_facts: Vec<Atom>, objects: Vec<TypedName>) -> Self {
        DomainMaintainer {
            id: DEFAULT_DM.to_string(),
            liveness_cfg: LivenessConfig::default(),
            table: LivenessTable::new(),
            quarantined: BTreeSet::new(),
            model: DomainModel::new("composite"),
            static_facts,
            objects,
            positions: BTreeMap::new(),
            changes: 0,
        }
    }

    pub fn with_id(mut self, id: &str) -> Self {
        self.id = id.to_string();
        self
    }

    pub fn with_liveness(mut self, cfg: LivenessConfig) -> Self {
        self.liveness_cfg = cfg;
        self
    }

    pub fn model(&self) -> &DomainModel {
        &self.model
    }

    pub fn table(&self) -> &LivenessTable {
        &self.table
    }

    pub fn quarantined(&self) -> &BTreeSet<AgentId> {
        &self.quarantined
    }

    /// Number of capability-change broadcasts so far.
    pub fn changes(&self) -> u64 {
        self.changes
    }

    fn compose_alive(&self) -> Result<DomainModel, StripsError> {
        let fragments: Vec<DomainModel> = self
            .table
            .alive()
            .filter(|e| !self.quarantined.contains(&e.advert.agent_id))
            .map(|e| e.advert.fragment.clone())
            .collect();
        compose_domain(&fragments)
    }

    /// Recomposes after a liveness transition of `agent` and returns the
    /// broadcast announcing it. A composition conflict quarantines the agent
    /// and keeps the previous model.
    pub fn on_capability_change(&mut self, agent: &str, event: CapabilityEvent) -> StateUpdate {
        if matches!(event, CapabilityEvent::New | CapabilityEvent::Updated | CapabilityEvent::Resurrected) {
            self.quarantined.remove(agent);
        }
        let event = match self.compose_alive() {
            Ok(model) => {
                self.model = model;
                event
            }
            Err(e) => {
                warn!("quarantining {agent}: {e}");
                self.quarantined.insert(agent.to_string());
                CapabilityEvent::Quarantined
            }
        };
        self.changes += 1;
        StateUpdate::CapabilityChange {
            agent: agent.to_string(),
            event,
            alive: self.table.alive_ids().into_iter().filter(|a| !self.quarantined.contains(a)).collect(),
            schemas: self.model.schemas.iter().map(|s| s.qualified_name()).collect(),
        }
    }

    /// Static facts plus `(at agent location)` for live agents whose model
    /// declares `at` with themselves as a constant.
    pub fn beliefs(&self) -> BTreeSet<Atom> {
        let mut facts: BTreeSet<Atom> = self.static_facts.iter().cloned().collect();
        for entry in self.table.alive() {
            let advert: &CapabilityAdvert = &entry.advert;
            let declares_at = advert.fragment.predicate("at").is_some_and(|p| p.params.len() == 2)
                && advert.fragment.constant_type(&advert.agent_id).is_some();
            if !declares_at {
                continue;
            }
            if let Some(loc) = self.positions.get(&advert.agent_id).or(advert.location.as_ref()) {
                facts.insert(Atom::new("at", [advert.agent_id.as_str(), loc.as_str()]));
            }
        }
        facts
    }

    pub fn snapshot(&self) -> StateUpdate {
        StateUpdate::ModelSnapshot {
            domain: print_domain(&self.model),
            facts: self.beliefs().iter().map(ToString::to_string).collect(),
            objects: self.objects.iter().map(ToString::to_string).collect(),
        }
    }

    fn announce(&self, ctx: &mut AgentCtx<'_>, update: StateUpdate) {
        let conversation = format!("{}:capabilities", self.id);
        ctx.broadcast(Performative::Inform, &conversation, Payload::StateUpdate(update));
    }
}

impl Behavior for DomainMaintainer {
    fn advert(&self) -> CapabilityAdvert {
        CapabilityAdvert::new(&self.id, AgentKind::Reasoner, None, self.liveness_cfg.heartbeat_period)
    }

    fn on_tick(&mut self, ctx: &mut AgentCtx<'_>) {
        if !self.liveness_cfg.is_sweep_tick(ctx.now) {
            return;
        }
        for agent in self.table.liveness_sweep(ctx.now, self.liveness_cfg.death_timeout) {
            info!("tick {}: {agent} declared dead", ctx.now);
            let update = self.on_capability_change(&agent, CapabilityEvent::Dead);
            self.announce(ctx, update);
        }
    }

    fn on_message(&mut self, ctx: &mut AgentCtx<'_>, envelope: &Envelope) {
        match (&envelope.performative, &envelope.payload) {
            (Performative::Inform, Payload::CapabilityAdvertBody(body)) => {
                let outcome = match self.table.record_heartbeat(envelope) {
                    Ok(o) => o,
                    Err(e) => {
                        warn!("rejected heartbeat {}: {e}", envelope.msg_id);
                        return;
                    }
                };
                if let Some(loc) = &body.location {
                    self.positions.insert(body.agent_id.clone(), loc.clone());
                }
                let event = match outcome {
                    HeartbeatOutcome::Unchanged => return,
                    HeartbeatOutcome::New => CapabilityEvent::New,
                    HeartbeatOutcome::Updated => CapabilityEvent::Updated,
                    HeartbeatOutcome::Resurrected => CapabilityEvent::Resurrected,
                };
                let update = self.on_capability_change(&body.agent_id, event);
                self.announce(ctx, update);
            }
            (Performative::Inform, Payload::StateUpdate(StateUpdate::AgentState { agent, location })) => {
                if *agent == envelope.sender {
                    self.positions.insert(agent.clone(), location.clone());
                }
            }
            (Performative::Request, Payload::StateUpdate(StateUpdate::ModelRequest)) => {
                ctx.reply(envelope, Performative::Inform, Payload::StateUpdate(self.snapshot()));
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
