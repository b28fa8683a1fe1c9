use std::any::Any;
use std::collections::{BTreeMap, VecDeque};

use log::trace;

use crate::acl::{AgentId, Envelope, Payload, Performative, Tick, BROADCAST};
use crate::bus::{BusError, Filter, Transport};

use super::advert::CapabilityAdvert;

pub const BROADCAST_CACHE_SIZE: usize = 256;

/// The physical world as an acting agent sees it. Reasoning agents never
/// touch it.
pub trait Environment {
    fn temperature(&self, location: &str) -> Option<f64>;
    fn position(&self, agent: &str) -> Option<String>;
    fn edge_weight(&self, a: &str, b: &str) -> Option<Tick>;
    /// Moves a mobile agent along an edge.
    fn move_agent(&mut self, agent: &str, to: &str) -> Result<(), String>;
    /// True when motion fired at `location` during the current tick.
    fn motion_at(&self, location: &str) -> bool;
}

/// An empty world, for agents that do not act on one.
pub struct NoEnvironment;

impl Environment for NoEnvironment {
    fn temperature(&self, _: &str) -> Option<f64> {
        None
    }
    fn position(&self, _: &str) -> Option<String> {
        None
    }
    fn edge_weight(&self, _: &str, _: &str) -> Option<Tick> {
        None
    }
    fn move_agent(&mut self, agent: &str, _: &str) -> Result<(), String> {
        Err(format!("{agent} cannot move without a world"))
    }
    fn motion_at(&self, _: &str) -> bool {
        false
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outgoing {
    pub performative: Performative,
    pub recipient: AgentId,
    pub conversation_id: String,
    pub payload: Payload,
}

/// What a behavior sees while handling one event.
pub struct AgentCtx<'a> {
    pub id: &'a str,
    pub now: Tick,
    pub env: &'a mut dyn Environment,
    outbox: &'a mut Vec<Outgoing>,
    conversations: &'a mut u64,
}

impl AgentCtx<'_> {
    pub fn send(&mut self, performative: Performative, recipient: &str, conversation_id: &str, payload: Payload) {
        self.outbox.push(Outgoing {
            performative,
            recipient: recipient.to_string(),
            conversation_id: conversation_id.to_string(),
            payload,
        });
    }

    pub fn broadcast(&mut self, performative: Performative, conversation_id: &str, payload: Payload) {
        self.send(performative, BROADCAST, conversation_id, payload);
    }

    /// Answers `to` on its conversation.
    pub fn reply(&mut self, to: &Envelope, performative: Performative, payload: Payload) {
        let (sender, conversation) = (to.sender.clone(), to.conversation_id.clone());
        self.send(performative, &sender, &conversation, payload);
    }

    /// A fresh conversation id, `<agent>:<n>`.
    pub fn new_conversation(&mut self) -> String {
        *self.conversations += 1;
        format!("{}:{}", self.id, self.conversations)
    }
}

/// Agent logic. Handlers run one at a time, in delivery order.
pub trait Behavior: Send {
    /// The advert sent with every heartbeat.
    fn advert(&self) -> CapabilityAdvert;
    fn on_start(&mut self, _ctx: &mut AgentCtx<'_>) {}
    fn on_tick(&mut self, _ctx: &mut AgentCtx<'_>) {}
    fn on_message(&mut self, _ctx: &mut AgentCtx<'_>, _envelope: &Envelope) {}
    fn as_any(&self) -> &dyn Any;
    fn as_any_mut(&mut self) -> &mut dyn Any;
}

pub type Handler = Box<dyn FnMut(&mut AgentCtx<'_>, &Envelope) + Send>;

/// A behavior assembled from per-performative closures.
pub struct Handlers {
    advert: CapabilityAdvert,
    handlers: BTreeMap<Performative, Vec<Handler>>,
}

impl Handlers {
    pub fn new(advert: CapabilityAdvert) -> Self {
        Handlers { advert, handlers: BTreeMap::new() }
    }

    pub fn on(mut self, performative: Performative, handler: impl FnMut(&mut AgentCtx<'_>, &Envelope) + Send + 'static) -> Self {
        self.handlers.entry(performative).or_default().push(Box::new(handler));
        self
    }
}

impl Behavior for Handlers {
    fn advert(&self) -> CapabilityAdvert {
        self.advert.clone()
    }

    fn on_message(&mut self, ctx: &mut AgentCtx<'_>, envelope: &Envelope) {
        if let Some(list) = self.handlers.get_mut(&envelope.performative) {
            for handler in list {
                handler(ctx, envelope);
            }
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// Connects a behavior to the bus: heartbeats, envelope numbering, the
/// broadcast cache and sequential dispatch.
pub struct AgentRuntime {
    id: AgentId,
    transport: Box<dyn Transport>,
    behavior: Box<dyn Behavior>,
    started_at: Tick,
    heartbeat_period: Tick,
    seq: u64,
    conversations: u64,
    broadcast_cache: VecDeque<Envelope>,
}

/// Subscribes the agent to every ACL topic and publishes its first heartbeat.
pub fn start_agent(
    behavior: Box<dyn Behavior>,
    mut transport: Box<dyn Transport>,
    now: Tick,
    env: &mut dyn Environment,
) -> Result<AgentRuntime, BusError> {
    let advert = behavior.advert();
    if advert.agent_id != transport.client_id() {
        return Err(BusError::Forbidden(format!(
            "advert for {} on connection {}",
            advert.agent_id,
            transport.client_id()
        )));
    }
    for p in Performative::ALL {
        transport.subscribe(&crate::acl::topic_for(p), Filter::Own)?;
    }
    let mut runtime = AgentRuntime {
        id: advert.agent_id.clone(),
        transport,
        behavior,
        started_at: now,
        heartbeat_period: advert.heartbeat_period.max(1),
        seq: 0,
        conversations: 0,
        broadcast_cache: VecDeque::new(),
    };
    runtime.heartbeat(now)?;
    runtime.run(now, env, |b, ctx| b.on_start(ctx))?;
    Ok(runtime)
}

impl AgentRuntime {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn behavior(&self) -> &dyn Behavior {
        self.behavior.as_ref()
    }

    pub fn behavior_mut(&mut self) -> &mut dyn Behavior {
        self.behavior.as_mut()
    }

    pub fn broadcast_cache(&self) -> &VecDeque<Envelope> {
        &self.broadcast_cache
    }

    fn heartbeat(&mut self, now: Tick) -> Result<(), BusError> {
        let body = self.behavior.advert().to_body();
        let out = Outgoing {
            performative: Performative::Inform,
            recipient: BROADCAST.to_string(),
            conversation_id: format!("{}:heartbeat", self.id),
            payload: Payload::CapabilityAdvertBody(body),
        };
        self.publish(out, now)
    }

    fn publish(&mut self, out: Outgoing, now: Tick) -> Result<(), BusError> {
        self.seq += 1;
        let envelope = Envelope {
            msg_id: format!("{}/{}", self.id, self.seq),
            conversation_id: out.conversation_id,
            performative: out.performative,
            sender: self.id.clone(),
            recipient: out.recipient,
            payload: out.payload,
            sim_time: now,
            seq: self.seq,
        };
        trace!("{} -> {} {}", envelope.sender, envelope.recipient, envelope.performative);
        self.transport.publish(&envelope)?;
        Ok(())
    }

    fn run(
        &mut self,
        now: Tick,
        env: &mut dyn Environment,
        f: impl FnOnce(&mut dyn Behavior, &mut AgentCtx<'_>),
    ) -> Result<(), BusError> {
        let mut outbox = Vec::new();
        {
            let mut ctx = AgentCtx {
                id: &self.id,
                now,
                env,
                outbox: &mut outbox,
                conversations: &mut self.conversations,
            };
            f(self.behavior.as_mut(), &mut ctx);
        }
        for out in outbox {
            self.publish(out, now)?;
        }
        Ok(())
    }

    /// Heartbeat when due, then the behavior's tick hook.
    pub fn tick(&mut self, now: Tick, env: &mut dyn Environment) -> Result<(), BusError> {
        if now > self.started_at && (now - self.started_at).is_multiple_of(self.heartbeat_period) {
            self.heartbeat(now)?;
        }
        self.run(now, env, |b, ctx| b.on_tick(ctx))
    }

    /// Handles everything in the inbox; returns how many envelopes arrived.
    pub fn deliver(&mut self, now: Tick, env: &mut dyn Environment) -> Result<usize, BusError> {
        let inbox = self.transport.poll()?;
        let n = inbox.len();
        for envelope in inbox {
            if envelope.is_broadcast() {
                if self.broadcast_cache.len() == BROADCAST_CACHE_SIZE {
                    self.broadcast_cache.pop_front();
                }
                self.broadcast_cache.push_back(envelope.clone());
            }
            self.run(now, env, |b, ctx| b.on_message(ctx, &envelope))?;
        }
        Ok(n)
    }

    /// Drops the inbox unread (the agent is down).
    pub fn discard(&mut self) -> Result<usize, BusError> {
        Ok(self.transport.poll()?.len())
    }
}
