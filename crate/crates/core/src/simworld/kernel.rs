use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::acl::{
    AgentId, Envelope, GoalSubmission, Mode, Payload, Performative, QueryAnswer, StateUpdate, Tick,
};
use crate::agent::{start_agent, AgentRuntime, Behavior, LivenessTable};
use crate::bus::tcp::TcpTransport;
use crate::bus::{run_broker, Broker, BrokerConfig, BrokerHandle, DeliveryRecord, Transport, TransportKind};
use crate::planner::{PlannerBackend, SearchConfig};
use crate::reasoning::{
    Bidder, DomainMaintainer, ExecutorConfig, PlanExecutor, PlanRequester, PlanningAgent, RequesterConfig, DEFAULT_REQUESTER,
};

use super::agents::{camera_fragment, turtlebot_fragment, Camera, Keyboard, StationarySensor, Turtlebot};
use super::{AgentConfig, Health, SimError, Timeline, WorldConfig, WorldEvent, WorldSnapshot, WorldState};

/// Sender id of everything the operator console injects.
pub const OPERATOR_ID: &str = "operator-console";

/// Rounds of inbox draining per tick before the kernel gives up.
const MAX_DRAIN_ROUNDS: usize = 10_000;

/// Operator commands, as they arrive from the gateway or the CLI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    SubmitGoal {
        goal: Vec<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        facts: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mode: Option<Mode>,
    },
    RespondQuery {
        conversation_id: String,
        answer: String,
    },
    InjectFailure {
        agent: AgentId,
        health: Health,
    },
    SetMode {
        mode: Mode,
    },
}

#[derive(Clone, Debug)]
pub struct KernelConfig {
    pub world: WorldConfig,
    pub timeline: Timeline,
    pub mode: Mode,
    pub seed: u64,
    pub transport: TransportKind,
    pub planner: PlannerBackend,
}

impl KernelConfig {
    pub fn new(world: WorldConfig, timeline: Timeline, mode: Mode, seed: u64) -> Self {
        KernelConfig {
            world,
            timeline,
            mode,
            seed,
            transport: TransportKind::Inproc,
            planner: PlannerBackend::Internal(SearchConfig::optimal()),
        }
    }
}

struct Operator {
    transport: Box<dyn Transport>,
    seq: u64,
    conversations: u64,
}

enum Queued {
    Publish(Performative, AgentId, Option<String>, Payload),
}

/// Owns the clock. Each tick it steps the world, runs every live agent's
/// tick hook in a fixed order, then drains inboxes until nothing moves.
pub struct Kernel {
    handle: BrokerHandle,
    transport: TransportKind,
    world: WorldState,
    agents: Vec<AgentRuntime>,
    keyboard: Option<AgentId>,
    operator: Option<Operator>,
    queued: VecDeque<Queued>,
    fired: Vec<(Tick, WorldEvent)>,
}

fn build_agents(cfg: &KernelConfig) -> Vec<Box<dyn Behavior>> {
    let world = &cfg.world;
    let params = world.params;
    let statics = world.static_facts();
    let objects = world.map.locations();
    let interface = world.keyboard_id().unwrap_or(OPERATOR_ID).to_string();

    let mut out: Vec<Box<dyn Behavior>> = vec![
        Box::new(DomainMaintainer::new(statics.clone(), objects.clone()).with_liveness(params.liveness())),
        Box::new(PlanningAgent::new(cfg.planner.clone())),
        Box::new(PlanRequester::new(RequesterConfig {
            mode: cfg.mode,
            proposal_window: params.proposal_window,
            max_replans: params.max_replans,
            ..RequesterConfig::default()
        })),
        Box::new(PlanExecutor::new(ExecutorConfig { action_timeout: params.action_timeout, ..ExecutorConfig::default() })),
    ];
    let rank = |a: &AgentConfig| match a {
        AgentConfig::Keyboard { .. } => 0,
        AgentConfig::Turtlebot { .. } => 1,
        AgentConfig::Camera { .. } => 2,
        AgentConfig::StationarySensor { .. } => 3,
    };
    let mut placed: Vec<&AgentConfig> = world.agents.iter().collect();
    placed.sort_by_key(|a| rank(a));
    for agent in placed {
        let behavior: Box<dyn Behavior> = match agent {
            AgentConfig::Keyboard { id } => Box::new(Keyboard::new(
                id,
                DEFAULT_REQUESTER,
                cfg.timeline.goals.clone(),
                cfg.timeline.auto_respond.clone(),
                params.heartbeat_period,
            )),
            AgentConfig::Turtlebot { id, location } => {
                let mut bidder = Bidder::new(turtlebot_fragment(id), objects.clone(), statics.clone());
                bidder.defer_to_stationary = true;
                bidder.liveness_cfg = params.liveness();
                Box::new(Turtlebot::new(id, location, &interface, bidder, params.heartbeat_period))
            }
            AgentConfig::Camera { id, location, views } => {
                let mut bidder = Bidder::new(camera_fragment(id), objects.clone(), statics.clone());
                bidder.liveness_cfg = params.liveness();
                Box::new(Camera::new(id, location, views.clone(), DEFAULT_REQUESTER, bidder, params.heartbeat_period))
            }
            AgentConfig::StationarySensor { id, location, predicate } => Box::new(StationarySensor::new(
                id,
                location,
                predicate,
                objects.clone(),
                params.heartbeat_period,
                params.liveness(),
            )),
        };
        out.push(behavior);
    }
    out
}

impl Kernel {
    /// Starts a broker and every agent at tick 0.
    pub fn boot(cfg: KernelConfig) -> Result<Self, SimError> {
        cfg.world.validate()?;
        cfg.timeline.validate(&cfg.world)?;
        let broker_cfg = match cfg.transport {
            TransportKind::Inproc => BrokerConfig::inproc(),
            TransportKind::Tcp => BrokerConfig::tcp("127.0.0.1:0"),
        };
        let handle = run_broker(&broker_cfg)?;
        let world = WorldState::new(&cfg.world, &cfg.timeline, cfg.seed);
        let mut kernel = Kernel {
            handle,
            transport: cfg.transport,
            world,
            agents: Vec::new(),
            keyboard: cfg.world.keyboard_id().map(str::to_string),
            operator: None,
            queued: VecDeque::new(),
            fired: Vec::new(),
        };
        for behavior in build_agents(&cfg) {
            let id = behavior.advert().agent_id;
            let transport = kernel.connect(&id)?;
            let runtime = start_agent(behavior, transport, 0, &mut kernel.world)?;
            kernel.agents.push(runtime);
        }
        kernel.drain()?;
        info!("booted {} agents over {}", kernel.agents.len(), cfg.transport);
        Ok(kernel)
    }

    fn connect(&self, id: &str) -> Result<Box<dyn Transport>, SimError> {
        Ok(match self.transport {
            TransportKind::Inproc => Box::new(self.handle.connect_inproc(id)?),
            TransportKind::Tcp => {
                let addr = self.handle.local_addr().expect("tcp broker has an address");
                Box::new(TcpTransport::connect(addr, id)?)
            }
        })
    }

    pub fn now(&self) -> Tick {
        self.world.clock
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn snapshot(&self) -> WorldSnapshot {
        self.world.snapshot()
    }

    /// World events fired so far, with their tick.
    pub fn fired(&self) -> &[(Tick, WorldEvent)] {
        &self.fired
    }

    pub fn broker(&self) -> Arc<Mutex<Broker>> {
        self.handle.broker()
    }

    pub fn transcript(&self) -> Vec<DeliveryRecord> {
        self.handle.transcript()
    }

    pub fn agent_ids(&self) -> Vec<&str> {
        self.agents.iter().map(|a| a.id()).collect()
    }

    pub fn behavior<T: 'static>(&self, id: &str) -> Option<&T> {
        self.agents.iter().find(|a| a.id() == id).and_then(|a| a.behavior().as_any().downcast_ref())
    }

    fn behavior_mut<T: 'static>(&mut self, id: &str) -> Option<&mut T> {
        self.agents
            .iter_mut()
            .find(|a| a.id() == id)
            .and_then(|a| a.behavior_mut().as_any_mut().downcast_mut())
    }

    /// The domain maintainer's view of who is alive.
    pub fn liveness(&self) -> Option<&LivenessTable> {
        self.agents.iter().find_map(|a| a.behavior().as_any().downcast_ref::<DomainMaintainer>()).map(|dm| dm.table())
    }

    pub fn keyboard(&self) -> Option<&Keyboard> {
        self.keyboard.as_deref().and_then(|id| self.behavior(id))
    }

    /// Accepts an operator command. Its envelopes go out at the start of the
    /// next tick; a failure takes effect at the next tick.
    pub fn submit(&mut self, command: Command) -> Result<(), SimError> {
        match command {
            Command::SubmitGoal { goal, facts, mode } => {
                let body = GoalSubmission { goal, facts, mode };
                self.queued.push_back(Queued::Publish(
                    Performative::Request,
                    DEFAULT_REQUESTER.into(),
                    None,
                    Payload::GoalSubmission(body),
                ));
            }
            Command::RespondQuery { conversation_id, answer } => {
                let keyboard = self.keyboard.clone().ok_or_else(|| SimError::NotFound("no keyboard in this world".into()))?;
                let query = self
                    .behavior_mut::<Keyboard>(&keyboard)
                    .expect("keyboard runs a Keyboard")
                    .take_query(&conversation_id)?;
                self.queued.push_back(Queued::Publish(
                    Performative::Inform,
                    query.asker,
                    Some(conversation_id),
                    Payload::QueryAnswer(QueryAnswer { answer }),
                ));
            }
            Command::InjectFailure { agent, health } => {
                if !self.agents.iter().any(|a| a.id() == agent) {
                    return Err(SimError::NotFound(format!("unknown agent {agent}")));
                }
                let at = self.now() + 1;
                self.world.schedule(at, WorldEvent::Health { agent, health });
            }
            Command::SetMode { mode } => {
                self.queued.push_back(Queued::Publish(
                    Performative::Request,
                    DEFAULT_REQUESTER.into(),
                    None,
                    Payload::StateUpdate(StateUpdate::SetMode { mode }),
                ));
            }
        }
        Ok(())
    }

    fn publish_queued(&mut self) -> Result<(), SimError> {
        if self.queued.is_empty() {
            return Ok(());
        }
        if self.operator.is_none() {
            let transport = self.connect(OPERATOR_ID)?;
            self.operator = Some(Operator { transport, seq: 0, conversations: 0 });
        }
        let now = self.now();
        let operator = self.operator.as_mut().expect("connected above");
        while let Some(Queued::Publish(performative, recipient, conversation, payload)) = self.queued.pop_front() {
            operator.seq += 1;
            let conversation_id = conversation.unwrap_or_else(|| {
                operator.conversations += 1;
                format!("{OPERATOR_ID}:{}", operator.conversations)
            });
            let envelope = Envelope {
                msg_id: format!("{OPERATOR_ID}/{}", operator.seq),
                conversation_id,
                performative,
                sender: OPERATOR_ID.into(),
                recipient,
                payload,
                sim_time: now,
                seq: operator.seq,
            };
            operator.transport.publish(&envelope)?;
        }
        Ok(())
    }

    fn drain(&mut self) -> Result<(), SimError> {
        let now = self.now();
        for _ in 0..MAX_DRAIN_ROUNDS {
            let mut moved = 0;
            for runtime in &mut self.agents {
                if self.world.is_up(runtime.id()) {
                    moved += runtime.deliver(now, &mut self.world)?;
                } else {
                    runtime.discard()?;
                }
            }
            if moved == 0 {
                return Ok(());
            }
        }
        Err(SimError::Config(format!("agents did not quiesce at tick {now}")))
    }

    /// Advances the simulation by one tick.
    pub fn step(&mut self) -> Result<(), SimError> {
        let fired = self.world.world_step();
        let now = self.now();
        for event in fired {
            debug!("tick {now}: {event:?}");
            self.fired.push((now, event));
        }
        self.publish_queued()?;
        for runtime in &mut self.agents {
            if self.world.is_up(runtime.id()) {
                runtime.tick(now, &mut self.world)?;
            } else {
                runtime.discard()?;
            }
        }
        self.drain()
    }

    pub fn run_until(&mut self, end: Tick) -> Result<(), SimError> {
        while self.now() < end {
            self.step()?;
        }
        Ok(())
    }

    /// Stops the broker and returns the transcript.
    pub fn shutdown(self) -> Result<Vec<DeliveryRecord>, SimError> {
        let Kernel { handle, agents, operator, .. } = self;
        drop(agents);
        drop(operator);
        Ok(handle.shutdown()?)
    }
}
