//! Deterministic smart-office simulation: the map, world ground truth, the
//! concrete actuator and sensor agents, and the tick kernel that drives them
//! over the bus.

mod agents;
mod kernel;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acl::{AgentId, Mode, Tick};
use crate::agent::{Environment, LivenessConfig, DEFAULT_DEATH_TIMEOUT, DEFAULT_HEARTBEAT_PERIOD, DEFAULT_SWEEP_INTERVAL};
use crate::bus::BusError;
use crate::reasoning::{DEFAULT_ACTION_TIMEOUT, DEFAULT_MAX_REPLANS, DEFAULT_PROPOSAL_WINDOW};
use crate::strips::{compose_domain, Atom, DomainModel, TypedName};

pub use agents::{camera_fragment, sensor_fragment, turtlebot_fragment, Camera, Keyboard, OpenQuery, StationarySensor, Turtlebot};
pub use kernel::{Command, Kernel, KernelConfig, OPERATOR_ID};

pub const LOCATION_TYPE: &str = "location";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid world config: {0}")]
    Config(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error(transparent)]
    Bus(#[from] BusError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapNode {
    pub name: String,
    #[serde(default)]
    pub has_stationary_sensor: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub a: String,
    pub b: String,
    /// Ticks to traverse.
    pub weight: Tick,
}

/// Undirected weighted graph of named places.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfficeMap {
    pub nodes: Vec<MapNode>,
    pub edges: Vec<Edge>,
}

impl OfficeMap {
    /// Two offices and a conference room off one corridor, plus the entry.
    pub fn office() -> Self {
        let node = |name: &str, sensor: bool| MapNode { name: name.into(), has_stationary_sensor: sensor };
        let edge = |a: &str, b: &str, weight| Edge { a: a.into(), b: b.into(), weight };
        OfficeMap {
            nodes: vec![
                node("corridor", false),
                node("office1", false),
                node("office2", true),
                node("confroom", true),
                node("entry", false),
            ],
            edges: vec![
                edge("corridor", "office1", 3),
                edge("corridor", "office2", 3),
                edge("corridor", "confroom", 4),
                edge("corridor", "entry", 2),
            ],
        }
    }

    pub fn has_node(&self, name: &str) -> bool {
        self.nodes.iter().any(|n| n.name == name)
    }

    pub fn weight(&self, a: &str, b: &str) -> Option<Tick> {
        self.edges
            .iter()
            .find(|e| (e.a == a && e.b == b) || (e.a == b && e.b == a))
            .map(|e| e.weight)
    }

    pub fn neighbors<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges.iter().filter_map(move |e| {
            if e.a == node {
                Some(e.b.as_str())
            } else if e.b == node {
                Some(e.a.as_str())
            } else {
                None
            }
        })
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let mut names = BTreeSet::new();
        for n in &self.nodes {
            if !names.insert(n.name.as_str()) {
                return Err(SimError::Config(format!("duplicate node {}", n.name)));
            }
        }
        for e in &self.edges {
            if !self.has_node(&e.a) || !self.has_node(&e.b) {
                return Err(SimError::Config(format!("edge {}-{} names an unknown node", e.a, e.b)));
            }
            if e.a == e.b {
                return Err(SimError::Config(format!("self loop at {}", e.a)));
            }
            if e.weight == 0 {
                return Err(SimError::Config(format!("edge {}-{} has weight 0", e.a, e.b)));
            }
        }
        let Some(first) = self.nodes.first() else {
            return Err(SimError::Config("map has no nodes".into()));
        };
        let mut seen = BTreeSet::from([first.name.as_str()]);
        let mut queue = VecDeque::from([first.name.as_str()]);
        while let Some(n) = queue.pop_front() {
            for m in self.neighbors(n) {
                if seen.insert(m) {
                    queue.push_back(m);
                }
            }
        }
        if seen.len() != self.nodes.len() {
            return Err(SimError::Config("map is not connected".into()));
        }
        Ok(())
    }

    pub fn locations(&self) -> Vec<TypedName> {
        self.nodes.iter().map(|n| TypedName::new(&n.name, LOCATION_TYPE)).collect()
    }

    /// `(connected a b)` in both directions for every edge.
    pub fn static_facts(&self) -> Vec<Atom> {
        let mut facts: Vec<Atom> = self
            .edges
            .iter()
            .flat_map(|e| {
                [Atom::new("connected", [e.a.as_str(), e.b.as_str()]), Atom::new("connected", [e.b.as_str(), e.a.as_str()])]
            })
            .collect();
        facts.sort();
        facts
    }
}

/// Agents placed in the world.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AgentConfig {
    Turtlebot {
        id: AgentId,
        location: String,
    },
    StationarySensor {
        id: AgentId,
        location: String,
        /// Fluent made true by `sense`.
        #[serde(default = "default_sensed_predicate")]
        predicate: String,
    },
    Camera {
        id: AgentId,
        location: String,
        views: Vec<String>,
    },
    Keyboard {
        id: AgentId,
    },
}

fn default_sensed_predicate() -> String {
    "temperature-reported".into()
}

impl AgentConfig {
    pub fn id(&self) -> &str {
        match self {
            AgentConfig::Turtlebot { id, .. }
            | AgentConfig::StationarySensor { id, .. }
            | AgentConfig::Camera { id, .. }
            | AgentConfig::Keyboard { id } => id,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Drift {
    /// Maximum change per drift step, degrees Celsius.
    pub amplitude: f64,
    pub every: Tick,
}

impl Default for Drift {
    fn default() -> Self {
        Drift { amplitude: 0.0, every: 10 }
    }
}

/// Timing parameters shared by every agent in a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub heartbeat_period: Tick,
    pub death_timeout: Tick,
    pub sweep_interval: Tick,
    pub proposal_window: Tick,
    pub action_timeout: Tick,
    pub max_replans: u32,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            heartbeat_period: DEFAULT_HEARTBEAT_PERIOD,
            death_timeout: DEFAULT_DEATH_TIMEOUT,
            sweep_interval: DEFAULT_SWEEP_INTERVAL,
            proposal_window: DEFAULT_PROPOSAL_WINDOW,
            action_timeout: DEFAULT_ACTION_TIMEOUT,
            max_replans: DEFAULT_MAX_REPLANS,
        }
    }
}

impl Params {
    pub fn liveness(&self) -> LivenessConfig {
        LivenessConfig {
            heartbeat_period: self.heartbeat_period,
            death_timeout: self.death_timeout,
            sweep_interval: self.sweep_interval,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub map: OfficeMap,
    pub temperatures: BTreeMap<String, f64>,
    #[serde(default)]
    pub drift: Drift,
    pub agents: Vec<AgentConfig>,
    #[serde(default)]
    pub params: Params,
}

impl WorldConfig {
    /// The default test bed with the agents of the demonstrations.
    pub fn office() -> Self {
        WorldConfig {
            map: OfficeMap::office(),
            temperatures: [("office1", 22.5), ("office2", 21.0), ("confroom", 23.0), ("corridor", 21.5), ("entry", 19.0)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            drift: Drift::default(),
            agents: vec![
                AgentConfig::Keyboard { id: "keyboard".into() },
                AgentConfig::Turtlebot { id: "tb1".into(), location: "corridor".into() },
                AgentConfig::Camera {
                    id: "camera".into(),
                    location: "corridor".into(),
                    views: vec!["corridor".into(), "entry".into()],
                },
                AgentConfig::StationarySensor {
                    id: "sensor-office2".into(),
                    location: "office2".into(),
                    predicate: default_sensed_predicate(),
                },
                AgentConfig::StationarySensor {
                    id: "sensor-confroom".into(),
                    location: "confroom".into(),
                    predicate: default_sensed_predicate(),
                },
            ],
            params: Params::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.map.validate()?;
        let mut ids = BTreeSet::new();
        for agent in &self.agents {
            if !ids.insert(agent.id()) {
                return Err(SimError::Config(format!("duplicate agent {}", agent.id())));
            }
            let places: Vec<&String> = match agent {
                AgentConfig::Turtlebot { location, .. } | AgentConfig::StationarySensor { location, .. } => vec![location],
                AgentConfig::Camera { location, views, .. } => std::iter::once(location).chain(views).collect(),
                AgentConfig::Keyboard { .. } => vec![],
            };
            if let Some(bad) = places.into_iter().find(|p| !self.map.has_node(p)) {
                return Err(SimError::Config(format!("{} is placed at unknown node {bad}", agent.id())));
            }
        }
        if self.agents.iter().filter(|a| matches!(a, AgentConfig::Keyboard { .. })).count() > 1 {
            return Err(SimError::Config("at most one keyboard".into()));
        }
        self.params.liveness().validate(self.params.heartbeat_period).map_err(SimError::Config)?;
        Ok(())
    }

    pub fn keyboard_id(&self) -> Option<&str> {
        self.agents.iter().find(|a| matches!(a, AgentConfig::Keyboard { .. })).map(AgentConfig::id)
    }

    /// Capability fragments of every configured agent, in config order.
    pub fn fragments(&self) -> Vec<DomainModel> {
        self.agents
            .iter()
            .filter_map(|a| match a {
                AgentConfig::Turtlebot { id, .. } => Some(turtlebot_fragment(id)),
                AgentConfig::StationarySensor { id, location, predicate } => Some(sensor_fragment(id, location, predicate)),
                AgentConfig::Camera { id, .. } => Some(camera_fragment(id)),
                AgentConfig::Keyboard { .. } => None,
            })
            .collect()
    }

    /// The model the domain maintainer holds when every agent is alive.
    pub fn composite_domain(&self) -> Result<DomainModel, SimError> {
        compose_domain(&self.fragments()).map_err(|e| SimError::Config(e.to_string()))
    }

    /// Map connectivity plus camera fields of view.
    pub fn static_facts(&self) -> Vec<Atom> {
        let mut facts = self.map.static_facts();
        for agent in &self.agents {
            if let AgentConfig::Camera { id, views, .. } = agent {
                facts.extend(views.iter().map(|v| Atom::new("in-view", [id.as_str(), v.as_str()])));
            }
        }
        facts.sort();
        facts
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Health {
    Up,
    Down,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedGoal {
    pub tick: Tick,
    pub goal: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub facts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureEntry {
    pub tick: Tick,
    pub agent: AgentId,
    pub health: Health,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ScriptedEvent {
    Motion { tick: Tick, location: String },
    Temperature { tick: Tick, location: String, value: f64 },
}

impl ScriptedEvent {
    pub fn tick(&self) -> Tick {
        match self {
            ScriptedEvent::Motion { tick, .. } | ScriptedEvent::Temperature { tick, .. } => *tick,
        }
    }
}

/// Answers every login query after a fixed delay, for headless runs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoRespond {
    pub delay: Tick,
    pub answer: String,
}

/// Everything scripted against a world: goals typed at the keyboard,
/// component failures and environment events.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timeline {
    #[serde(default)]
    pub goals: Vec<ScriptedGoal>,
    #[serde(default)]
    pub failures: Vec<FailureEntry>,
    #[serde(default)]
    pub events: Vec<ScriptedEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auto_respond: Option<AutoRespond>,
}

impl Timeline {
    pub fn validate(&self, world: &WorldConfig) -> Result<(), SimError> {
        if self.failures.windows(2).any(|w| w[0].tick > w[1].tick) {
            return Err(SimError::Config("failure script ticks must be non-decreasing".into()));
        }
        if let Some(f) = self.failures.iter().find(|f| !world.agents.iter().any(|a| a.id() == f.agent)) {
            return Err(SimError::Config(format!("failure script names unknown agent {}", f.agent)));
        }
        for event in &self.events {
            let location = match event {
                ScriptedEvent::Motion { location, .. } | ScriptedEvent::Temperature { location, .. } => location,
            };
            if !world.map.has_node(location) {
                return Err(SimError::Config(format!("event at unknown node {location}")));
            }
        }
        if !self.goals.is_empty() && world.keyboard_id().is_none() {
            return Err(SimError::Config("scripted goals need a keyboard".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum WorldEvent {
    Motion { location: String },
    Temperature { location: String, value: f64 },
    Health { agent: AgentId, health: Health },
}

/// Serializable view of the world at one tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSnapshot {
    pub clock: Tick,
    pub temperatures: BTreeMap<String, f64>,
    pub agent_pos: BTreeMap<AgentId, String>,
    pub health: BTreeMap<AgentId, Health>,
}

/// Simulator ground truth. Agents only see it through [`Environment`].
#[derive(Clone, Debug)]
pub struct WorldState {
    pub clock: Tick,
    pub temperatures: BTreeMap<String, f64>,
    pub agent_pos: BTreeMap<AgentId, String>,
    pub health: BTreeMap<AgentId, Health>,
    map: OfficeMap,
    drift: Drift,
    rng: ChaCha8Rng,
    queue: BTreeMap<(Tick, u64), WorldEvent>,
    inserted: u64,
    motion: BTreeSet<String>,
}

impl WorldState {
    pub fn new(config: &WorldConfig, timeline: &Timeline, seed: u64) -> Self {
        let mut world = WorldState {
            clock: 0,
            temperatures: config.temperatures.clone(),
            agent_pos: config
                .agents
                .iter()
                .filter_map(|a| match a {
                    AgentConfig::Turtlebot { id, location } => Some((id.clone(), location.clone())),
                    _ => None,
                })
                .collect(),
            health: config.agents.iter().map(|a| (a.id().to_string(), Health::Up)).collect(),
            map: config.map.clone(),
            drift: config.drift,
            rng: ChaCha8Rng::seed_from_u64(seed),
            queue: BTreeMap::new(),
            inserted: 0,
            motion: BTreeSet::new(),
        };
        for f in &timeline.failures {
            world.schedule(f.tick, WorldEvent::Health { agent: f.agent.clone(), health: f.health });
        }
        for e in &timeline.events {
            let event = match e {
                ScriptedEvent::Motion { location, .. } => WorldEvent::Motion { location: location.clone() },
                ScriptedEvent::Temperature { location, value, .. } => {
                    WorldEvent::Temperature { location: location.clone(), value: *value }
                }
            };
            world.schedule(e.tick(), event);
        }
        world.fire_due();
        world
    }

    pub fn map(&self) -> &OfficeMap {
        &self.map
    }

    /// Queues an event; events at the same tick fire in insertion order.
    pub fn schedule(&mut self, tick: Tick, event: WorldEvent) {
        self.inserted += 1;
        self.queue.insert((tick, self.inserted), event);
    }

    pub fn is_up(&self, agent: &str) -> bool {
        self.health.get(agent).is_none_or(|h| *h == Health::Up)
    }

    fn fire_due(&mut self) -> Vec<WorldEvent> {
        let mut fired = Vec::new();
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 > self.clock {
                break;
            }
            let event = entry.remove();
            match &event {
                WorldEvent::Motion { location } => {
                    self.motion.insert(location.clone());
                }
                WorldEvent::Temperature { location, value } => {
                    self.temperatures.insert(location.clone(), *value);
                }
                WorldEvent::Health { agent, health } => {
                    self.health.insert(agent.clone(), *health);
                }
            }
            fired.push(event);
        }
        fired
    }

    /// Advances the clock by one tick, fires due events and applies drift.
    /// Returns the events that fired.
    pub fn world_step(&mut self) -> Vec<WorldEvent> {
        self.clock += 1;
        self.motion.clear();
        let fired = self.fire_due();
        if self.drift.amplitude > 0.0 && self.drift.every > 0 && self.clock.is_multiple_of(self.drift.every) {
            let a = self.drift.amplitude;
            for value in self.temperatures.values_mut() {
                let delta: f64 = self.rng.gen_range(-a..=a);
                *value = ((*value + delta) * 100.0).round() / 100.0;
            }
        }
        fired
    }

    pub fn snapshot(&self) -> WorldSnapshot {
        WorldSnapshot {
            clock: self.clock,
            temperatures: self.temperatures.clone(),
            agent_pos: self.agent_pos.clone(),
            health: self.health.clone(),
        }
    }
}

impl Environment for WorldState {
    fn temperature(&self, location: &str) -> Option<f64> {
        self.temperatures.get(location).copied()
    }

    fn position(&self, agent: &str) -> Option<String> {
        self.agent_pos.get(agent).cloned()
    }

    fn edge_weight(&self, a: &str, b: &str) -> Option<Tick> {
        self.map.weight(a, b)
    }

    fn move_agent(&mut self, agent: &str, to: &str) -> Result<(), String> {
        let from = self.agent_pos.get(agent).ok_or_else(|| format!("{agent} is not mobile"))?;
        if self.map.weight(from, to).is_none() {
            return Err("no-edge".into());
        }
        self.agent_pos.insert(agent.to_string(), to.to_string());
        Ok(())
    }

    fn motion_at(&self, location: &str) -> bool {
        self.motion.contains(location)
    }
}
