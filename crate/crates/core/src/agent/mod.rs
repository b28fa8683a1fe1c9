//! Base agent machinery: capability adverts, heartbeats, liveness tracking
//! and the runtime that connects a behavior to the bus.

mod advert;
mod liveness;
mod runtime;

pub use advert::{AdvertError, CapabilityAdvert};
pub use liveness::{
    HeartbeatOutcome, LivenessConfig, LivenessEntry, LivenessTable, Status, DEFAULT_DEATH_TIMEOUT,
    DEFAULT_HEARTBEAT_PERIOD, DEFAULT_SWEEP_INTERVAL,
};
pub use runtime::{
    start_agent, AgentCtx, AgentRuntime, Behavior, Environment, Handler, Handlers, NoEnvironment, Outgoing,
    BROADCAST_CACHE_SIZE,
};
