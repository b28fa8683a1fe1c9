use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::acl::{AgentId, CapabilityAdvertBody, Envelope, Payload, Performative, Tick};

use super::advert::{AdvertError, CapabilityAdvert};

pub const DEFAULT_HEARTBEAT_PERIOD: Tick = 10;
pub const DEFAULT_DEATH_TIMEOUT: Tick = 30;
pub const DEFAULT_SWEEP_INTERVAL: Tick = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LivenessConfig {
    pub heartbeat_period: Tick,
    pub death_timeout: Tick,
    pub sweep_interval: Tick,
}

impl Default for LivenessConfig {
    fn default() -> Self {
        LivenessConfig {
            heartbeat_period: DEFAULT_HEARTBEAT_PERIOD,
            death_timeout: DEFAULT_DEATH_TIMEOUT,
            sweep_interval: DEFAULT_SWEEP_INTERVAL,
        }
    }
}

impl LivenessConfig {
    /// The timeout must cover two heartbeat periods of the slowest agent.
    pub fn validate(&self, max_period: Tick) -> Result<(), String> {
        if self.heartbeat_period == 0 || self.sweep_interval == 0 {
            return Err("heartbeat period and sweep interval must be positive".into());
        }
        if self.death_timeout < 2 * max_period.max(self.heartbeat_period) {
            return Err(format!(
                "death timeout {} is shorter than twice the heartbeat period {}",
                self.death_timeout,
                max_period.max(self.heartbeat_period)
            ));
        }
        Ok(())
    }

    pub fn is_sweep_tick(&self, now: Tick) -> bool {
        now.is_multiple_of(self.sweep_interval)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Alive,
    Dead,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LivenessEntry {
    pub last_seen: Tick,
    pub advert: CapabilityAdvert,
    pub status: Status,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeartbeatOutcome {
    Unchanged,
    /// The advertised schemas or sensed atoms changed.
    Updated,
    New,
    Resurrected,
}

/// Who is alive, as seen from heartbeats.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LivenessTable {
    entries: BTreeMap<AgentId, LivenessEntry>,
    malformed: u64,
}

impl LivenessTable {
    pub fn new() -> Self {
        LivenessTable::default()
    }

    /// Records an `Inform/CapabilityAdvertBody` heartbeat. Anything else, or
    /// an advert that does not parse, is rejected and counted.
    pub fn record_heartbeat(&mut self, envelope: &Envelope) -> Result<HeartbeatOutcome, AdvertError> {
        let body: &CapabilityAdvertBody = match (&envelope.performative, &envelope.payload) {
            (Performative::Inform, Payload::CapabilityAdvertBody(body)) => body,
            _ => {
                self.malformed += 1;
                return Err(AdvertError::NotAHeartbeat(envelope.msg_id.clone()));
            }
        };
        let advert = match CapabilityAdvert::from_body(body) {
            Ok(a) if a.agent_id == envelope.sender => a,
            Ok(a) => {
                self.malformed += 1;
                return Err(AdvertError::Invalid(format!("{} advertised on behalf of {}", envelope.sender, a.agent_id)));
            }
            Err(e) => {
                self.malformed += 1;
                return Err(e);
            }
        };
        Ok(self.record_advert(advert, envelope.sim_time))
    }

    pub fn record_advert(&mut self, advert: CapabilityAdvert, at: Tick) -> HeartbeatOutcome {
        match self.entries.get_mut(&advert.agent_id) {
            None => {
                self.entries
                    .insert(advert.agent_id.clone(), LivenessEntry { last_seen: at, advert, status: Status::Alive });
                HeartbeatOutcome::New
            }
            Some(entry) => {
                let outcome = if entry.status == Status::Dead {
                    HeartbeatOutcome::Resurrected
                } else if entry.advert.same_capabilities(&advert) {
                    HeartbeatOutcome::Unchanged
                } else {
                    HeartbeatOutcome::Updated
                };
                entry.last_seen = entry.last_seen.max(at);
                entry.status = Status::Alive;
                entry.advert = advert;
                outcome
            }
        }
    }

    /// Marks dead every alive agent silent for more than `death_timeout`
    /// ticks and returns the ids that changed, sorted.
    pub fn liveness_sweep(&mut self, now: Tick, death_timeout: Tick) -> Vec<AgentId> {
        let mut newly_dead = Vec::new();
        for (id, entry) in &mut self.entries {
            if entry.status == Status::Alive && now.saturating_sub(entry.last_seen) > death_timeout {
                entry.status = Status::Dead;
                newly_dead.push(id.clone());
            }
        }
        newly_dead
    }

    pub fn get(&self, agent: &str) -> Option<&LivenessEntry> {
        self.entries.get(agent)
    }

    pub fn is_alive(&self, agent: &str) -> bool {
        self.entries.get(agent).is_some_and(|e| e.status == Status::Alive)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&AgentId, &LivenessEntry)> {
        self.entries.iter()
    }

    pub fn alive(&self) -> impl Iterator<Item = &LivenessEntry> {
        self.entries.values().filter(|e| e.status == Status::Alive)
    }

    pub fn alive_ids(&self) -> Vec<AgentId> {
        self.alive().map(|e| e.advert.agent_id.clone()).collect()
    }

    pub fn malformed_count(&self) -> u64 {
        self.malformed
    }

    pub fn max_period(&self) -> Tick {
        self.entries.values().map(|e| e.advert.heartbeat_period).max().unwrap_or(0)
    }

    /// Table contents without timestamps, for comparisons across time.
    pub fn snapshot(&self) -> Vec<(AgentId, Status, CapabilityAdvert)> {
        self.entries.iter().map(|(id, e)| (id.clone(), e.status, e.advert.clone())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acl::AgentKind;

    fn advert(id: &str) -> CapabilityAdvert {
        CapabilityAdvert::new(id, AgentKind::Sensor, None, 10)
    }

    #[test]
    fn sweep_marks_silent_agents_once() {
        let mut t = LivenessTable::new();
        assert_eq!(t.record_advert(advert("a"), 10), HeartbeatOutcome::New);
        assert_eq!(t.record_advert(advert("b"), 40), HeartbeatOutcome::New);
        assert!(t.liveness_sweep(40, 30).is_empty());
        assert_eq!(t.liveness_sweep(41, 30), vec!["a".to_string()]);
        assert!(t.liveness_sweep(41, 30).is_empty());
        assert_eq!(t.record_advert(advert("a"), 42), HeartbeatOutcome::Resurrected);
        assert_eq!(t.record_advert(advert("a"), 52), HeartbeatOutcome::Unchanged);
    }

    #[test]
    fn config_validation() {
        assert!(LivenessConfig::default().validate(10).is_ok());
        assert!(LivenessConfig::default().validate(20).is_err());
    }
}
