use proptest::prelude::*;

use officemesh::acl::{AgentKind, CapabilityEvent, Payload, StateUpdate, Tick};
use officemesh::agent::{start_agent, AgentRuntime, CapabilityAdvert, Handlers, LivenessConfig, LivenessTable, NoEnvironment};
use officemesh::bus::{run_broker, BrokerConfig, BrokerHandle, DeliveryRecord};
use officemesh::reasoning::DomainMaintainer;
use officemesh::simworld::{sensor_fragment, turtlebot_fragment, WorldConfig};
use officemesh::strips::{compose_domain, DomainModel};

fn advert(id: &str, period: Tick) -> CapabilityAdvert {
    CapabilityAdvert::new(id, AgentKind::Sensor, Some("office1"), period)
        .with_fragment(sensor_fragment(id, "office1", "temperature-reported"))
}

/// Sweeps on multiples of 5 like the maintainer; returns the first tick the
/// agent is declared dead.
fn detection_tick(table: &mut LivenessTable, from: Tick, to: Tick, cfg: &LivenessConfig) -> Option<Tick> {
    (from..=to).filter(|t| cfg.is_sweep_tick(*t)).find(|t| !table.liveness_sweep(*t, cfg.death_timeout).is_empty())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn silent_agents_are_declared_dead_within_timeout_plus_sweep(last in 0u64..5_000) {
        let cfg = LivenessConfig::default();
        let mut table = LivenessTable::new();
        table.record_advert(advert("s1", 10), last);
        let dead = detection_tick(&mut table, last, last + 100, &cfg).unwrap();
        prop_assert!(dead > last + 30 && dead <= last + 35, "silent since {last}, dead at {dead}");
    }

    #[test]
    fn punctual_agents_never_die(period in 1u64..=15, phase in 0u64..15) {
        let cfg = LivenessConfig::default();
        let mut table = LivenessTable::new();
        for now in 0..10_000u64 {
            if now >= phase && (now - phase) % period == 0 {
                table.record_advert(advert("s1", period), now);
            }
            if now >= phase && cfg.is_sweep_tick(now) {
                prop_assert!(table.liveness_sweep(now, cfg.death_timeout).is_empty(), "false death at {now}");
            }
        }
    }
}

#[test]
fn death_then_resurrection_restores_the_table() {
    let cfg = LivenessConfig::default();
    let mut table = LivenessTable::new();
    table.record_advert(advert("s1", 10), 0);
    table.record_advert(advert("s2", 10), 0);
    let before = table.snapshot();
    table.record_advert(advert("s2", 10), 40);
    assert_eq!(detection_tick(&mut table, 1, 100, &cfg), Some(35));
    assert!(!table.is_alive("s1"));
    table.record_advert(advert("s1", 10), 80);
    assert_eq!(table.snapshot(), before);
}

/// A domain maintainer and some plug-in agents on a real broker, with a
/// hand-driven clock.
struct Rig {
    broker: BrokerHandle,
    dm: AgentRuntime,
    agents: Vec<(AgentRuntime, bool)>,
    now: Tick,
}

impl Rig {
    fn new() -> Rig {
        let broker = run_broker(&BrokerConfig::inproc()).unwrap();
        let dm = DomainMaintainer::new(Vec::new(), Vec::new());
        let dm = start_agent(Box::new(dm), Box::new(broker.connect_inproc("domain-maintainer").unwrap()), 0, &mut NoEnvironment)
            .unwrap();
        Rig { broker, dm, agents: Vec::new(), now: 0 }
    }

    fn plug(&mut self, advert: CapabilityAdvert) {
        let transport = Box::new(self.broker.connect_inproc(&advert.agent_id).unwrap());
        let rt = start_agent(Box::new(Handlers::new(advert)), transport, self.now, &mut NoEnvironment).unwrap();
        self.agents.push((rt, true));
        self.settle();
    }

    fn silence(&mut self, id: &str) {
        self.agents.iter_mut().find(|(a, _)| a.id() == id).unwrap().1 = false;
    }

    fn settle(&mut self) {
        while self.dm.deliver(self.now, &mut NoEnvironment).unwrap() > 0 {}
        for (a, up) in &mut self.agents {
            if *up {
                a.deliver(self.now, &mut NoEnvironment).unwrap();
            } else {
                a.discard().unwrap();
            }
        }
    }

    fn step(&mut self) {
        self.now += 1;
        for (a, up) in &mut self.agents {
            if *up {
                a.tick(self.now, &mut NoEnvironment).unwrap();
            }
        }
        self.dm.tick(self.now, &mut NoEnvironment).unwrap();
        self.settle();
    }

    fn run_to(&mut self, t: Tick) {
        while self.now < t {
            self.step();
        }
    }

    fn model(&self) -> DomainModel {
        self.dm.behavior().as_any().downcast_ref::<DomainMaintainer>().unwrap().model().clone()
    }

    fn transcript(&self) -> Vec<DeliveryRecord> {
        self.broker.transcript()
    }
}

fn office_adverts() -> Vec<CapabilityAdvert> {
    vec![
        CapabilityAdvert::new("tb1", AgentKind::Actuator, Some("corridor"), 10).with_fragment(turtlebot_fragment("tb1")),
        advert("sensor-office2", 10).with_fragment(sensor_fragment("sensor-office2", "office2", "temperature-reported")),
    ]
}

fn dead_events(records: &[DeliveryRecord], agent: &str) -> Vec<Tick> {
    records
        .iter()
        .filter_map(|r| match &r.envelope.payload {
            Payload::StateUpdate(StateUpdate::CapabilityChange { agent: a, event: CapabilityEvent::Dead, .. })
                if a == agent =>
            {
                Some(r.envelope.sim_time)
            }
            _ => None,
        })
        .collect()
}

#[test]
fn plugging_in_and_out_recomposes_the_model() {
    let mut rig = Rig::new();
    let base = office_adverts();
    for a in &base {
        rig.plug(a.clone());
    }
    let original = rig.model();
    let fragments: Vec<DomainModel> = base.iter().map(|a| a.fragment.clone()).collect();
    assert_eq!(original, compose_domain(&fragments).unwrap());

    rig.run_to(20);
    let extra = CapabilityAdvert::new("tb2", AgentKind::Actuator, Some("entry"), 10).with_fragment(turtlebot_fragment("tb2"));
    rig.plug(extra.clone());
    let mut grown = fragments.clone();
    grown.push(extra.fragment.clone());
    assert_eq!(rig.model(), compose_domain(&grown).unwrap());
    assert!(rig.model().schema("tb2.move").is_some());

    // Last heartbeat at 40.
    rig.run_to(40);
    rig.silence("tb2");
    rig.run_to(100);
    assert_eq!(dead_events(&rig.transcript(), "tb2"), vec![75]);
    assert_eq!(rig.model(), original);
    // Base agents kept heartbeating the whole time.
    assert!(dead_events(&rig.transcript(), "tb1").is_empty());
}

#[test]
fn a_world_composes_to_the_same_model_the_maintainer_builds() {
    let world = WorldConfig::office();
    let mut rig = Rig::new();
    for f in world.fragments() {
        let id = f.name.clone();
        rig.plug(CapabilityAdvert::new(&id, AgentKind::Sensor, None, 10).with_fragment(f));
    }
    assert_eq!(rig.model(), world.composite_domain().unwrap());
}
