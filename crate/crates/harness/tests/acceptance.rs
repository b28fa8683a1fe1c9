//! One line per acceptance criterion, written straight to stderr so it shows
//! up in the test log even when the run passes.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::io::Write;
use std::path::Path;
use std::process::Command as Process;
use std::time::{Duration, Instant};

use officemesh::acl::{
    decode_envelope, encode_envelope, AgentKind, CapabilityEvent, Mode, Payload, PayloadKind, Performative, Quantity, StateUpdate, Tick,
};
use officemesh::agent::{CapabilityAdvert, LivenessConfig, LivenessTable, Status};
use officemesh::bus::DeliveryRecord;
use officemesh::planner::{plan, SearchConfig};
use officemesh::reasoning::{select_proposals, DomainMaintainer, Selection};
use officemesh::simworld::{sensor_fragment, turtlebot_fragment, Command, Health, Kernel, KernelConfig, Timeline, WorldConfig};
use officemesh::strips::{compose_domain, validate_plan, Literal};
use officemesh_harness::assertions::Evidence;
use officemesh_harness::runner::TRANSCRIPT_FILE;
use officemesh_harness::{run_scenario, RunOptions, RunReport, Scenario};

const WIRE_BUDGET: Duration = Duration::from_secs(5);
const PLANNER_BUDGET: Duration = Duration::from_secs(60);
const SCENARIO_BUDGET: Duration = Duration::from_secs(10);
/// death_timeout + sweep_interval with the default liveness settings.
const DEATH_WINDOW: (Tick, Tick) = (30, 35);

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn wire_roundtrip() -> Outcome {
    let started = Instant::now();
    let mut r = support::rng(1);
    for i in 0..1000 {
        let e = support::valid_envelope(&mut r);
        let line = encode_envelope(&e).map_err(|err| format!("envelope {i} refused: {err}"))?;
        ensure(decode_envelope(&line).as_ref() == Ok(&e), || format!("envelope {i} did not round-trip"))?;
    }
    let mut refused = 0;
    for p in Performative::ALL {
        for k in PayloadKind::ALL {
            if support::allowed(p.name(), k.name()) {
                continue;
            }
            let e = support::envelope_with(&mut r, p, k.name());
            ensure(encode_envelope(&e).is_err(), || format!("encode accepted {} + {}", p.name(), k.name()))?;
            let mut v = serde_json::to_value(support::valid_envelope(&mut r)).unwrap();
            v["payload"] = serde_json::to_value(&e.payload).unwrap();
            v["performative"] = p.name().into();
            ensure(decode_envelope(&v.to_string()).is_err(), || format!("decode accepted {} + {}", p.name(), k.name()))?;
            refused += 1;
        }
    }
    let took = started.elapsed();
    ensure(took < WIRE_BUDGET, || format!("took {took:.2?}"))?;
    Ok(format!("1000 round-trips, {refused} off-table pairs refused both ways, {took:.2?}"))
}

fn planner_optimality() -> Outcome {
    let started = Instant::now();
    let mut longest = 0;
    for seed in 0..100 {
        let inst = support::random_instance(&mut support::rng(seed));
        let objects = inst.problem.objects.len();
        ensure(objects <= 6 && inst.ground_actions <= 40, || {
            format!("instance {seed} too big: {objects} objects, {} actions", inst.ground_actions)
        })?;
        let best = support::ucs_cost(&inst.domain, &inst.problem).ok_or(format!("instance {seed} unsolvable"))?;
        let p = plan(&inst.domain, &inst.problem, &SearchConfig::optimal()).map_err(|e| format!("instance {seed}: {e}"))?;
        let v = validate_plan(&inst.domain, &inst.problem, &p);
        ensure(v.is_valid(), || format!("instance {seed}: optimal plan invalid: {:?}", v.diagnostic))?;
        ensure(p.total_cost == best, || format!("instance {seed}: cost {} but oracle {best}", p.total_cost))?;
        let s = plan(&inst.domain, &inst.problem, &SearchConfig::satisficing()).map_err(|e| format!("instance {seed}: {e}"))?;
        ensure(validate_plan(&inst.domain, &inst.problem, &s).is_valid(), || format!("instance {seed}: satisficing plan invalid"))?;
        longest = longest.max(p.steps.len());
    }
    let took = started.elapsed();
    ensure(took < PLANNER_BUDGET, || format!("took {took:.2?}"))?;
    Ok(format!("100 instances, optimal cost equals oracle exactly, longest plan {longest}, {took:.2?}"))
}

fn last_heartbeat(records: &[DeliveryRecord], agent: &str) -> Option<Tick> {
    records
        .iter()
        .filter(|r| r.envelope.sender == agent && matches!(r.envelope.payload, Payload::CapabilityAdvertBody(_)))
        .map(|r| r.envelope.sim_time)
        .max()
}

fn death_tick(records: &[DeliveryRecord], agent: &str) -> Option<Tick> {
    records.iter().find_map(|r| match &r.envelope.payload {
        Payload::StateUpdate(StateUpdate::CapabilityChange { agent: a, event: CapabilityEvent::Dead, .. }) if a == agent => {
            Some(r.envelope.sim_time)
        }
        _ => None,
    })
}

/// Index of the first record that is a `performative` from `sender` to
/// `recipient` in goal `conv` carrying `action args`.
fn find_action(records: &[DeliveryRecord], conv: &str, sender: &str, action: &str, args: &[&str]) -> Option<usize> {
    records.iter().position(|r| {
        let e = &r.envelope;
        e.conversation_id == conv
            && e.sender == sender
            && match &e.payload {
                Payload::ActionResult(a) => a.success && a.action == action && a.args == args,
                _ => false,
            }
    })
}

fn sensor_scenario(id: u32, failed: &str) -> Outcome {
    let scenario = Scenario::builtin(id).map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for mode in [Mode::Centralized, Mode::Decentralized] {
        let report = run_scenario(&scenario, &RunOptions::new(mode)).map_err(|e| e.to_string())?;
        check_sensor_run(&report, &scenario.world, failed).map_err(|e| format!("{mode}: {e}"))?;
        ensure(report.elapsed < SCENARIO_BUDGET, || format!("{mode}: took {:.2?}", report.elapsed))?;
        notes.push(format!("{mode} {:.2?}", report.elapsed));
    }
    Ok(format!("{} assertions each; {}", scenario.spec.assertions.len() + 3, notes.join(", ")))
}

fn check_sensor_run(report: &RunReport, world: &WorldConfig, failed: &str) -> Result<(), String> {
    if let Some(v) = report.first_failure() {
        return Err(format!("{}: {}", v.name, v.failure.as_ref().unwrap().reason));
    }
    let rec = &report.records;
    let ev = Evidence::new(rec, &report.snapshots, world);
    // (a) first plan: turtlebot reports office1, both stationary sensors sense.
    let first = ev.goal_conversation(0).ok_or("no first goal")?;
    find_action(rec, first, "tb1", "report-temp-ir", &["office1"]).ok_or("first plan: tb1 never reported office1")?;
    for sensor in ["sensor-office2", "sensor-confroom"] {
        find_action(rec, first, sensor, "sense", &[]).ok_or(format!("first plan: {sensor} never sensed"))?;
    }
    // (b) death within the window after the last heartbeat.
    let last = last_heartbeat(rec, failed).ok_or("no heartbeat")?;
    let dead = death_tick(rec, failed).ok_or(format!("{failed} never declared dead"))?;
    ensure(dead > last + DEATH_WINDOW.0 && dead <= last + DEATH_WINDOW.1, || {
        format!("{failed} last heard at {last}, dead at {dead}")
    })?;
    // (c) the turtlebot covers the failed room only once the death is known.
    let room = failed.strip_prefix("sensor-").unwrap();
    let reports: Vec<Tick> = rec
        .iter()
        .filter(|r| r.envelope.sender == "tb1")
        .filter(|r| matches!(&r.envelope.payload, Payload::ActionResult(a) if a.success && a.action == "report-temp-ir" && a.args == [room]))
        .map(|r| r.envelope.sim_time)
        .collect();
    ensure(!reports.is_empty(), || format!("tb1 never reported {room}"))?;
    ensure(reports.iter().all(|t| *t > dead), || format!("tb1 reported {room} at {reports:?}, death at {dead}"))?;
    // (d) every goal's executed steps replay to the goal.
    for n in (0..).take_while(|n| ev.goal_conversation(*n).is_some()) {
        ev.goal_reached(n).map_err(|f| format!("goal {n}: {}", f.reason))?;
    }
    Ok(())
}

fn login_scenario() -> Outcome {
    let scenario = Scenario::builtin(3).map_err(|e| e.to_string())?;
    let report = run_scenario(&scenario, &RunOptions::new(Mode::Centralized)).map_err(|e| e.to_string())?;
    if let Some(v) = report.first_failure() {
        return Err(format!("{}: {}", v.name, v.failure.as_ref().unwrap().reason));
    }
    let rec = &report.records;
    let pos = |what: &str, f: &dyn Fn(&DeliveryRecord) -> bool| rec.iter().position(f).ok_or(format!("no {what}"));
    let motion = pos("motion observation", &|r| {
        r.envelope.sender == "camera"
            && matches!(&r.envelope.payload, Payload::Observation(o) if o.location == "entry" && o.quantity == Quantity::Motion)
    })?;
    let dispatch = pos("dispatch", &|r| {
        r.envelope.recipient == "tb1"
            && matches!(&r.envelope.payload, Payload::ActionRequest(a) if a.action == "move" && a.args.last().map(String::as_str) == Some("entry"))
    })?;
    let query = pos("query", &|r| r.envelope.performative == Performative::Query)?;
    let conv = rec[query].envelope.conversation_id.clone();
    let answer = pos("answer", &|r| {
        r.envelope.conversation_id == conv && matches!(r.envelope.payload, Payload::QueryAnswer(_))
    })?;
    let confirm = pos("closing confirm", &|r| {
        r.envelope.performative == Performative::Confirm
            && matches!(&r.envelope.payload, Payload::ActionResult(a) if a.action == "present-login" && a.success)
    })?;
    let order = [motion, dispatch, query, answer, confirm];
    ensure(order.windows(2).all(|w| w[0] < w[1]), || format!("out of order: {order:?}"))?;
    Ok(format!("records #{motion} < #{dispatch} < #{query} < #{answer} < #{confirm}, {:.2?}", report.elapsed))
}

fn selection() -> Outcome {
    let goal: Vec<Literal> = support::GOAL_ROOMS.iter().map(|g| support::goal_literal(g).parse().unwrap()).collect();
    let mut ties = 0;
    for seed in 0..50 {
        let ps = support::random_proposals(&mut support::rng(seed));
        let want = support::cheapest_full(&ps).unwrap();
        let got = select_proposals(&goal, &ps);
        ensure(got == Selection::Full(want), || format!("set {seed}: picked {got:?}, oracle {want}"))?;
        let mut rev = ps.clone();
        rev.reverse();
        let Selection::Full(b) = select_proposals(&goal, &rev) else { return Err(format!("set {seed} reversed")) };
        ensure(rev[b].proposer == ps[want].proposer && rev[b].cost == ps[want].cost, || format!("set {seed}: order changed the winner"))?;
        ties += ps.iter().filter(|p| p.cost == ps[want].cost).count().saturating_sub(1).min(1);
    }
    Ok(format!("50 sets, cheapest full proposal every time, {ties} with cost ties"))
}

fn liveness() -> Outcome {
    let cfg = LivenessConfig::default();
    ensure((cfg.heartbeat_period, cfg.death_timeout) == (10, 30), || "unexpected defaults".into())?;
    let advert = CapabilityAdvert::new("s1", AgentKind::Sensor, Some("office1"), 10)
        .with_fragment(sensor_fragment("s1", "office1", "temperature-reported"));
    let mut worst = 0;
    for t in 0..200 {
        let mut table = LivenessTable::new();
        table.record_advert(advert.clone(), t);
        let dead = (t..t + 100)
            .filter(|now| cfg.is_sweep_tick(*now))
            .find(|now| !table.liveness_sweep(*now, cfg.death_timeout).is_empty())
            .ok_or(format!("silenced at {t}, never dead"))?;
        ensure(dead > t + DEATH_WINDOW.0 && dead <= t + DEATH_WINDOW.1, || format!("silenced at {t}, dead at {dead}"))?;
        worst = worst.max(dead - t);
    }

    // And in the full office, an agent taken down mid-run.
    let timeline = Timeline {
        failures: vec![officemesh::simworld::FailureEntry { tick: 47, agent: "sensor-confroom".into(), health: Health::Down }],
        ..Timeline::default()
    };
    let mut k = Kernel::boot(KernelConfig::new(WorldConfig::office(), timeline, Mode::Centralized, 1)).map_err(|e| e.to_string())?;
    k.run_until(120).map_err(|e| e.to_string())?;
    let rec = k.shutdown().map_err(|e| e.to_string())?;
    let (last, dead) = (last_heartbeat(&rec, "sensor-confroom").unwrap(), death_tick(&rec, "sensor-confroom"));
    let dead = dead.ok_or("kernel never declared sensor-confroom dead")?;
    ensure(dead > last + DEATH_WINDOW.0 && dead <= last + DEATH_WINDOW.1, || format!("kernel: last {last}, dead {dead}"))?;

    let mut k = Kernel::boot(KernelConfig::new(WorldConfig::office(), Timeline::default(), Mode::Centralized, 1))
        .map_err(|e| e.to_string())?;
    k.run_until(10_000).map_err(|e| e.to_string())?;
    let table = k.liveness().ok_or("no liveness table")?;
    ensure(table.entries().all(|(_, e)| e.status == Status::Alive), || "someone is dead at 10000".into())?;
    let rec = k.shutdown().map_err(|e| e.to_string())?;
    let deaths = rec
        .iter()
        .filter(|r| matches!(&r.envelope.payload, Payload::StateUpdate(StateUpdate::CapabilityChange { event: CapabilityEvent::Dead, .. })))
        .count();
    ensure(deaths == 0, || format!("{deaths} false deaths over 10000 ticks"))?;
    Ok(format!("detection at most {worst} ticks after silence; kernel death at {} (last beat {last}); 10000 quiet ticks, no deaths", dead))
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |n: u32, mode: &str, copy: u32| -> Result<Vec<u8>, String> {
        let dir = tmp.path().join(format!("{n}-{mode}-{copy}"));
        let out = Process::new(env!("CARGO_BIN_EXE_officemesh"))
            .args(["run", "--scenario", &n.to_string(), "--mode", mode, "--seed", "7", "--out"])
            .arg(&dir)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || format!("scenario {n} {mode} exited {:?}", out.status.code()))?;
        std::fs::read(Path::new(&dir).join(TRANSCRIPT_FILE)).map_err(|e| e.to_string())
    };
    let mut bytes = 0;
    for n in 1..=3 {
        for mode in ["centralized", "decentralized"] {
            let (a, b) = (run(n, mode, 0)?, run(n, mode, 1)?);
            ensure(a == b, || format!("scenario {n} {mode}: transcripts differ"))?;
            bytes += a.len();
        }
    }
    Ok(format!("6 combinations byte-identical ({bytes} bytes per copy)"))
}

fn composition() -> Outcome {
    let world = WorldConfig::office();
    let base = world.fragments();
    let original = compose_domain(&base).map_err(|e| e.to_string())?;
    let extras = [turtlebot_fragment("tb2"), sensor_fragment("sensor-entry", "entry", "temperature-reported")];
    for extra in &extras {
        for at in 0..=base.len() {
            let mut grown = base.clone();
            grown.insert(at, extra.clone());
            let with = compose_domain(&grown).map_err(|e| e.to_string())?;
            ensure(with != original, || format!("adding {} changed nothing", extra.name))?;
            grown.remove(at);
            ensure(compose_domain(&grown).map_err(|e| e.to_string())? == original, || format!("removing {} at {at}", extra.name))?;
        }
    }

    // The running maintainer: drop a sensor's advert through a failure, bring it back.
    let mut k = Kernel::boot(KernelConfig::new(world.clone(), Timeline::default(), Mode::Centralized, 1))
        .map_err(|e| e.to_string())?;
    let model = |k: &Kernel| k.behavior::<DomainMaintainer>("domain-maintainer").map(|d| d.model().clone());
    k.run_until(20).map_err(|e| e.to_string())?;
    let before = model(&k).ok_or("no maintainer")?;
    ensure(before == original, || "maintainer model differs from the from-scratch composition".into())?;
    k.submit(Command::InjectFailure { agent: "sensor-office2".into(), health: Health::Down }).map_err(|e| e.to_string())?;
    k.run_until(80).map_err(|e| e.to_string())?;
    let without: Vec<_> = base.iter().filter(|f| f.name != "sensor-office2").cloned().collect();
    ensure(model(&k).unwrap() == compose_domain(&without).map_err(|e| e.to_string())?, || "model after death".into())?;
    k.submit(Command::InjectFailure { agent: "sensor-office2".into(), health: Health::Up }).map_err(|e| e.to_string())?;
    k.run_until(110).map_err(|e| e.to_string())?;
    ensure(model(&k).unwrap() == original, || "model after resurrection".into())?;
    Ok(format!("{} insert positions x {} extras, plus a live remove and re-add", base.len() + 1, extras.len()))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("wire round-trip", wire_roundtrip),
        ("planner soundness and optimality", planner_optimality),
        ("scenario 1, office2 sensor fails", || sensor_scenario(1, "sensor-office2")),
        ("scenario 2, confroom sensor fails", || sensor_scenario(2, "sensor-confroom")),
        ("scenario 3, login at the entry", login_scenario),
        ("decentralized selection", selection),
        ("liveness window", liveness),
        ("determinism through the CLI", determinism),
        ("plug and play composition", composition),
    ];
    let mut failed = Vec::new();
    let mut err = std::io::stderr();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        let line = match check() {
            Ok(detail) => format!("criterion {n} PASS  {name}: {detail}"),
            Err(why) => {
                failed.push(n);
                format!("criterion {n} FAIL  {name}: {why}")
            }
        };
        let _ = writeln!(err, "{line}");
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
