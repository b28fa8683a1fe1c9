use std::process::Command as Process;
use std::time::{Duration, Instant};

use serde_json::Value;

use officemesh::acl::Mode;
use officemesh::simworld::{
    Command, Health, Kernel, KernelConfig, ScriptedEvent, Timeline, WorldConfig, OPERATOR_ID,
};
use officemesh_harness::gateway::{Gateway, GatewayClient, GatewayConfig};
use officemesh_harness::{run_scenario, run_scenario_with, RunOptions, Scenario, TickHook};

struct Rig {
    kernel: Kernel,
    gw: Gateway,
    client: GatewayClient,
}

impl Rig {
    fn new(timeline: Timeline) -> Rig {
        let cfg = KernelConfig::new(WorldConfig::office(), timeline, Mode::Centralized, 1);
        let mut kernel = Kernel::boot(cfg).unwrap();
        let mut gw = Gateway::bind("127.0.0.1:0", GatewayConfig::default()).unwrap();
        gw.on_boot(&mut kernel).unwrap();
        let client = GatewayClient::connect(&format!("ws://{}", gw.local_addr())).unwrap();
        Rig { kernel, gw, client }
    }

    /// Pumps with the clock stopped until `n` inbound frames were handled.
    fn pump(&mut self, n: usize) {
        let deadline = Instant::now() + Duration::from_secs(10);
        let mut seen = 0;
        while seen < n {
            assert!(Instant::now() < deadline, "gateway never received the command");
            seen += self.gw.pump(&mut self.kernel);
            std::thread::sleep(Duration::from_millis(1));
        }
    }

    fn command(&mut self, id: &str, cmd: &Command) -> Result<(), String> {
        self.client.send_command(id, cmd).unwrap();
        self.pump(1);
        self.client.answer(id).unwrap()
    }

    fn run_to(&mut self, tick: u64) {
        while self.kernel.now() < tick {
            self.kernel.step().unwrap();
            self.gw.after_tick(&mut self.kernel).unwrap();
        }
    }

    fn wait_record(&mut self, pred: impl Fn(&Value) -> bool) -> Value {
        self.client.wait_for(|f| f.get("envelope").is_some_and(&pred)).unwrap()
    }
}

fn office_goal() -> Command {
    Command::SubmitGoal { goal: vec!["(temperature-reported office1)".into()], facts: vec![], mode: None }
}

#[test]
fn console_gets_a_full_snapshot_on_connect() {
    let mut rig = Rig::new(Timeline::default());
    let f = rig.client.next_frame().unwrap();
    let snap = &f["snapshot"];
    assert_eq!(snap["tick"], 0);
    assert_eq!(snap["mode"], "centralized");
    assert_eq!(snap["world"]["agent_pos"]["tb1"], "corridor");
    let rows = snap["liveness"].as_array().unwrap();
    // Everyone except the maintainer, which keeps the table.
    assert_eq!(rows.len(), 8, "{rows:?}");
    assert!(rows.iter().all(|r| r["status"] == "alive"));
    let tb1 = rows.iter().find(|r| r["agent"] == "tb1").unwrap();
    assert_eq!(tb1["schemas"], 3);
}

#[test]
fn submitted_goal_is_a_request_from_the_operator() {
    let mut rig = Rig::new(Timeline::default());
    rig.command("g1", &office_goal()).unwrap();
    rig.run_to(30);
    let sub = rig.wait_record(|e| e["payload"]["kind"] == "GoalSubmission");
    assert_eq!(sub["envelope"]["sender"], OPERATOR_ID);
    assert_eq!(sub["envelope"]["performative"], "request");
    assert_eq!(sub["envelope"]["recipient"], "plan-requester");
    let conv = sub["envelope"]["conversation_id"].as_str().unwrap().to_string();
    let done = rig.wait_record(|e| e["payload"]["body"]["update"] == "goal-status");
    assert_eq!(done["envelope"]["conversation_id"], conv.as_str());
    assert_eq!(done["envelope"]["recipient"], OPERATOR_ID);
    assert_eq!(done["envelope"]["payload"]["body"]["status"], "done");
}

#[test]
fn injected_failure_takes_effect_next_tick_and_shows_in_liveness() {
    let mut rig = Rig::new(Timeline::default());
    rig.run_to(12);
    let cmd = Command::InjectFailure { agent: "sensor-office2".into(), health: Health::Down };
    rig.command("f1", &cmd).unwrap();
    assert!(rig.kernel.world().is_up("sensor-office2"));
    rig.run_to(13);
    assert!(!rig.kernel.world().is_up("sensor-office2"));

    // Last heartbeat at 10: dead once 30 ticks pass, at the next sweep.
    rig.run_to(50);
    let f = rig
        .client
        .wait_for(|f| {
            f["snapshot"]["liveness"]
                .as_array()
                .is_some_and(|rows| rows.iter().any(|r| r["agent"] == "sensor-office2" && r["status"] == "dead"))
        })
        .unwrap();
    let tick = f["snapshot"]["tick"].as_u64().unwrap();
    assert!(tick > 40 && tick <= 50, "dead first reported at {tick}");

    rig.command("f2", &Command::InjectFailure { agent: "sensor-office2".into(), health: Health::Up }).unwrap();
    rig.run_to(70);
    let back = rig.wait_record(|e| e["payload"]["body"]["event"] == "resurrected");
    assert_eq!(back["envelope"]["payload"]["body"]["agent"], "sensor-office2");
}

#[test]
fn malformed_commands_get_error_frames_and_the_connection_stays_open() {
    let mut rig = Rig::new(Timeline::default());
    rig.client.send_text("this is not json").unwrap();
    rig.pump(1);
    let e = rig.client.wait_for(|f| f.get("error").is_some()).unwrap();
    assert!(e["error"]["message"].as_str().unwrap().contains("not JSON"));

    rig.client.send_text(r#"{"dir":"in","frame":{"id":"x9","command":"launch_rockets"}}"#).unwrap();
    rig.pump(1);
    let e = rig.client.wait_for(|f| f.get("error").is_some()).unwrap();
    assert_eq!(e["error"]["id"], "x9");

    rig.client.send_text(r#"{"dir":"in","frame":{"id":"x10","command":"submit_goal"}}"#).unwrap();
    rig.pump(1);
    let e = rig.client.wait_for(|f| f.get("error").is_some()).unwrap();
    assert_eq!(e["error"]["id"], "x10");

    rig.command("ok", &office_goal()).unwrap();
}

#[test]
fn unknown_targets_are_not_found() {
    let mut rig = Rig::new(Timeline::default());
    let err = rig.command("a", &Command::InjectFailure { agent: "ghost".into(), health: Health::Down }).unwrap_err();
    assert!(err.contains("not found"), "{err}");
    let err = rig
        .command("b", &Command::RespondQuery { conversation_id: "tb1:1".into(), answer: "hi".into() })
        .unwrap_err();
    assert!(err.contains("not found"), "{err}");
}

#[test]
fn login_query_answered_through_the_gateway() {
    let timeline = Timeline {
        events: vec![ScriptedEvent::Motion { tick: 40, location: "entry".into() }],
        ..Timeline::default()
    };
    let mut rig = Rig::new(timeline);
    // Run until the turtlebot asks; no auto responder is configured.
    while rig.kernel.keyboard().unwrap().open_queries().is_empty() {
        assert!(rig.kernel.now() < 80, "no query was ever asked");
        rig.run_to(rig.kernel.now() + 1);
    }
    let q = rig.wait_record(|e| e["performative"] == "query");
    let conv = q["envelope"]["conversation_id"].as_str().unwrap().to_string();

    let answer = Command::RespondQuery { conversation_id: conv.clone(), answer: "badge 7".into() };
    rig.command("r1", &answer).unwrap();
    let err = rig.command("r2", &answer).unwrap_err();
    assert!(err.contains("not found"), "second answer: {err}");

    rig.run_to(rig.kernel.now() + 5);
    let qa = rig.wait_record(|e| e["payload"]["kind"] == "QueryAnswer");
    assert_eq!(qa["envelope"]["sender"], OPERATOR_ID);
    assert_eq!(qa["envelope"]["conversation_id"], conv.as_str());
    let done = rig.wait_record(|e| e["performative"] == "confirm" && e["payload"]["body"]["action"] == "present-login");
    assert_eq!(done["envelope"]["payload"]["body"]["success"], true);
    let status = rig.wait_record(|e| e["payload"]["body"]["update"] == "goal-status");
    assert_eq!(status["envelope"]["payload"]["body"]["status"], "done");
}

#[test]
fn idle_console_does_not_perturb_the_transcript() {
    let scenario = Scenario::builtin(1).unwrap();
    let opts = RunOptions::new(Mode::Centralized);
    let plain = run_scenario(&scenario, &opts).unwrap();

    let mut gw = Gateway::bind("127.0.0.1:0", GatewayConfig::default()).unwrap();
    let client = GatewayClient::connect(&format!("ws://{}", gw.local_addr())).unwrap();
    let watched = run_scenario_with(&scenario, &opts, Some(&mut gw as &mut dyn TickHook)).unwrap();
    client.close();
    gw.close();

    assert!(plain.passed() && watched.passed());
    assert_eq!(plain.transcript_text(), watched.transcript_text());
}

#[test]
fn cli_respond_reports_unknown_conversations() {
    let mut rig = Rig::new(Timeline::default());
    let url = format!("ws://{}", rig.gw.local_addr());
    let mut child = Process::new(env!("CARGO_BIN_EXE_officemesh"))
        .args(["respond", "--gateway", &url, "--conversation", "nobody:1", "--answer", "x"])
        .stdout(std::process::Stdio::piped())
        .stderr(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    // The CLI connects as a second client; keep pumping until it is answered.
    let deadline = Instant::now() + Duration::from_secs(20);
    let status = loop {
        rig.gw.pump(&mut rig.kernel);
        if let Some(status) = child.try_wait().unwrap() {
            break status;
        }
        assert!(Instant::now() < deadline, "officemesh respond hung");
        std::thread::sleep(Duration::from_millis(2));
    };
    let out = child.wait_with_output().unwrap();
    assert_eq!(status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));
}
