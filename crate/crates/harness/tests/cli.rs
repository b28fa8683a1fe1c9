use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use officemesh::cost::Cost;
use officemesh::planner::parse_plan_text;
use officemesh::simworld::WorldConfig;
use officemesh::strips::pddl::{parse_domain, parse_problem};
use officemesh::strips::validate_plan;
use officemesh_harness::runner::{SNAPSHOTS_FILE, TRANSCRIPT_FILE};

fn officemesh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_officemesh")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(name: &str) -> PathBuf {
    root().join("fixtures/office").join(name)
}

fn run_into(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    officemesh(&args)
}

#[test]
fn run_writes_both_files_and_reports_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_into(tmp.path(), &["--scenario", "1"]);
    let text = stdout(&out);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains(": pass ("), "{text}");
    assert!(!text.contains("FAIL"), "{text}");
    assert!(text.contains(&format!("transcript: {}", tmp.path().join(TRANSCRIPT_FILE).display())));
    assert!(tmp.path().join(TRANSCRIPT_FILE).is_file());
    assert!(tmp.path().join(SNAPSHOTS_FILE).is_file());
}

#[test]
fn same_seed_same_bytes_from_the_binary() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let out = run_into(dir.path(), &["--scenario", "2", "--mode", "decentralized", "--seed", "9"]);
        assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join(TRANSCRIPT_FILE)).unwrap();
    assert_eq!(read(&a), read(&b));
    let snaps = |d: &tempfile::TempDir| std::fs::read(d.path().join(SNAPSHOTS_FILE)).unwrap();
    assert_eq!(snaps(&a), snaps(&b));
}

#[test]
fn replay_filters_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run_into(tmp.path(), &["--scenario", "3"]).status.success());
    let t = tmp.path().join(TRANSCRIPT_FILE);
    let t = t.to_str().unwrap();

    let out = officemesh(&["replay", t, "--filter", "performative=query", "--expect"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1, "{text}");
    assert!(text.contains("query tb1 -> keyboard"), "{text}");

    // Heartbeats are hidden unless asked for.
    let quiet = stdout(&officemesh(&["replay", t, "--filter", "sender=camera"]));
    let loud = stdout(&officemesh(&["replay", t, "--filter", "sender=camera", "--heartbeats"]));
    assert!(!quiet.is_empty() && quiet.lines().count() < loud.lines().count());
    assert!(loud.lines().all(|l| l.contains(" camera -> ")));

    let none = officemesh(&["replay", t, "--filter", "sender=nobody", "--expect"]);
    assert_eq!(none.status.code(), Some(1));
    assert!(stdout(&none).is_empty());
    assert_eq!(officemesh(&["replay", t, "--filter", "sender=nobody"]).status.code(), Some(0));

    let bad = officemesh(&["replay", t, "--filter", "colour=blue"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).starts_with("error: "));

    let missing = officemesh(&["replay", tmp.path().join("nope.jsonl").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}

fn expected_costs() -> BTreeMap<String, serde_json::Value> {
    serde_json::from_str(&std::fs::read_to_string(fixture("expected.json")).unwrap()).unwrap()
}

/// Parses the printed plan back, checks it against the problem and returns its cost line.
fn check_plan_output(name: &str, domain_file: &str, text: &str) -> u64 {
    let domain = parse_domain(&std::fs::read_to_string(fixture(domain_file)).unwrap()).unwrap();
    let problem = parse_problem(&std::fs::read_to_string(fixture(&format!("{name}.pddl"))).unwrap(), &domain).unwrap();
    let plan = parse_plan_text(&domain, text).unwrap();
    let v = validate_plan(&domain, &problem, &plan);
    assert!(v.is_valid(), "{name}: {text}");
    let printed = text.lines().find_map(|l| l.strip_prefix("; cost = ")).expect("cost line");
    assert_eq!(printed, v.cost.to_string(), "{name}");
    printed.parse().unwrap()
}

#[test]
fn plan_prints_valid_optimal_plans_for_the_fixtures() {
    for (name, entry) in expected_costs() {
        let domain = entry["domain"].as_str().unwrap();
        let d = fixture(domain);
        let p = fixture(&format!("{name}.pddl"));
        let out = officemesh(&["plan", "--domain", d.to_str().unwrap(), "--problem", p.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{name}");
        let cost = check_plan_output(&name, domain, &stdout(&out));
        assert_eq!(Cost::integer(cost), Cost::integer(entry["cost"].as_u64().unwrap()), "{name}");

        let out = officemesh(&[
            "plan", "--domain", d.to_str().unwrap(), "--problem", p.to_str().unwrap(), "--planner", "satisficing",
        ]);
        assert_eq!(out.status.code(), Some(0), "{name}");
        assert!(check_plan_output(&name, domain, &stdout(&out)) >= entry["cost"].as_u64().unwrap());
    }
}

#[test]
fn unsolvable_problem_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let problem = tmp.path().join("stuck.pddl");
    std::fs::write(
        &problem,
        "(define (problem stuck) (:domain composite) (:objects corridor office1 entry - location)
           (:init) (:goal (and (temperature-reported office1))))",
    )
    .unwrap();
    let d = fixture("domain-no-sensors.pddl");
    let out = officemesh(&["plan", "--domain", d.to_str().unwrap(), "--problem", problem.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).starts_with("; no plan:"), "{}", stdout(&out));
}

/// The binary's own `plan` subcommand works as an external planner.
#[test]
fn external_planner_round_trip() {
    let bin = env!("CARGO_BIN_EXE_officemesh");
    let cmd = format!("{bin} plan --domain {{domain}} --problem {{problem}}");
    for (name, entry) in expected_costs() {
        let domain = entry["domain"].as_str().unwrap();
        let d = fixture(domain);
        let p = fixture(&format!("{name}.pddl"));
        let out = officemesh(&[
            "plan", "--domain", d.to_str().unwrap(), "--problem", p.to_str().unwrap(), "--planner", "external",
            "--planner-cmd", &cmd,
        ]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(check_plan_output(&name, domain, &stdout(&out)), entry["cost"].as_u64().unwrap());
    }

    let tmp = tempfile::tempdir().unwrap();
    let internal = run_into(&tmp.path().join("internal"), &["--scenario", "1"]);
    let external = run_into(&tmp.path().join("external"), &["--scenario", "1", "--planner", "external", "--planner-cmd", &cmd]);
    assert!(internal.status.success());
    assert!(external.status.success(), "{}", stdout(&external));
    let read = |sub: &str| std::fs::read(tmp.path().join(sub).join(TRANSCRIPT_FILE)).unwrap();
    assert_eq!(read("internal"), read("external"));

    let d = fixture("domain.pddl");
    let p = fixture("all-rooms.pddl");
    let base = ["plan", "--domain", d.to_str().unwrap(), "--problem", p.to_str().unwrap(), "--planner", "external"];
    assert_eq!(officemesh(&base).status.code(), Some(2), "needs --planner-cmd");
    let mut failing = base.to_vec();
    failing.extend(["--planner-cmd", "false"]);
    let out = officemesh(&failing);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).starts_with("; no plan:"));
}

#[test]
fn dump_domain_matches_the_fixture_and_the_world() {
    let out = officemesh(&["dump-domain"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(text, std::fs::read_to_string(fixture("domain.pddl")).unwrap());
    let parsed = parse_domain(&text).unwrap();
    assert_eq!(parsed, WorldConfig::office().composite_domain().unwrap());

    let world = root().join("scenarios/office.json");
    let again = officemesh(&["dump-domain", "--world", world.to_str().unwrap()]);
    assert_eq!(stdout(&again), text);
}

#[test]
fn failing_scenario_file_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let mut spec: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root().join("scenarios/scenario1.json")).unwrap()).unwrap();
    spec["timeline"]["failures"] = serde_json::json!([]);
    spec["world"] = serde_json::Value::from(root().join("scenarios/office.json").to_str().unwrap());
    let file = tmp.path().join("no-failure.json");
    std::fs::write(&file, serde_json::to_string_pretty(&spec).unwrap()).unwrap();

    let out = officemesh(&["run", "--file", file.to_str().unwrap(), "--out", tmp.path().join("out").to_str().unwrap()]);
    let text = stdout(&out);
    assert_eq!(out.status.code(), Some(1), "{text}");
    assert!(text.contains("  FAIL  "), "{text}");
    assert!(text.contains(": FAIL ("), "{text}");
    assert!(text.lines().any(|l| l.starts_with("  ok    ")), "invariants still hold: {text}");

    let missing = officemesh(&["run", "--file", tmp.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}
