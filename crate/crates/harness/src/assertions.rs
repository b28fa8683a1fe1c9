//! Transcript predicates. Each scenario lists assertions that are evaluated
//! against the finished run: the delivered envelopes, the per-tick world
//! snapshots and the world config.
//!
//! Envelopes sent by the operator console are invisible to every predicate
//! unless the predicate names `operator-console` as sender.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use officemesh::acl::{GoalState, Mode, Payload, Performative, StateUpdate, Tick};
use officemesh::bus::DeliveryRecord;
use officemesh::reasoning::{DEFAULT_EXECUTOR, DEFAULT_REQUESTER};
use officemesh::simworld::{Health, WorldConfig, WorldSnapshot, OPERATOR_ID};
use officemesh::strips::pddl::parse_literal;
use officemesh::strips::{validate_plan, Plan, ProblemSpec};

use crate::replay::format_record;

/// Records shown around the nearest candidate when an assertion fails.
const CONTEXT_RADIUS: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assertion {
    pub name: String,
    /// Modes the assertion applies to; empty means every mode.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modes: Vec<Mode>,
    pub check: Check,
}

impl Assertion {
    pub fn applies_to(&self, mode: Mode) -> bool {
        self.modes.is_empty() || self.modes.contains(&mode)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    /// At least one envelope matches.
    Exists(Match),
    /// No envelope matches.
    Absent(Match),
    Count {
        of: Match,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max: Option<usize>,
    },
    /// Envelopes matching each entry appear in this order, each strictly
    /// after the previous one.
    Sequence(Vec<Match>),
    /// No matching envelope with `sim_time` after `tick`.
    AbsentAfter { tick: Tick, of: Match },
    /// World state at `tick`, or at the end of the run.
    World {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tick: Option<Tick>,
        #[serde(default)]
        position: BTreeMap<String, String>,
        #[serde(default)]
        health: BTreeMap<String, Health>,
    },
    /// Replaying the successful steps of the goal's conversation from the
    /// world state at its first dispatch satisfies the goal.
    GoalReached { goal: usize },
    GoalStatus {
        goal: usize,
        status: GoalState,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min_replans: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_replans: Option<u32>,
    },
}

/// Conjunction of field tests on one envelope. Absent fields match anything.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Match {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub performative: Option<Performative>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sender: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipient: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conversation: Option<String>,
    /// Conversation of the n-th goal submission (0-based, transcript order).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<usize>,
    /// Payload kind, e.g. `ActionRequest`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub args: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantity: Option<String>,
    /// Every listed goal literal is among the proposal's covered literals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covers: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_tick: Option<Tick>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to_tick: Option<Tick>,
}

fn str_at<'a>(v: &'a Value, path: &[&str]) -> Option<&'a str> {
    path.iter().try_fold(v, |v, k| v.get(k)).and_then(Value::as_str)
}

/// Everything an assertion can look at.
pub struct Evidence<'a> {
    pub records: &'a [DeliveryRecord],
    /// Snapshots ordered by clock.
    pub snapshots: &'a [WorldSnapshot],
    pub world: &'a WorldConfig,
    values: Vec<Value>,
    goals: Vec<usize>,
}

impl<'a> Evidence<'a> {
    pub fn new(records: &'a [DeliveryRecord], snapshots: &'a [WorldSnapshot], world: &'a WorldConfig) -> Self {
        let values: Vec<Value> =
            records.iter().map(|r| serde_json::to_value(&r.envelope).expect("envelopes serialize")).collect();
        let goals = records
            .iter()
            .enumerate()
            .filter(|(_, r)| {
                let e = &r.envelope;
                e.performative == Performative::Request
                    && e.recipient == DEFAULT_REQUESTER
                    && e.sender != OPERATOR_ID
                    && matches!(e.payload, Payload::GoalSubmission(_))
            })
            .map(|(i, _)| i)
            .collect();
        Evidence { records, snapshots, world, values, goals }
    }

    /// Conversation id of the n-th goal submission.
    pub fn goal_conversation(&self, n: usize) -> Option<&str> {
        self.goals.get(n).map(|&i| self.records[i].envelope.conversation_id.as_str())
    }

    pub fn goal_submission(&self, n: usize) -> Option<&DeliveryRecord> {
        self.goals.get(n).map(|&i| &self.records[i])
    }

    /// Latest snapshot taken at or before `tick`.
    pub fn snapshot_at(&self, tick: Tick) -> Option<&WorldSnapshot> {
        let idx = self.snapshots.partition_point(|s| s.clock <= tick);
        idx.checked_sub(1).map(|i| &self.snapshots[i])
    }

    /// Field tests of `m` against record `i`: (field, passed).
    fn tests(&self, m: &Match, i: usize) -> Vec<(&'static str, bool)> {
        let e = &self.records[i].envelope;
        let v = &self.values[i];
        let body = &v["payload"]["body"];
        let mut out = Vec::new();
        let mut t = |name, ok| out.push((name, ok));
        if m.sender.as_deref() != Some(OPERATOR_ID) && e.sender == OPERATOR_ID {
            t("sender", false);
        }
        if let Some(p) = m.performative {
            t("performative", e.performative == p);
        }
        if let Some(s) = &m.sender {
            t("sender", &e.sender == s);
        }
        if let Some(r) = &m.recipient {
            t("recipient", &e.recipient == r);
        }
        if let Some(c) = &m.conversation {
            t("conversation", &e.conversation_id == c);
        }
        if let Some(g) = m.goal {
            t("goal", self.goal_conversation(g) == Some(e.conversation_id.as_str()));
        }
        if let Some(k) = &m.payload {
            t("payload", e.payload.kind().name() == k);
        }
        if let Some(a) = &m.action {
            t("action", str_at(body, &["action"]) == Some(a));
        }
        if let Some(args) = &m.args {
            let got: Option<Vec<&str>> =
                body.get("args").and_then(Value::as_array).map(|a| a.iter().filter_map(Value::as_str).collect());
            t("args", got.is_some_and(|g| g == args.iter().map(String::as_str).collect::<Vec<_>>()));
        }
        if let Some(l) = &m.location {
            let got = str_at(body, &["location"])
                .or_else(|| str_at(body, &["observation", "location"]))
                .or_else(|| str_at(body, &["about"]));
            t("location", got == Some(l));
        }
        if let Some(u) = &m.update {
            t("update", str_at(body, &["update"]) == Some(u));
        }
        if let Some(ev) = &m.event {
            t("event", str_at(body, &["event"]) == Some(ev));
        }
        if let Some(a) = &m.agent {
            t("agent", str_at(body, &["agent"]) == Some(a));
        }
        if let Some(s) = &m.status {
            t("status", str_at(body, &["status"]) == Some(s));
        }
        if let Some(s) = m.success {
            t("success", body.get("success").and_then(Value::as_bool) == Some(s));
        }
        if let Some(q) = &m.quantity {
            let got = str_at(body, &["quantity"]).or_else(|| str_at(body, &["observation", "quantity"]));
            t("quantity", got == Some(q));
        }
        if let Some(lits) = &m.covers {
            let covered: Vec<&str> = body
                .get("covered")
                .and_then(Value::as_array)
                .map(|a| a.iter().filter_map(Value::as_str).collect())
                .unwrap_or_default();
            t("covers", lits.iter().all(|l| covered.contains(&l.as_str())));
        }
        if let Some(from) = m.from_tick {
            t("from_tick", e.sim_time >= from);
        }
        if let Some(to) = m.to_tick {
            t("to_tick", e.sim_time <= to);
        }
        out
    }

    pub fn matches(&self, m: &Match, i: usize) -> bool {
        self.tests(m, i).iter().all(|(_, ok)| *ok)
    }

    /// Indices of matching records in `range`.
    pub fn find(&self, m: &Match, range: std::ops::Range<usize>) -> Vec<usize> {
        range.filter(|&i| self.matches(m, i)).collect()
    }

    /// The record in `range` passing the most field tests, for diagnostics.
    fn nearest(&self, m: &Match, range: std::ops::Range<usize>) -> Option<(usize, Vec<&'static str>)> {
        let mut best: Option<(usize, usize, Vec<&'static str>)> = None;
        for i in range {
            let tests = self.tests(m, i);
            let passed = tests.iter().filter(|(_, ok)| *ok).count();
            if passed == 0 {
                continue;
            }
            if best.as_ref().is_none_or(|(_, p, _)| passed > *p) {
                let failed = tests.iter().filter(|(_, ok)| !ok).map(|(f, _)| *f).collect();
                best = Some((i, passed, failed));
            }
        }
        best.map(|(i, _, failed)| (i, failed))
    }

    fn context(&self, center: usize) -> Vec<String> {
        let lo = center.saturating_sub(CONTEXT_RADIUS);
        let hi = (center + CONTEXT_RADIUS + 1).min(self.records.len());
        (lo..hi)
            .map(|i| {
                let mark = if i == center { ">" } else { " " };
                format!("{mark} {}", format_record(&self.records[i]))
            })
            .collect()
    }

    fn miss(&self, m: &Match, range: std::ops::Range<usize>, what: String) -> Failure {
        match self.nearest(m, range) {
            Some((i, failed)) => Failure {
                reason: format!("{what}; nearest envelope differs in {}", failed.join(", ")),
                context: self.context(i),
            },
            None => Failure { reason: format!("{what}; nothing comes close"), context: Vec::new() },
        }
    }

    pub fn evaluate(&self, check: &Check) -> Result<(), Failure> {
        let all = 0..self.records.len();
        match check {
            Check::Exists(m) => {
                if self.find(m, all.clone()).is_empty() {
                    return Err(self.miss(m, all, "no matching envelope".into()));
                }
            }
            Check::Absent(m) => {
                if let Some(&i) = self.find(m, all).first() {
                    return Err(Failure { reason: "unexpected matching envelope".into(), context: self.context(i) });
                }
            }
            Check::Count { of, min, max } => {
                let hits = self.find(of, all.clone());
                if min.is_some_and(|min| hits.len() < min) {
                    return Err(self.miss(of, all, format!("{} matching envelopes, expected at least {}", hits.len(), min.unwrap())));
                }
                if let Some(max) = *max {
                    if hits.len() > max {
                        return Err(Failure {
                            reason: format!("{} matching envelopes, expected at most {max}", hits.len()),
                            context: self.context(hits[max]),
                        });
                    }
                }
            }
            Check::Sequence(steps) => {
                let mut from = 0;
                for (n, m) in steps.iter().enumerate() {
                    match self.find(m, from..self.records.len()).first() {
                        Some(&i) => from = i + 1,
                        None => {
                            let what = if n == 0 {
                                "sequence step 1 never happens".to_string()
                            } else {
                                format!("sequence step {} never follows step {}", n + 1, n)
                            };
                            let mut failure = self.miss(m, from..self.records.len(), what);
                            if failure.context.is_empty() && n > 0 {
                                failure.context = self.context(from - 1);
                            }
                            return Err(failure);
                        }
                    }
                }
            }
            Check::AbsentAfter { tick, of } => {
                let late = self.find(of, all).into_iter().find(|&i| self.records[i].envelope.sim_time > *tick);
                if let Some(i) = late {
                    return Err(Failure { reason: format!("matching envelope after tick {tick}"), context: self.context(i) });
                }
            }
            Check::World { tick, position, health } => {
                let snap = match tick {
                    Some(t) => self.snapshot_at(*t),
                    None => self.snapshots.last(),
                }
                .ok_or_else(|| Failure { reason: "no world snapshot for that tick".into(), context: Vec::new() })?;
                for (agent, want) in position {
                    let got = snap.agent_pos.get(agent);
                    if got != Some(want) {
                        return Err(Failure {
                            reason: format!("at tick {} {agent} is at {got:?}, expected {want}", snap.clock),
                            context: Vec::new(),
                        });
                    }
                }
                for (agent, want) in health {
                    let got = snap.health.get(agent);
                    if got != Some(want) {
                        return Err(Failure {
                            reason: format!("at tick {} {agent} is {got:?}, expected {want:?}", snap.clock),
                            context: Vec::new(),
                        });
                    }
                }
            }
            Check::GoalReached { goal } => self.goal_reached(*goal)?,
            Check::GoalStatus { goal, status, min_replans, max_replans } => {
                let conv = self.goal_conversation(*goal).ok_or_else(|| no_goal(*goal))?;
                let report = self.records.iter().enumerate().find_map(|(i, r)| match &r.envelope.payload {
                    Payload::StateUpdate(StateUpdate::GoalStatus { status, replans, .. })
                        if r.envelope.conversation_id == conv && r.envelope.sender == DEFAULT_REQUESTER =>
                    {
                        Some((i, *status, *replans))
                    }
                    _ => None,
                });
                let Some((i, got, replans)) = report else {
                    return Err(Failure { reason: format!("goal {goal} ({conv}) never reports a status"), context: Vec::new() });
                };
                if got != *status {
                    return Err(Failure { reason: format!("goal {goal} ended {got:?}, expected {status:?}"), context: self.context(i) });
                }
                if min_replans.is_some_and(|m| replans < m) || max_replans.is_some_and(|m| replans > m) {
                    return Err(Failure {
                        reason: format!("goal {goal} took {replans} replans, expected {min_replans:?}..={max_replans:?}"),
                        context: self.context(i),
                    });
                }
            }
        }
        Ok(())
    }

    /// Rebuilds the executed plan of goal `n` from its successful action
    /// confirmations and validates it against the composite model.
    pub fn goal_reached(&self, n: usize) -> Result<(), Failure> {
        let submission = self.goal_submission(n).ok_or_else(|| no_goal(n))?;
        let conv = submission.envelope.conversation_id.as_str();
        let Payload::GoalSubmission(body) = &submission.envelope.payload else { unreachable!("indexed as a goal") };
        let domain = self.world.composite_domain().map_err(|e| Failure { reason: e.to_string(), context: Vec::new() })?;
        let in_conv = |r: &&DeliveryRecord| r.envelope.conversation_id == conv;

        let first_dispatch = self
            .records
            .iter()
            .filter(in_conv)
            .find(|r| r.envelope.sender == DEFAULT_EXECUTOR && matches!(r.envelope.payload, Payload::ActionRequest(_)))
            .map(|r| r.envelope.sim_time)
            .unwrap_or(submission.envelope.sim_time);
        let snap = self
            .snapshot_at(first_dispatch)
            .ok_or_else(|| Failure { reason: format!("no snapshot at tick {first_dispatch}"), context: Vec::new() })?;

        let bad = |what: String| Failure { reason: what, context: Vec::new() };
        let mut problem = ProblemSpec::new(format!("replay-{n}"), &domain);
        problem.objects = self.world.map.locations();
        problem.init.extend(self.world.static_facts());
        for (robot, at) in &snap.agent_pos {
            problem.init.insert(officemesh::strips::Atom::new("at", [robot.as_str(), at.as_str()]));
        }
        for fact in &body.facts {
            let lit = parse_literal(fact).map_err(|e| bad(format!("goal fact {fact}: {e}")))?;
            problem.init.insert(lit.atom);
        }
        for g in &body.goal {
            problem.goal.push(parse_literal(g).map_err(|e| bad(format!("goal literal {g}: {e}")))?);
        }

        let mut steps = Vec::new();
        for r in self.records.iter().filter(in_conv) {
            let Payload::ActionResult(res) = &r.envelope.payload else { continue };
            if !res.success || r.envelope.performative != Performative::Confirm || r.envelope.recipient != DEFAULT_EXECUTOR {
                continue;
            }
            let name = format!("{}.{}", r.envelope.sender, res.action);
            let schema = domain.schema(&name).ok_or_else(|| bad(format!("executed {name} is not in the model")))?;
            steps.push(schema.instantiate(&res.args).map_err(|e| bad(e.to_string()))?);
        }
        let plan = Plan::new(steps);
        let validation = validate_plan(&domain, &problem, &plan);
        if validation.is_valid() {
            Ok(())
        } else {
            Err(bad(format!(
                "replay of {} executed steps of goal {n} ({conv}) fails: {}",
                plan.len(),
                validation.diagnostic.unwrap_or_default()
            )))
        }
    }
}

fn no_goal(n: usize) -> Failure {
    Failure { reason: format!("goal {n} was never submitted"), context: Vec::new() }
}

/// Why an assertion failed, with the transcript lines around the closest miss.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Failure {
    pub reason: String,
    pub context: Vec<String>,
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.reason)?;
        for line in &self.context {
            write!(f, "\n    {line}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub name: String,
    pub failure: Option<Failure>,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

/// Scenario-independent checks every run must satisfy.
pub fn invariants(ev: &Evidence<'_>) -> Vec<Verdict> {
    vec![
        Verdict { name: "down agents are silent".into(), failure: down_agents_silent(ev).err() },
        Verdict { name: "mobile agents never teleport".into(), failure: no_teleport(ev).err() },
        Verdict { name: "transcript order strictly increases".into(), failure: order_increases(ev).err() },
    ]
}

fn down_agents_silent(ev: &Evidence<'_>) -> Result<(), Failure> {
    for (i, r) in ev.records.iter().enumerate() {
        let e = &r.envelope;
        let down = ev.snapshot_at(e.sim_time).and_then(|s| s.health.get(&e.sender)) == Some(&Health::Down);
        if down {
            return Err(Failure { reason: format!("{} sent while down", e.sender), context: ev.context(i) });
        }
    }
    Ok(())
}

/// Between consecutive snapshots a robot either stays or crosses one edge,
/// and only when it confirmed that move.
fn no_teleport(ev: &Evidence<'_>) -> Result<(), Failure> {
    for w in ev.snapshots.windows(2) {
        for (robot, to) in &w[1].agent_pos {
            let Some(from) = w[0].agent_pos.get(robot) else { continue };
            if from == to {
                continue;
            }
            if ev.world.map.weight(from, to).is_none() {
                return Err(Failure {
                    reason: format!("{robot} jumped from {from} to {to} at tick {} without an edge", w[1].clock),
                    context: Vec::new(),
                });
            }
            let confirmed = ev.records.iter().any(|r| {
                let e = &r.envelope;
                e.sender == *robot
                    && e.sim_time > w[0].clock
                    && e.sim_time <= w[1].clock
                    && matches!(&e.payload, Payload::ActionResult(a)
                        if a.success && a.action == "move" && a.args == [from.clone(), to.clone()])
            });
            if !confirmed {
                return Err(Failure {
                    reason: format!("{robot} moved {from} -> {to} at tick {} without a confirmed move", w[1].clock),
                    context: Vec::new(),
                });
            }
        }
    }
    Ok(())
}

fn order_increases(ev: &Evidence<'_>) -> Result<(), Failure> {
    match ev.records.windows(2).position(|w| w[1].order <= w[0].order) {
        Some(i) => Err(Failure { reason: "order field does not increase".into(), context: ev.context(i + 1) }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn match_parses_strictly() {
        let m: Match = serde_json::from_str(r#"{"performative":"call-for-proposals","sender":"x"}"#).unwrap();
        assert_eq!(m.performative, Some(Performative::CallForProposals));
        assert!(serde_json::from_str::<Match>(r#"{"bogus":1}"#).is_err());
    }

    #[test]
    fn checks_parse() {
        let c: Check = serde_json::from_str(r#"{"count":{"of":{"sender":"tb1"},"min":1}}"#).unwrap();
        assert!(matches!(c, Check::Count { min: Some(1), max: None, .. }));
        let c: Check = serde_json::from_str(r#"{"world":{"health":{"tb1":"down"}}}"#).unwrap();
        assert!(matches!(c, Check::World { tick: None, .. }));
    }
}
