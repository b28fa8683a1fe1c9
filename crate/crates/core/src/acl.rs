//! Abstract message classes shared by every agent.
//!
//! An [`Envelope`] carries one of the eleven [`Performative`]s and a typed
//! [`Payload`]. Envelopes travel as one canonical JSON object per line with
//! sorted keys, so identical envelopes always encode to identical bytes.
//!
//! Which payload kinds may ride under which performative is fixed by
//! [`is_compatible`]; both encoding and decoding enforce it.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cost::Cost;

pub type AgentId = String;
pub type Tick = u64;

/// Reserved recipient meaning "every subscriber".
pub const BROADCAST: &str = "*";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Performative {
    Agree,
    Cancel,
    Refuse,
    Request,
    CallForProposals,
    Propose,
    Accept,
    Reject,
    Inform,
    Query,
    Confirm,
}

impl Performative {
    /// All performatives in their canonical order.
    pub const ALL: [Performative; 11] = [
        Performative::Agree,
        Performative::Cancel,
        Performative::Refuse,
        Performative::Request,
        Performative::CallForProposals,
        Performative::Propose,
        Performative::Accept,
        Performative::Reject,
        Performative::Inform,
        Performative::Query,
        Performative::Confirm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Performative::Agree => "agree",
            Performative::Cancel => "cancel",
            Performative::Refuse => "refuse",
            Performative::Request => "request",
            Performative::CallForProposals => "call-for-proposals",
            Performative::Propose => "propose",
            Performative::Accept => "accept",
            Performative::Reject => "reject",
            Performative::Inform => "inform",
            Performative::Query => "query",
            Performative::Confirm => "confirm",
        }
    }

    pub fn from_name(name: &str) -> Option<Performative> {
        Performative::ALL.into_iter().find(|p| p.name() == name)
    }

    /// Short description of the typical role of the message class.
    pub fn roles(self) -> &'static [&'static str] {
        match self {
            Performative::Agree => &["reply with plan proposal (from actuator)"],
            Performative::Cancel => &["cancel existing commitment"],
            Performative::Refuse => &["refuse deployed request"],
            Performative::Request => &[
                "request plan from plan requester",
                "request plan from planner",
                "request execution of plan",
                "request actuator to execute",
                "request for state/goal update",
            ],
            Performative::CallForProposals => &["broadcast call for plan proposals"],
            Performative::Propose => &["reply with plan proposal (from planner)"],
            Performative::Accept => &["accept proposal"],
            Performative::Reject => &["reject proposal"],
            Performative::Inform => &["inform action model on activation", "update self state"],
            Performative::Query => &["ask for information from the user interface"],
            Performative::Confirm => &["monitor action / plan execution", "relay observations"],
        }
    }
}

impl fmt::Display for Performative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Performative {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Performative {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        Performative::from_name(&name)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown performative `{name}`")))
    }
}

/// The eleven performatives in their canonical order.
pub fn performative_set() -> Vec<Performative> {
    Performative::ALL.to_vec()
}

/// Bus topic carrying messages of the given performative.
pub fn topic_for(p: Performative) -> String {
    format!("/acl/{}", p.name())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Centralized,
    Decentralized,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Centralized => "centralized",
            Mode::Decentralized => "decentralized",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "centralized" => Ok(Mode::Centralized),
            "decentralized" => Ok(Mode::Decentralized),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Actuator,
    Sensor,
    Reasoner,
    Interface,
}

/// One step of a plan as it travels on the wire.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRef {
    /// Owner-qualified schema name, e.g. `tb1.move`.
    pub action: String,
    pub args: Vec<String>,
    pub cost: Cost,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanBody {
    pub steps: Vec<StepRef>,
    pub total_cost: Cost,
}

impl PlanBody {
    pub fn empty() -> Self {
        PlanBody { steps: Vec::new(), total_cost: Cost::ZERO }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalSubmission {
    /// Goal literals in PDDL syntax, e.g. `(temperature-reported office1)`.
    pub goal: Vec<String>,
    /// Facts the submitter knows to hold, added to the planning state.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub facts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
}

/// Plan request, used for planner requests, calls for proposals, execution
/// requests (with `plan` set) and refusals (with `reason` set).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanRequestBody {
    pub goal: Vec<String>,
    pub mode: Mode,
    pub requester: AgentId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline: Option<Tick>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub facts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanBody>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl PlanRequestBody {
    pub fn new(goal: Vec<String>, mode: Mode, requester: impl Into<AgentId>) -> Self {
        PlanRequestBody {
            goal,
            mode,
            requester: requester.into(),
            deadline: None,
            facts: Vec::new(),
            domain: None,
            problem: None,
            plan: None,
            reason: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanStatus {
    Solved,
    Unsolvable,
    ResourceLimit,
    Error,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanReply {
    pub status: PlanStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanBody>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalBody {
    pub proposer: AgentId,
    pub plan: PlanBody,
    pub covered: Vec<String>,
    pub cost: Cost,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionRequest {
    pub step: u32,
    /// Unqualified method name on the receiving agent, e.g. `move`.
    pub action: String,
    pub args: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Temperature,
    Motion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationBody {
    pub observer: AgentId,
    pub quantity: Quantity,
    pub location: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub observed_at: Tick,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionResult {
    pub step: u32,
    pub action: String,
    pub args: Vec<String>,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<ObservationBody>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapabilityAdvertBody {
    pub agent_id: AgentId,
    pub kind: AgentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
    pub heartbeat_period: Tick,
    pub sensed: Vec<String>,
    /// The agent's capability model as a PDDL domain.
    pub model: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CapabilityEvent {
    New,
    Updated,
    Dead,
    Resurrected,
    Quarantined,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecutionStatus {
    Success,
    Failed,
    Cancelled,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub step: u32,
    pub action: String,
    pub args: Vec<String>,
    pub result: String,
    pub tick: Tick,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoalState {
    Done,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "update", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StateUpdate {
    /// Broadcast by the domain maintainer whenever the composite model changes.
    CapabilityChange {
        agent: AgentId,
        event: CapabilityEvent,
        alive: Vec<AgentId>,
        schemas: Vec<String>,
    },
    /// Ask the domain maintainer for the current model and beliefs.
    ModelRequest,
    ModelSnapshot {
        domain: String,
        facts: Vec<String>,
        /// Typed objects as `name - type`.
        objects: Vec<String>,
    },
    AgentState {
        agent: AgentId,
        location: String,
    },
    ExecutionReport {
        status: ExecutionStatus,
        per_step: Vec<StepRecord>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        failure_reason: Option<String>,
    },
    GoalStatus {
        status: GoalState,
        replans: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
    SetMode {
        mode: Mode,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryBody {
    pub question: String,
    pub about: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryAnswer {
    pub answer: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CancelBody {
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", deny_unknown_fields)]
pub enum Payload {
    GoalSubmission(GoalSubmission),
    PlanRequest(PlanRequestBody),
    PlanReply(PlanReply),
    ProposalBody(ProposalBody),
    ActionRequest(ActionRequest),
    ActionResult(ActionResult),
    CapabilityAdvertBody(CapabilityAdvertBody),
    StateUpdate(StateUpdate),
    QueryBody(QueryBody),
    QueryAnswer(QueryAnswer),
    CancelBody(CancelBody),
    Observation(ObservationBody),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PayloadKind {
    GoalSubmission,
    PlanRequest,
    PlanReply,
    ProposalBody,
    ActionRequest,
    ActionResult,
    CapabilityAdvertBody,
    StateUpdate,
    QueryBody,
    QueryAnswer,
    CancelBody,
    Observation,
}

impl PayloadKind {
    pub const ALL: [PayloadKind; 12] = [
        PayloadKind::GoalSubmission,
        PayloadKind::PlanRequest,
        PayloadKind::PlanReply,
        PayloadKind::ProposalBody,
        PayloadKind::ActionRequest,
        PayloadKind::ActionResult,
        PayloadKind::CapabilityAdvertBody,
        PayloadKind::StateUpdate,
        PayloadKind::QueryBody,
        PayloadKind::QueryAnswer,
        PayloadKind::CancelBody,
        PayloadKind::Observation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PayloadKind::GoalSubmission => "GoalSubmission",
            PayloadKind::PlanRequest => "PlanRequest",
            PayloadKind::PlanReply => "PlanReply",
            PayloadKind::ProposalBody => "ProposalBody",
            PayloadKind::ActionRequest => "ActionRequest",
            PayloadKind::ActionResult => "ActionResult",
            PayloadKind::CapabilityAdvertBody => "CapabilityAdvertBody",
            PayloadKind::StateUpdate => "StateUpdate",
            PayloadKind::QueryBody => "QueryBody",
            PayloadKind::QueryAnswer => "QueryAnswer",
            PayloadKind::CancelBody => "CancelBody",
            PayloadKind::Observation => "Observation",
        }
    }
}

impl Payload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            Payload::GoalSubmission(_) => PayloadKind::GoalSubmission,
            Payload::PlanRequest(_) => PayloadKind::PlanRequest,
            Payload::PlanReply(_) => PayloadKind::PlanReply,
            Payload::ProposalBody(_) => PayloadKind::ProposalBody,
            Payload::ActionRequest(_) => PayloadKind::ActionRequest,
            Payload::ActionResult(_) => PayloadKind::ActionResult,
            Payload::CapabilityAdvertBody(_) => PayloadKind::CapabilityAdvertBody,
            Payload::StateUpdate(_) => PayloadKind::StateUpdate,
            Payload::QueryBody(_) => PayloadKind::QueryBody,
            Payload::QueryAnswer(_) => PayloadKind::QueryAnswer,
            Payload::CancelBody(_) => PayloadKind::CancelBody,
            Payload::Observation(_) => PayloadKind::Observation,
        }
    }
}

/// The performative/payload compatibility table.
pub fn is_compatible(p: Performative, kind: PayloadKind) -> bool {
    use PayloadKind as K;
    use Performative as P;
    match p {
        P::Request => matches!(
            kind,
            K::GoalSubmission | K::PlanRequest | K::ActionRequest | K::StateUpdate
        ),
        P::CallForProposals => kind == K::PlanRequest,
        P::Propose => matches!(kind, K::ProposalBody | K::PlanReply),
        P::Agree | P::Accept | P::Reject => kind == K::ProposalBody,
        P::Inform => matches!(kind, K::CapabilityAdvertBody | K::StateUpdate | K::QueryAnswer),
        P::Confirm => matches!(kind, K::ActionResult | K::Observation),
        P::Query => kind == K::QueryBody,
        P::Refuse => matches!(kind, K::PlanRequest | K::ActionRequest),
        P::Cancel => kind == K::CancelBody,
    }
}

/// Performatives whose envelopes answer an earlier request or call.
pub fn is_reply(p: Performative) -> bool {
    matches!(
        p,
        Performative::Agree
            | Performative::Refuse
            | Performative::Propose
            | Performative::Accept
            | Performative::Reject
            | Performative::Confirm
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub msg_id: String,
    pub conversation_id: String,
    pub performative: Performative,
    pub sender: AgentId,
    pub recipient: AgentId,
    pub payload: Payload,
    pub sim_time: Tick,
    pub seq: u64,
}

impl Envelope {
    pub fn is_broadcast(&self) -> bool {
        self.recipient == BROADCAST
    }

    pub fn topic(&self) -> String {
        topic_for(self.performative)
    }

    pub fn check_compatible(&self) -> Result<(), AclError> {
        let kind = self.payload.kind();
        if is_compatible(self.performative, kind) {
            Ok(())
        } else {
            Err(AclError::Compatibility { performative: self.performative, kind })
        }
    }

    /// Canonical JSON value (sorted keys).
    pub fn to_value(&self) -> Result<serde_json::Value, AclError> {
        serde_json::to_value(self).map_err(|e| AclError::Encoding(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AclError {
    #[error("encoding error: {0}")]
    Encoding(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown performative `{0}`")]
    UnknownPerformative(String),
    #[error("payload {} is not allowed under {performative}", kind.name())]
    Compatibility { performative: Performative, kind: PayloadKind },
}

/// Encodes an envelope as one newline-terminated canonical JSON line.
pub fn encode_envelope(e: &Envelope) -> Result<String, AclError> {
    if !is_compatible(e.performative, e.payload.kind()) {
        return Err(AclError::Encoding(format!(
            "payload {} is not allowed under {}",
            e.payload.kind().name(),
            e.performative
        )));
    }
    // serde_json::Value keeps object keys in a BTreeMap, which sorts them.
    let value = e.to_value()?;
    let mut line = serde_json::to_string(&value).map_err(|e| AclError::Encoding(e.to_string()))?;
    line.push('\n');
    Ok(line)
}

/// Decodes one line produced by [`encode_envelope`]. Unknown fields are rejected.
pub fn decode_envelope(line: &str) -> Result<Envelope, AclError> {
    let value: serde_json::Value =
        serde_json::from_str(line.trim_end_matches(['\n', '\r'])).map_err(|e| AclError::Parse(e.to_string()))?;
    decode_value(value)
}

pub fn decode_value(value: serde_json::Value) -> Result<Envelope, AclError> {
    let obj = value
        .as_object()
        .ok_or_else(|| AclError::Parse("envelope must be a JSON object".into()))?;
    match obj.get("performative") {
        Some(serde_json::Value::String(name)) if Performative::from_name(name).is_none() => {
            return Err(AclError::UnknownPerformative(name.clone()));
        }
        _ => {}
    }
    let envelope: Envelope = serde_json::from_value(value).map_err(|e| AclError::Parse(e.to_string()))?;
    envelope.check_compatible()?;
    Ok(envelope)
}
