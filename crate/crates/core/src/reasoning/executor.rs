use std::any::Any;
use std::collections::{BTreeMap, BTreeSet};

use log::{info, warn};

use crate::acl::{
    ActionRequest, AgentId, AgentKind, CancelBody, Envelope, ExecutionStatus, Payload, Performative, StateUpdate,
    StepRecord, StepRef, Tick,
};
use crate::agent::{AgentCtx, Behavior, CapabilityAdvert, DEFAULT_HEARTBEAT_PERIOD};

use super::DEFAULT_EXECUTOR;

pub const DEFAULT_ACTION_TIMEOUT: Tick = 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExecutorConfig {
    pub action_timeout: Tick,
    /// Extra attempts per step after the first failure.
    pub retries: u32,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        ExecutorConfig { action_timeout: DEFAULT_ACTION_TIMEOUT, retries: 1 }
    }
}

/// Owner of a qualified action name (`tb1.move` → `tb1`).
pub fn step_owner(action: &str) -> &str {
    action.split_once('.').map_or(action, |(owner, _)| owner)
}

/// Method part of a qualified action name (`tb1.move` → `move`).
pub fn step_method(action: &str) -> &str {
    action.split_once('.').map_or(action, |(_, method)| method)
}

#[derive(Clone, Debug, PartialEq)]
struct Dispatch {
    id: u32,
    attempt: u32,
    sent_at: Tick,
    owner: AgentId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActiveExecution {
    pub requester: AgentId,
    pub steps: Vec<StepRef>,
    pub next: usize,
    pub records: Vec<StepRecord>,
    current: Option<Dispatch>,
}

/// Dispatches plan steps one at a time and watches capability changes.
pub struct PlanExecutor {
    id: AgentId,
    cfg: ExecutorConfig,
    executions: BTreeMap<String, ActiveExecution>,
    alive: Option<BTreeSet<AgentId>>,
    schemas: Option<BTreeSet<String>>,
    dispatches: u32,
}

impl PlanExecutor {
    pub fn new(cfg: ExecutorConfig) -> Self {
        PlanExecutor {
            id: DEFAULT_EXECUTOR.into(),
            cfg,
            executions: BTreeMap::new(),
            alive: None,
            schemas: None,
            dispatches: 0,
        }
    }

    pub fn with_id(mut self, id: &str) -> Self {
        self.id = id.to_string();
        self
    }

    pub fn executions(&self) -> &BTreeMap<String, ActiveExecution> {
        &self.executions
    }

    /// Why `step` cannot run under the current capability view, if it can't.
    fn blocked(&self, step: &StepRef) -> Option<String> {
        let owner = step_owner(&step.action);
        if self.alive.as_ref().is_some_and(|a| !a.contains(owner)) {
            return Some(format!("owner {owner} is dead"));
        }
        if self.schemas.as_ref().is_some_and(|s| !s.contains(&step.action)) {
            return Some(format!("schema {} is gone", step.action));
        }
        None
    }

    fn dispatch(&mut self, ctx: &mut AgentCtx<'_>, conversation: &str, attempt: u32) {
        let Some(exec) = self.executions.get(conversation) else { return };
        if exec.next == exec.steps.len() {
            return self.finish(ctx, conversation, ExecutionStatus::Success, None);
        }
        let step = exec.steps[exec.next].clone();
        if let Some(reason) = self.blocked(&step) {
            return self.finish(ctx, conversation, ExecutionStatus::Failed, Some(format!("step {}: {reason}", exec.next + 1)));
        }
        self.dispatches += 1;
        let id = self.dispatches;
        let owner = step_owner(&step.action).to_string();
        let request = ActionRequest { step: id, action: step_method(&step.action).to_string(), args: step.args.clone(), reason: None };
        ctx.send(Performative::Request, &owner, conversation, Payload::ActionRequest(request));
        if let Some(exec) = self.executions.get_mut(conversation) {
            exec.current = Some(Dispatch { id, attempt, sent_at: ctx.now, owner });
        }
    }

    fn finish(&mut self, ctx: &mut AgentCtx<'_>, conversation: &str, status: ExecutionStatus, reason: Option<String>) {
        let Some(exec) = self.executions.remove(conversation) else { return };
        if let Some(d) = &exec.current {
            if status != ExecutionStatus::Success {
                let cancel = CancelBody { reason: reason.clone().unwrap_or_default(), step: Some(d.id) };
                ctx.send(Performative::Cancel, &d.owner, conversation, Payload::CancelBody(cancel));
            }
        }
        info!("{conversation}: execution {status:?} {}", reason.as_deref().unwrap_or(""));
        let report = StateUpdate::ExecutionReport { status, per_step: exec.records, failure_reason: reason };
        ctx.send(Performative::Inform, &exec.requester, conversation, Payload::StateUpdate(report));
    }

    fn record(&mut self, ctx: &AgentCtx<'_>, conversation: &str, result: String) {
        if let Some(exec) = self.executions.get_mut(conversation) {
            let step = &exec.steps[exec.next];
            exec.records.push(StepRecord {
                step: exec.next as u32 + 1,
                action: step.action.clone(),
                args: step.args.clone(),
                result,
                tick: ctx.now,
            });
        }
    }

    fn step_failed(&mut self, ctx: &mut AgentCtx<'_>, conversation: &str, reason: String) {
        let Some(exec) = self.executions.get_mut(conversation) else { return };
        let Some(current) = exec.current.take() else { return };
        let index = exec.next + 1;
        self.record(ctx, conversation, format!("failed: {reason}"));
        if current.attempt < self.cfg.retries {
            warn!("{conversation}: step {index} failed ({reason}), retrying");
            self.dispatch(ctx, conversation, current.attempt + 1);
        } else {
            // put the dispatch back so finish() cancels it
            if let Some(exec) = self.executions.get_mut(conversation) {
                exec.current = Some(current);
            }
            self.finish(ctx, conversation, ExecutionStatus::Failed, Some(format!("step {index}: {reason}")));
        }
    }

    fn on_result(&mut self, ctx: &mut AgentCtx<'_>, envelope: &Envelope, step_id: u32, success: bool, reason: Option<&str>) {
        let conversation = envelope.conversation_id.as_str();
        let Some(exec) = self.executions.get_mut(conversation) else { return };
        let matches = exec.current.as_ref().is_some_and(|d| d.id == step_id && d.owner == envelope.sender);
        if !matches {
            return;
        }
        if success {
            exec.current = None;
            self.record(ctx, conversation, "success".into());
            if let Some(exec) = self.executions.get_mut(conversation) {
                exec.next += 1;
            }
            self.dispatch(ctx, conversation, 0);
        } else {
            self.step_failed(ctx, conversation, reason.unwrap_or("failure").to_string());
        }
    }

    /// Aborts executions whose remaining steps lost their owner or schema.
    fn monitor(&mut self, ctx: &mut AgentCtx<'_>) {
        let invalid: Vec<(String, String)> = self
            .executions
            .iter()
            .filter_map(|(conv, exec)| {
                exec.steps[exec.next..]
                    .iter()
                    .enumerate()
                    .find_map(|(i, s)| self.blocked(s).map(|r| format!("invalidated at step {}: {r}", exec.next + i + 1)))
                    .map(|r| (conv.clone(), r))
            })
            .collect();
        for (conversation, reason) in invalid {
            self.finish(ctx, &conversation, ExecutionStatus::Failed, Some(reason));
        }
    }
}

impl Behavior for PlanExecutor {
    fn advert(&self) -> CapabilityAdvert {
        CapabilityAdvert::new(&self.id, AgentKind::Reasoner, None, DEFAULT_HEARTBEAT_PERIOD)
    }

    fn on_tick(&mut self, ctx: &mut AgentCtx<'_>) {
        let timeout = self.cfg.action_timeout;
        let expired: Vec<String> = self
            .executions
            .iter()
            .filter(|(_, e)| e.current.as_ref().is_some_and(|d| ctx.now >= d.sent_at + timeout))
            .map(|(c, _)| c.clone())
            .collect();
        for conversation in expired {
            self.step_failed(ctx, &conversation, "timeout".into());
        }
    }

    fn on_message(&mut self, ctx: &mut AgentCtx<'_>, envelope: &Envelope) {
        match (&envelope.performative, &envelope.payload) {
            (Performative::Request, Payload::PlanRequest(req)) => {
                let Some(plan) = &req.plan else { return };
                let conversation = envelope.conversation_id.clone();
                if self.executions.contains_key(&conversation) {
                    self.finish(ctx, &conversation, ExecutionStatus::Cancelled, Some("superseded".into()));
                }
                self.executions.insert(
                    conversation.clone(),
                    ActiveExecution {
                        requester: envelope.sender.clone(),
                        steps: plan.steps.clone(),
                        next: 0,
                        records: Vec::new(),
                        current: None,
                    },
                );
                self.dispatch(ctx, &conversation, 0);
            }
            (Performative::Confirm, Payload::ActionResult(result)) => {
                self.on_result(ctx, envelope, result.step, result.success, result.reason.as_deref());
            }
            (Performative::Refuse, Payload::ActionRequest(req)) => {
                let reason = req.reason.clone().unwrap_or_else(|| "refused".into());
                self.on_result(ctx, envelope, req.step, false, Some(&reason));
            }
            (Performative::Cancel, Payload::CancelBody(body)) => {
                let conversation = envelope.conversation_id.clone();
                if self.executions.get(&conversation).is_some_and(|e| e.requester == envelope.sender) {
                    self.finish(ctx, &conversation, ExecutionStatus::Cancelled, Some(body.reason.clone()));
                }
            }
            (Performative::Inform, Payload::StateUpdate(StateUpdate::CapabilityChange { alive, schemas, .. })) => {
                self.alive = Some(alive.iter().cloned().collect());
                self.schemas = Some(schemas.iter().cloned().collect());
                self.monitor(ctx);
            }
            _ => {}
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}
