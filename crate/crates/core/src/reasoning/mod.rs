//! Reasoning agents: domain maintenance, planning, plan requests, execution
//! and decentralized bidding.

mod bidder;
mod executor;
mod maintainer;
mod planning;
mod requester;
mod selection;

pub use bidder::{agent_on_cfp, Bid, Bidder};
pub use executor::{step_method, step_owner, ActiveExecution, ExecutorConfig, PlanExecutor, DEFAULT_ACTION_TIMEOUT};
pub use maintainer::DomainMaintainer;
pub use planning::PlanningAgent;
pub use requester::{GoalRecord, Phase, PlanRequester, RequesterConfig, DEFAULT_MAX_REPLANS, DEFAULT_PROPOSAL_WINDOW};
pub use selection::{select_proposals, Selection};

pub const DEFAULT_DM: &str = "domain-maintainer";
pub const DEFAULT_REQUESTER: &str = "plan-requester";
pub const DEFAULT_PLANNER: &str = "planner";
pub const DEFAULT_EXECUTOR: &str = "plan-executor";
