//! Plug-and-play multi-agent middleware for a smart office.

pub mod acl;
pub mod bus;
pub mod cost;
pub mod agent;
pub mod planner;
pub mod reasoning;
pub mod simworld;
pub mod strips;

/// How batch work (planning jobs, scenario sweeps) is spread over threads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Execution {
    Sequential,
    /// Uses the rayon pool when built with the `parallel` feature, otherwise
    /// the same as `Sequential`.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}
