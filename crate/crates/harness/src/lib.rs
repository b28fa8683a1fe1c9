//! Scenario runner, transcript tooling and the operator gateway behind the
//! `officemesh` command.

pub mod assertions;
pub mod gateway;
pub mod replay;
pub mod runner;
pub mod scenario;

use std::path::{Path, PathBuf};

use officemesh::bus::BusError;
use officemesh::simworld::SimError;

pub use runner::{run_scenario, run_scenario_with, sweep, RunOptions, RunReport, TickHook};
pub use scenario::{Scenario, ScenarioSpec};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad fixture: {0}")]
    Fixture(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error("bad filter: {0}")]
    Filter(String),
    #[error("gateway: {0}")]
    Gateway(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }
}

/// Sets up logging from `OFFICEMESH_LOG` (off, error, warn, info, debug, trace).
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("OFFICEMESH_LOG", "off");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}
