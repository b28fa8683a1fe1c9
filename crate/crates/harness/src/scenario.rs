//! Scenario fixtures: a world, a timeline, a run length and the transcript
//! predicates that must hold at the end.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use officemesh::acl::{Mode, Tick};
use officemesh::simworld::{Timeline, WorldConfig};

use crate::assertions::Assertion;
use crate::HarnessError;

const OFFICE: &str = include_str!("../../../scenarios/office.json");
const BUILTIN: [(u32, &str); 3] = [
    (1, include_str!("../../../scenarios/scenario1.json")),
    (2, include_str!("../../../scenarios/scenario2.json")),
    (3, include_str!("../../../scenarios/scenario3.json")),
];

fn default_snapshot_every() -> Tick {
    1
}

fn default_modes() -> Vec<Mode> {
    vec![Mode::Centralized, Mode::Decentralized]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub id: u32,
    #[serde(default)]
    pub title: String,
    /// World config file, relative to the scenario file.
    pub world: PathBuf,
    /// Ticks to simulate.
    pub duration: Tick,
    #[serde(default)]
    pub seed: u64,
    /// Modes the scenario is meant to pass in.
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    /// Period of the snapshots written next to the transcript.
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: Tick,
    #[serde(default)]
    pub timeline: Timeline,
    #[serde(default)]
    pub assertions: Vec<Assertion>,
}

/// A scenario together with the world it runs in.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub world: WorldConfig,
}

impl Scenario {
    /// Loads a scenario file and the world file it points at.
    pub fn load(path: &Path) -> Result<Scenario, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let spec: ScenarioSpec =
            serde_json::from_str(&text).map_err(|e| HarnessError::Fixture(format!("{}: {e}", path.display())))?;
        let world_path = path.parent().unwrap_or(Path::new(".")).join(&spec.world);
        let world_text = std::fs::read_to_string(&world_path).map_err(|e| HarnessError::io(&world_path, e))?;
        let world = serde_json::from_str(&world_text)
            .map_err(|e| HarnessError::Fixture(format!("{}: {e}", world_path.display())))?;
        Scenario::new(spec, world)
    }

    /// One of the three bundled demonstrations.
    pub fn builtin(id: u32) -> Result<Scenario, HarnessError> {
        let (_, text) = BUILTIN
            .iter()
            .find(|(n, _)| *n == id)
            .ok_or_else(|| HarnessError::Fixture(format!("no built-in scenario {id}")))?;
        let spec: ScenarioSpec =
            serde_json::from_str(text).map_err(|e| HarnessError::Fixture(format!("scenario{id}.json: {e}")))?;
        if spec.world != Path::new("office.json") {
            return Err(HarnessError::Fixture(format!("built-in scenario {id} must use office.json")));
        }
        Scenario::new(spec, builtin_world())
    }

    pub fn builtin_ids() -> Vec<u32> {
        BUILTIN.iter().map(|(n, _)| *n).collect()
    }

    fn new(spec: ScenarioSpec, world: WorldConfig) -> Result<Scenario, HarnessError> {
        world.validate()?;
        spec.timeline.validate(&world)?;
        if spec.snapshot_every == 0 {
            return Err(HarnessError::Fixture("snapshot_every must be at least 1".into()));
        }
        Ok(Scenario { spec, world })
    }
}

/// The bundled office world.
pub fn builtin_world() -> WorldConfig {
    serde_json::from_str(OFFICE).expect("bundled office.json parses")
}
