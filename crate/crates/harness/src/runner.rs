//! Runs scenarios: boots a kernel, drives the clock, records snapshots and
//! evaluates the scenario's assertions on the finished transcript.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use log::info;

use officemesh::acl::{Mode, Tick};
use officemesh::bus::{write_transcript, DeliveryRecord, TransportKind};
use officemesh::planner::{PlannerBackend, SearchConfig};
use officemesh::simworld::{Kernel, KernelConfig, WorldSnapshot};
use officemesh::Execution;

use crate::assertions::{invariants, Evidence, Verdict};
use crate::scenario::Scenario;
use crate::HarnessError;

pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const SNAPSHOTS_FILE: &str = "snapshots.jsonl";

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub mode: Mode,
    /// Overrides the scenario's seed.
    pub seed: Option<u64>,
    /// Overrides the scenario's duration.
    pub duration: Option<Tick>,
    pub transport: TransportKind,
    pub planner: PlannerBackend,
    /// Where transcript.jsonl and snapshots.jsonl go; nothing is written without it.
    pub out_dir: Option<PathBuf>,
}

impl RunOptions {
    pub fn new(mode: Mode) -> Self {
        RunOptions {
            mode,
            seed: None,
            duration: None,
            transport: TransportKind::Inproc,
            planner: PlannerBackend::Internal(SearchConfig::optimal()),
            out_dir: None,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn out_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.out_dir = Some(dir.into());
        self
    }

    pub fn transport(mut self, transport: TransportKind) -> Self {
        self.transport = transport;
        self
    }
}

/// Called by the runner around the simulation, for observers such as the gateway.
pub trait TickHook {
    fn on_boot(&mut self, _kernel: &mut Kernel) -> Result<(), HarnessError> {
        Ok(())
    }

    fn after_tick(&mut self, kernel: &mut Kernel) -> Result<(), HarnessError>;

    /// Ticks to keep running past the scenario's end; the gateway uses this
    /// to stay live for a connected console.
    fn keep_running(&mut self, _kernel: &Kernel) -> bool {
        false
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub scenario: u32,
    pub mode: Mode,
    pub seed: u64,
    pub ticks: Tick,
    pub records: Vec<DeliveryRecord>,
    /// One snapshot per tick, starting at tick 0.
    pub snapshots: Vec<WorldSnapshot>,
    pub verdicts: Vec<Verdict>,
    pub transcript_path: Option<PathBuf>,
    pub elapsed: Duration,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(Verdict::passed)
    }

    pub fn first_failure(&self) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| !v.passed())
    }

    /// The transcript exactly as written to transcript.jsonl.
    pub fn transcript_text(&self) -> String {
        self.records.iter().map(DeliveryRecord::to_line).collect()
    }

    pub fn summary(&self) -> String {
        let passed = self.verdicts.iter().filter(|v| v.passed()).count();
        format!(
            "scenario {} {} seed {}: {} ({passed}/{} assertions, {} envelopes, {} ticks, {:.2?})",
            self.scenario,
            self.mode,
            self.seed,
            if self.passed() { "pass" } else { "FAIL" },
            self.verdicts.len(),
            self.records.len(),
            self.ticks,
            self.elapsed
        )
    }
}

pub fn run_scenario(scenario: &Scenario, opts: &RunOptions) -> Result<RunReport, HarnessError> {
    run_scenario_with(scenario, opts, None)
}

pub fn run_scenario_with(
    scenario: &Scenario,
    opts: &RunOptions,
    mut hook: Option<&mut dyn TickHook>,
) -> Result<RunReport, HarnessError> {
    let started = Instant::now();
    let spec = &scenario.spec;
    let seed = opts.seed.unwrap_or(spec.seed);
    let duration = opts.duration.unwrap_or(spec.duration);
    let mut cfg = KernelConfig::new(scenario.world.clone(), spec.timeline.clone(), opts.mode, seed);
    cfg.transport = opts.transport;
    cfg.planner = opts.planner.clone();

    let mut kernel = Kernel::boot(cfg)?;
    if let Some(h) = hook.as_deref_mut() {
        h.on_boot(&mut kernel)?;
    }
    let mut snapshots = vec![kernel.snapshot()];
    loop {
        let more = kernel.now() < duration || hook.as_deref_mut().is_some_and(|h| h.keep_running(&kernel));
        if !more {
            break;
        }
        kernel.step()?;
        snapshots.push(kernel.snapshot());
        if let Some(h) = hook.as_deref_mut() {
            h.after_tick(&mut kernel)?;
        }
    }
    let ticks = kernel.now();
    let records = kernel.shutdown()?;

    let ev = Evidence::new(&records, &snapshots, &scenario.world);
    let mut verdicts = invariants(&ev);
    for assertion in spec.assertions.iter().filter(|a| a.applies_to(opts.mode)) {
        verdicts.push(Verdict { name: assertion.name.clone(), failure: ev.evaluate(&assertion.check).err() });
    }

    let transcript_path = match &opts.out_dir {
        Some(dir) => Some(write_outputs(dir, &records, &snapshots, spec.snapshot_every)?),
        None => None,
    };
    let report = RunReport {
        scenario: spec.id,
        mode: opts.mode,
        seed,
        ticks,
        records,
        snapshots,
        verdicts,
        transcript_path,
        elapsed: started.elapsed(),
    };
    info!("{}", report.summary());
    Ok(report)
}

fn write_outputs(
    dir: &Path,
    records: &[DeliveryRecord],
    snapshots: &[WorldSnapshot],
    every: Tick,
) -> Result<PathBuf, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let path = dir.join(TRANSCRIPT_FILE);
    write_transcript(&path, records)?;
    let snap_path = dir.join(SNAPSHOTS_FILE);
    let mut out = std::io::BufWriter::new(std::fs::File::create(&snap_path).map_err(|e| HarnessError::io(&snap_path, e))?);
    let last = snapshots.last().map(|s| s.clock);
    for s in snapshots.iter().filter(|s| s.clock % every == 0 || Some(s.clock) == last) {
        let line = serde_json::to_string(s).expect("snapshots serialize");
        writeln!(out, "{line}").map_err(|e| HarnessError::io(&snap_path, e))?;
    }
    out.flush().map_err(|e| HarnessError::io(&snap_path, e))?;
    Ok(path)
}

/// Runs independent (scenario, options) jobs; results keep the input order.
pub fn sweep(jobs: &[(Scenario, RunOptions)], exec: Execution) -> Vec<Result<RunReport, HarnessError>> {
    let run = |(scenario, opts): &(Scenario, RunOptions)| run_scenario(scenario, opts);
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            jobs.par_iter().map(run).collect()
        }
        _ => jobs.iter().map(run).collect(),
    }
}
