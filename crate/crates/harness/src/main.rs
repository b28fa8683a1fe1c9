use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use officemesh::acl::{Mode, Tick};
use officemesh::bus::{read_transcript, run_broker, BrokerConfig, TransportKind};
use officemesh::planner::{ExternalPlanner, PlannerBackend, SearchConfig, SearchMode, DEFAULT_NODE_LIMIT};
use officemesh::simworld::{Command, Health, WorldConfig};
use officemesh::strips::pddl::{parse_domain, parse_problem, print_domain};
use officemesh::Execution;
use officemesh_harness::gateway::{Gateway, GatewayClient, GatewayConfig};
use officemesh_harness::replay::{format_record, parse_filter, select};
use officemesh_harness::{init_logging, run_scenario_with, sweep, HarnessError, RunOptions, RunReport, Scenario, TickHook};

#[derive(Parser)]
#[command(name = "officemesh", version, about = "Plug-and-play multi-agent middleware for a simulated smart office")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a standalone TCP broker until stdin closes.
    Broker {
        #[arg(long, default_value = "127.0.0.1:7400")]
        listen: String,
        /// Write the transcript here on shutdown.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Run a scenario and check its assertions.
    Run(RunArgs),
    /// Run every built-in scenario in both modes over a range of seeds.
    Sweep {
        #[arg(long, default_value_t = 4)]
        seeds: u64,
        /// Run the jobs one after another instead of on the thread pool.
        #[arg(long)]
        sequential: bool,
    },
    /// Solve a PDDL problem with the internal planner.
    Plan {
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, value_enum, default_value_t = PlannerArg::Optimal)]
        planner: PlannerArg,
        #[arg(long, default_value_t = DEFAULT_NODE_LIMIT)]
        node_limit: usize,
        /// Program (and arguments) used with `--planner external`.
        #[arg(long)]
        planner_cmd: Option<String>,
    },
    /// Print the composite domain of every agent in a world.
    DumpDomain {
        /// World config; defaults to the bundled office.
        #[arg(long)]
        world: Option<PathBuf>,
    },
    /// List transcript envelopes matching a filter.
    Replay {
        transcript: PathBuf,
        /// e.g. `performative=confirm,sender=tb1`
        #[arg(long, default_value = "")]
        filter: String,
        /// Exit nonzero unless something matches.
        #[arg(long)]
        expect: bool,
        /// Include capability heartbeats.
        #[arg(long)]
        heartbeats: bool,
    },
    /// Answer an open agent query through a running gateway.
    Respond {
        #[arg(long)]
        gateway: String,
        #[arg(long)]
        conversation: String,
        #[arg(long)]
        answer: String,
    },
    /// Submit a goal through a running gateway.
    Goal {
        #[arg(long)]
        gateway: String,
        /// Goal literal, repeatable: `--goal "(temperature-reported office1)"`.
        #[arg(long = "goal", required = true)]
        goals: Vec<String>,
        #[arg(long = "fact")]
        facts: Vec<String>,
        #[arg(long)]
        mode: Option<Mode>,
    },
    /// Take an agent down or bring it back through a running gateway.
    Inject {
        #[arg(long)]
        gateway: String,
        #[arg(long)]
        agent: String,
        #[arg(long, value_enum)]
        health: HealthArg,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Built-in scenario number.
    #[arg(long, conflicts_with = "file", required_unless_present = "file")]
    scenario: Option<u32>,
    /// Scenario file instead of a built-in one.
    #[arg(long)]
    file: Option<PathBuf>,
    #[arg(long, default_value = "centralized")]
    mode: Mode,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    duration: Option<Tick>,
    /// Output directory; defaults to runs/scenario<N>-<mode>-seed<S>.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "inproc")]
    transport: TransportKind,
    #[arg(long, value_enum, default_value_t = PlannerArg::Optimal)]
    planner: PlannerArg,
    /// Program (and arguments) used with `--planner external`.
    #[arg(long)]
    planner_cmd: Option<String>,
    /// Serve the console gateway on this port (0 picks one).
    #[arg(long)]
    gateway_port: Option<u16>,
    /// Milliseconds to pause after each tick while a gateway is attached.
    #[arg(long, default_value_t = 0)]
    tick_ms: u64,
    /// Keep the clock running past the scenario's end (needs a gateway).
    #[arg(long, requires = "gateway_port")]
    hold: bool,
    /// Print the matching transcript lines of every failed assertion.
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlannerArg {
    Optimal,
    Satisficing,
    External,
}

#[derive(Clone, Copy, ValueEnum)]
enum HealthArg {
    Up,
    Down,
}

fn backend(kind: PlannerArg, cmd: Option<&str>, node_limit: usize) -> Result<PlannerBackend, HarnessError> {
    Ok(match kind {
        PlannerArg::Optimal => PlannerBackend::Internal(SearchConfig::with_mode(SearchMode::Optimal).with_node_limit(node_limit)),
        PlannerArg::Satisficing => {
            PlannerBackend::Internal(SearchConfig::with_mode(SearchMode::Satisficing).with_node_limit(node_limit))
        }
        PlannerArg::External => {
            let cmd = cmd.ok_or_else(|| HarnessError::Fixture("--planner external needs --planner-cmd".into()))?;
            let mut words = cmd.split_whitespace();
            let program = words.next().ok_or_else(|| HarnessError::Fixture("empty --planner-cmd".into()))?;
            PlannerBackend::External(ExternalPlanner::new(program, words))
        }
    })
}

fn read(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

fn print_report(report: &RunReport, verbose: bool) {
    for v in &report.verdicts {
        match &v.failure {
            None => println!("  ok    {}", v.name),
            Some(f) if verbose => println!("  FAIL  {}: {f}", v.name),
            Some(f) => println!("  FAIL  {}: {}", v.name, f.reason),
        }
    }
    println!("{}", report.summary());
    if let Some(path) = &report.transcript_path {
        println!("transcript: {}", path.display());
    }
}

fn run(args: RunArgs) -> Result<bool, HarnessError> {
    let scenario = match (&args.file, args.scenario) {
        (Some(path), _) => Scenario::load(path)?,
        (None, Some(n)) => Scenario::builtin(n)?,
        (None, None) => unreachable!("clap requires one of them"),
    };
    let seed = args.seed.unwrap_or(scenario.spec.seed);
    let out = args
        .out
        .unwrap_or_else(|| PathBuf::from(format!("runs/scenario{}-{}-seed{seed}", scenario.spec.id, args.mode)));
    let opts = RunOptions {
        mode: args.mode,
        seed: Some(seed),
        duration: args.duration,
        transport: args.transport,
        planner: backend(args.planner, args.planner_cmd.as_deref(), DEFAULT_NODE_LIMIT)?,
        out_dir: Some(out),
    };
    let mut gateway = match args.gateway_port {
        Some(port) => {
            let cfg = GatewayConfig { tick_delay: Duration::from_millis(args.tick_ms), hold: args.hold, ..GatewayConfig::default() };
            let gw = Gateway::bind(&format!("127.0.0.1:{port}"), cfg)?;
            println!("gateway: ws://{}", gw.local_addr());
            Some(gw)
        }
        None => None,
    };
    let report = run_scenario_with(&scenario, &opts, gateway.as_mut().map(|g| g as &mut dyn TickHook))?;
    if let Some(gw) = gateway {
        // Let client threads flush the last frames before closing.
        std::thread::sleep(Duration::from_millis(50));
        gw.close();
    }
    print_report(&report, args.verbose);
    Ok(report.passed())
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn gateway_command(url: &str, command: Command) -> Result<bool, HarnessError> {
    let mut client = GatewayClient::connect(url)?;
    client.send_command("cli-1", &command)?;
    let answer = client.answer("cli-1")?;
    client.close();
    match answer {
        Ok(()) => {
            println!("ok");
            Ok(true)
        }
        Err(message) => {
            eprintln!("rejected: {message}");
            Ok(false)
        }
    }
}

fn dispatch(command: Cmd) -> Result<bool, HarnessError> {
    match command {
        Cmd::Broker { listen, transcript } => {
            let mut cfg = BrokerConfig::tcp(listen);
            cfg.transcript_path = transcript;
            let handle = run_broker(&cfg)?;
            println!("broker listening on {}", handle.local_addr().expect("tcp broker"));
            println!("close stdin (Ctrl-D) to stop");
            let _ = std::io::stdout().flush();
            for line in std::io::stdin().lock().lines() {
                if line.is_err() {
                    break;
                }
            }
            let records = handle.shutdown()?;
            println!("broker stopped after {} envelopes", records.len());
            Ok(true)
        }
        Cmd::Run(args) => run(args),
        Cmd::Sweep { seeds, sequential } => {
            let mut jobs = Vec::new();
            for id in Scenario::builtin_ids() {
                let scenario = Scenario::builtin(id)?;
                for &mode in &scenario.spec.modes {
                    for seed in 0..seeds {
                        jobs.push((scenario.clone(), RunOptions::new(mode).seed(seed)));
                    }
                }
            }
            let exec = if sequential { Execution::Sequential } else { Execution::Parallel };
            let mut all = true;
            for result in sweep(&jobs, exec) {
                let report = result?;
                all &= report.passed();
                println!("{}", report.summary());
            }
            Ok(all)
        }
        Cmd::Plan { domain, problem, planner, node_limit, planner_cmd } => {
            let d = parse_domain(&read(&domain)?).map_err(|e| HarnessError::Fixture(format!("{}: {e}", domain.display())))?;
            let p = parse_problem(&read(&problem)?, &d)
                .map_err(|e| HarnessError::Fixture(format!("{}: {e}", problem.display())))?;
            match backend(planner, planner_cmd.as_deref(), node_limit)?.solve(&d, &p) {
                Ok(plan) => {
                    for step in &plan.steps {
                        let args: String = step.args.iter().map(|a| format!(" {a}")).collect();
                        println!("({}{args})", step.name);
                    }
                    println!("; cost = {}", plan.total_cost);
                    Ok(true)
                }
                Err(e) => {
                    println!("; no plan: {e}");
                    Ok(false)
                }
            }
        }
        Cmd::DumpDomain { world } => {
            let world: WorldConfig = match world {
                Some(path) => serde_json::from_str(&read(&path)?)
                    .map_err(|e| HarnessError::Fixture(format!("{}: {e}", path.display())))?,
                None => officemesh_harness::scenario::builtin_world(),
            };
            world.validate()?;
            print!("{}", print_domain(&world.composite_domain()?));
            Ok(true)
        }
        Cmd::Replay { transcript, filter, expect, heartbeats } => {
            let records = read_transcript(&transcript)?;
            let filter = parse_filter(&filter)?;
            let hits = select(&records, &filter, heartbeats);
            // Stop quietly when piped into `head`.
            let mut out = std::io::stdout().lock();
            for r in &hits {
                if writeln!(out, "{}", format_record(r)).is_err() {
                    break;
                }
            }
            Ok(!expect || !hits.is_empty())
        }
        Cmd::Respond { gateway, conversation, answer } => {
            gateway_command(&gateway, Command::RespondQuery { conversation_id: conversation, answer })
        }
        Cmd::Goal { gateway, goals, facts, mode } => gateway_command(&gateway, Command::SubmitGoal { goal: goals, facts, mode }),
        Cmd::Inject { gateway, agent, health } => {
            let health = match health {
                HealthArg::Up => Health::Up,
                HealthArg::Down => Health::Down,
            };
            gateway_command(&gateway, Command::InjectFailure { agent, health })
        }
    }
}
