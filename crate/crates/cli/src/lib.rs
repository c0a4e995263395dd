//! Command-line front end: loads a scenario, starts the coordinator and the
//! embedded radio and ego clients, and writes the run outputs.

use std::io::Write;
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use cosim_core::coordinator::server::{Server, ServerError};
use cosim_core::coordinator::{
    render_trajectory, CoordError, Coordinator, CoordinatorConfig, RunEnd, RunReport,
};
use cosim_core::ego::{render_ego, run_ego_client, EgoClientError, EgoConfig, EgoRun, Source};
use cosim_core::radio::{
    load_attacks, render_packets, run_radio_client, AttackConfigError, AttackSpec,
    RadioClientError, RadioConfig, RadioKernel,
};
use cosim_core::scenario::{write_results, ResultError};
use cosim_core::time::seconds_to_us;
use cosim_core::traffic::KernelError;
use cosim_core::wire::{client_handshake, SessionError};
use cosim_core::{load_sumocfg, Owner, ResultStore, ScenarioBundle, ScenarioError, World};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const EXIT_OK: u8 = 0;
/// Run started but did not end cleanly.
pub const EXIT_RUN_FAILED: u8 = 1;
/// Bad flags or inputs; nothing was run.
pub const EXIT_INPUT: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "cosim",
    version,
    about = "Lockstep traffic / V2X / ego co-simulation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Run a scenario to completion.
    Run(RunArgs),
    /// Parse and check a scenario without running it.
    Validate {
        /// Path to the .sumocfg file.
        config: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    /// Path to the .sumocfg file.
    pub config: PathBuf,
    /// Number of clients the barrier waits for.
    #[arg(long, default_value_t = 2)]
    pub clients: u32,
    /// Seconds per step; overrides the scenario.
    #[arg(long)]
    pub step_length: Option<f64>,
    /// End time in seconds; overrides the scenario.
    #[arg(long)]
    pub end: Option<f64>,
    /// Root seed; overrides the scenario.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 9999)]
    pub port: u16,
    #[arg(long, default_value = "traffic", value_parser = parse_owner)]
    #[serde(serialize_with = "owner_str")]
    pub tls_manager: Owner,
    /// Vehicles handed to the ego controller.
    #[arg(long, value_delimiter = ',')]
    pub ego_ids: Vec<String>,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub radio: Switch,
    /// TOML file with [[attack]] tables.
    #[arg(long)]
    pub attack: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "COSIM_OUT", default_value = "cosim-out")]
    pub out: PathBuf,
    /// Seconds to wait for all clients before giving up.
    #[arg(long, default_value_t = 30.0)]
    pub connect_timeout: f64,
    #[arg(long, default_value_t = 2.5)]
    pub fcw_ttc: f64,
    #[arg(long, default_value_t = 30.0)]
    pub sensor_range: f64,
    #[arg(long, default_value_t = 3.0)]
    pub comfort_decel: f64,
    #[arg(long, default_value_t = 8.0)]
    pub emergency_decel: f64,
    /// Do not start the embedded radio and ego clients.
    #[arg(long)]
    pub server_only: bool,
}

fn parse_owner(s: &str) -> Result<Owner, String> {
    s.parse()
}

fn owner_str<S: serde::Serializer>(o: &Owner, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(o.as_str())
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Attack(#[from] AttackConfigError),
    #[error(transparent)]
    Server(#[from] ServerError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Coordinator(#[from] CoordError),
    #[error(transparent)]
    Results(#[from] ResultError),
    #[error("invalid flag: {0}")]
    Flag(String),
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Results(_) => EXIT_RUN_FAILED,
            _ => EXIT_INPUT,
        }
    }
}

#[derive(Debug)]
pub struct RunSummary {
    pub end: RunEnd,
    pub steps: u64,
    pub collisions: u64,
    /// Failures reported by embedded clients.
    pub client_errors: Vec<String>,
    pub out: PathBuf,
}

impl RunSummary {
    pub fn is_clean(&self) -> bool {
        self.end.is_clean() && self.client_errors.is_empty()
    }

    pub fn exit_code(&self) -> u8 {
        if self.is_clean() {
            EXIT_OK
        } else {
            EXIT_RUN_FAILED
        }
    }
}

/// Everything a run needs, resolved from flags and scenario files.
#[derive(Debug)]
pub struct Prepared {
    pub bundle: ScenarioBundle,
    pub attacks: Vec<AttackSpec>,
    pub ego: EgoConfig,
    pub inputs: Vec<PathBuf>,
}

pub fn prepare(args: &RunArgs) -> Result<Prepared, CliError> {
    if args.clients == 0 {
        return Err(CliError::Flag("--clients must be at least 1".into()));
    }
    if !args.server_only && args.clients < 2 {
        return Err(CliError::Flag(
            "--clients must be at least 2 with the embedded radio and ego clients".into(),
        ));
    }
    if !(args.connect_timeout > 0.0 && args.connect_timeout.is_finite()) {
        return Err(CliError::Flag("--connect-timeout must be positive".into()));
    }
    let mut bundle = load_sumocfg(&args.config)?;
    if let Some(s) = args.step_length {
        bundle.config.step_length = s;
    }
    if let Some(e) = args.end {
        bundle.config.end = Some(e);
    }
    if let Some(seed) = args.seed {
        bundle.config.seed = seed;
    }
    bundle.validate()?;
    let mut inputs = bundle.sources.clone();
    let attacks = match &args.attack {
        Some(path) => {
            inputs.push(path.clone());
            load_attacks(path)?
        }
        None => Vec::new(),
    };
    let mut ids = args.ego_ids.clone();
    ids.sort();
    ids.dedup();
    for id in &ids {
        if !bundle.demand.vehicles.iter().any(|v| &v.id == id) {
            return Err(CliError::Flag(format!(
                "--ego-ids: no vehicle '{id}' in the demand"
            )));
        }
    }
    let ego = EgoConfig {
        ids,
        sensor_range: args.sensor_range,
        ttc_threshold: args.fcw_ttc,
        comfort_decel: args.comfort_decel,
        emergency_decel: args.emergency_decel,
        tls_manager: args.tls_manager,
        ..EgoConfig::default()
    };
    ego.validate().map_err(|e| CliError::Flag(e.to_string()))?;
    Ok(Prepared {
        bundle,
        attacks,
        ego,
        inputs,
    })
}

type ClientHandle<T> = thread::JoinHandle<Result<T, String>>;

fn connect(
    addr: std::net::SocketAddr,
    order: u32,
) -> Result<cosim_core::wire::ClientSession<TcpStream>, SessionError> {
    let stream = TcpStream::connect(addr)?;
    stream.set_nodelay(true)?;
    client_handshake(stream, order)
}

/// Executes a run and writes every output file. `status` receives the
/// listening address and progress notes.
pub fn run(args: &RunArgs, status: &mut dyn Write) -> Result<RunSummary, CliError> {
    let prepared = prepare(args)?;
    let started_at = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let Prepared {
        bundle,
        attacks,
        ego,
        inputs,
    } = prepared;
    let step_us = bundle.step_us();
    let step_s = f64::from(step_us) / 1e6;

    let mut world = World::new(
        Arc::clone(&bundle.network),
        bundle.demand.vehicles.clone(),
        bundle.programs.clone(),
        step_us,
    )?;
    world.set_tls_owner(args.tls_manager);
    let coordinator = Coordinator::new(
        world,
        CoordinatorConfig {
            expected_clients: args.clients,
            end_us: bundle.config.end.map(seconds_to_us),
            record_trajectory: true,
        },
    )?;
    let timeout = Duration::from_secs_f64(args.connect_timeout);
    let server = Server::bind(format!("127.0.0.1:{}", args.port), coordinator, timeout)?;
    let addr = server.local_addr();
    let _ = writeln!(status, "listening on {addr}");
    let _ = status.flush();
    let server_thread = thread::spawn(move || server.run());

    let mut radio_thread: Option<ClientHandle<RadioKernel>> = None;
    let mut ego_thread: Option<ClientHandle<EgoRun>> = None;
    if !args.server_only {
        let kernel = RadioKernel::new(
            RadioConfig {
                enabled: args.radio == Switch::On,
                ..RadioConfig::default()
            },
            bundle.polygons.clone(),
            &bundle.rsus,
            &attacks,
            bundle.config.seed,
            u64::from(step_us),
        );
        radio_thread = Some(thread::spawn(move || {
            let session = connect(addr, 1).map_err(|e| format!("radio client: {e}"))?;
            run_radio_client(session, kernel)
                .map_err(|e: RadioClientError| format!("radio client: {e}"))
        }));
        let network = Arc::clone(&bundle.network);
        let polygons = bundle.polygons.clone();
        let cfg = ego.clone();
        ego_thread = Some(thread::spawn(move || {
            let session = connect(addr, 2).map_err(|e| format!("ego client: {e}"))?;
            run_ego_client(session, &cfg, network, &polygons, step_s)
                .map_err(|e: EgoClientError| format!("ego client: {e}"))
        }));
    }

    let report = server_thread.join().expect("server thread panicked");
    let mut client_errors = Vec::new();
    let radio = join_client(radio_thread, &mut client_errors);
    let ego_run = join_client(ego_thread, &mut client_errors);

    let summary = write_outputs(
        args,
        &bundle,
        &inputs,
        started_at,
        report,
        radio,
        ego_run,
        client_errors,
    )?;
    Ok(summary)
}

fn join_client<T>(handle: Option<ClientHandle<T>>, errors: &mut Vec<String>) -> Option<T> {
    match handle?.join().expect("client thread panicked") {
        Ok(v) => Some(v),
        Err(e) => {
            errors.push(e);
            None
        }
    }
}

#[derive(Serialize)]
struct InputHash {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    flags: &'a RunArgs,
    seed: u64,
    step_length: f64,
    end: Option<f64>,
    inputs: Vec<InputHash>,
    /// Wall clock; the only field that differs between identical runs.
    started_at_unix_s: u64,
    end_state: String,
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn describe_end(end: &RunEnd) -> String {
    match end {
        RunEnd::Completed => "completed".into(),
        RunEnd::ClosedByClient(order) => format!("closed by client {order}"),
        RunEnd::Aborted(reason) => format!("aborted: {reason}"),
    }
}

#[allow(clippy::too_many_arguments)]
fn write_outputs(
    args: &RunArgs,
    bundle: &ScenarioBundle,
    inputs: &[PathBuf],
    started_at: u64,
    report: RunReport,
    radio: Option<RadioKernel>,
    ego: Option<EgoRun>,
    client_errors: Vec<String>,
) -> Result<RunSummary, CliError> {
    let out = &args.out;
    std::fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.clone(),
        source,
    })?;

    let mut events = report.events.join("\n");
    events.push('\n');
    write_file(&out.join("events.log"), &events)?;
    write_file(
        &out.join("trajectory.csv"),
        &render_trajectory(&report.trajectory),
    )?;

    let mut results = ResultStore::new();
    results.merge(report.results);
    let packets = match radio {
        Some(kernel) => {
            let (packets, radio_results) = kernel.into_parts();
            results.merge(radio_results);
            render_packets(&packets)
        }
        None => render_packets(&[]),
    };
    write_file(&out.join("packets.csv"), &packets)?;

    let rows = ego.map(|e| e.rows).unwrap_or_default();
    for id in &args.ego_ids {
        results.set_scalar("ego", &format!("{id}.controlled_steps"), 0.0);
    }
    for r in &rows {
        results.add_scalar("ego", &format!("{}.controlled_steps", r.id), 1.0);
        if let Some(source) = r.trigger {
            let name = match source {
                Source::Sensor => "triggers_sensor",
                Source::V2x => "triggers_v2x",
            };
            results.add_scalar("ego", &format!("{}.{name}", r.id), 1.0);
        }
    }
    write_file(&out.join("ego.csv"), &render_ego(&rows))?;
    write_results(&results, out)?;

    let mut hashes = Vec::new();
    for p in inputs {
        hashes.push(InputHash {
            path: p.display().to_string(),
            sha256: sha256_file(p)?,
        });
    }
    let manifest = Manifest {
        flags: args,
        seed: bundle.config.seed,
        step_length: bundle.config.step_length,
        end: bundle.config.end,
        inputs: hashes,
        started_at_unix_s: started_at,
        end_state: describe_end(&report.end),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&out.join("run-manifest.json"), &(json + "\n"))?;

    Ok(RunSummary {
        end: report.end,
        steps: report.world.clock().step_index(),
        collisions: report.world.collisions(),
        client_errors,
        out: out.clone(),
    })
}

/// Parses and integrity-checks a scenario; returns the one-line report.
pub fn validate(config: &Path) -> Result<String, CliError> {
    let bundle = load_sumocfg(config)?;
    let mut line = format!(
        "OK edges={} junctions={} vehicles={} vtypes={} polygons={} rsus={} tls={}",
        bundle.network.edge_count(),
        bundle.network.junction_count(),
        bundle.demand.vehicles.len(),
        bundle.demand.vtypes.len(),
        bundle.polygons.len(),
        bundle.rsus.len(),
        bundle.programs.len(),
    );
    for w in &bundle.warnings {
        line.push_str("\nwarning: ");
        line.push_str(w);
    }
    Ok(line)
}

/// Entry point shared by the binary and tests. Returns the process exit code.
pub fn main_with(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8 {
    match cli.command {
        CliCommand::Validate { config } => match validate(&config) {
            Ok(report) => {
                let _ = writeln!(stdout, "{report}");
                EXIT_OK
            }
            Err(e) => {
                let _ = writeln!(stderr, "error: {e}");
                e.exit_code()
            }
        },
        CliCommand::Run(args) => match run(&args, stdout) {
            Ok(summary) => {
                let _ = writeln!(
                    stdout,
                    "run {} after {} steps, {} collisions; outputs in {}",
                    describe_end(&summary.end),
                    summary.steps,
                    summary.collisions,
                    summary.out.display()
                );
                if let RunEnd::Aborted(_) = summary.end {
                    let _ = writeln!(stderr, "error: run aborted; outputs are truncated");
                }
                for e in &summary.client_errors {
                    let _ = writeln!(stderr, "error: {e}");
                }
                summary.exit_code()
            }
            Err(e) => {
                let _ = writeln!(stderr, "error: {e}");
                e.exit_code()
            }
        },
    }
}
