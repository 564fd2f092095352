//! `twinsim`: run the simulator behind its bridge, replay recordings, roll out
//! the intersection environment, and poke a running bridge or SCM.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokio::net::TcpListener;
use twinsim_client::{BridgeClient, ClientError, ScmClient};
use twinsim_core::env::{DoneReason, EnvConfig, IntersectionEnv, Scenario};
use twinsim_core::protocol::{FrameFilter, Mode, RecordAction, Role, Subscriptions};
use twinsim_core::recorder::{replay, RecordDocument};
use twinsim_core::scene::fixture_source;
use twinsim_core::session::SessionConfig;
use twinsim_core::world::WorldConfig;
use twinsim_core::CoreError;
use twinsim_server::{Bridge, BridgeConfig, Pacing, ScmConfig, ScmService, ServerError};

use config::{FileConfig, RunSettings};

/// Process exit codes.
pub mod exit {
    pub const USAGE: u8 = 2;
    pub const CONFIG: u8 = 3;
    pub const SCENE: u8 = 4;
    pub const RUNTIME: u8 = 5;
    pub const REPLAY_DIVERGED: u8 = 6;
}

#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
    pub fn usage(m: impl Into<String>) -> Self {
        Self::new(exit::USAGE, m)
    }
    pub fn config(m: impl Into<String>) -> Self {
        Self::new(exit::CONFIG, m)
    }
    fn scene(m: impl Into<String>) -> Self {
        Self::new(exit::SCENE, m)
    }
    fn runtime(m: impl Into<String>) -> Self {
        Self::new(exit::RUNTIME, m)
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        let code = match e {
            CoreError::SceneParse { .. } | CoreError::SceneInvalid { .. } | CoreError::OutOfBounds { .. } => {
                exit::SCENE
            }
            CoreError::Config(_) | CoreError::Env(_) | CoreError::RecordParse { .. } => exit::CONFIG,
            _ => exit::RUNTIME,
        };
        Self::new(code, e.to_string())
    }
}

impl From<ServerError> for Failure {
    fn from(e: ServerError) -> Self {
        match e {
            ServerError::Core(e) => e.into(),
            other => Self::runtime(other.to_string()),
        }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        Self::runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "twinsim", version, about = "Deterministic digital twin of a 1:14 Ackermann vehicle and its city")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve a simulation over the WebSocket bridge.
    Run(RunArgs),
    /// Re-simulate a recording and compare it row by row.
    Replay {
        record: PathBuf,
    },
    /// Roll out the intersection RL environment with a fixed policy.
    Env(EnvArgs),
    /// Run the Smart City Manager against a bridge.
    Scm {
        #[arg(long, env = "TWINSIM_BRIDGE", default_value = "ws://127.0.0.1:8765/ws")]
        bridge: String,
        #[arg(long, env = "TWINSIM_SCM_BIND", default_value = "127.0.0.1:8766")]
        bind: String,
    },
    /// Set a traffic light through the SCM.
    Light {
        #[arg(long, env = "TWINSIM_SCM", default_value = "http://127.0.0.1:8766")]
        scm: String,
        element: String,
        state: String,
    },
    /// Switch a vehicle between manual and autonomous control through the SCM.
    Mode {
        #[arg(long, env = "TWINSIM_SCM", default_value = "http://127.0.0.1:8766")]
        scm: String,
        vehicle: String,
        mode: ModeArg,
    },
    /// Reset a running simulation to its initial state.
    Reset {
        #[arg(long, env = "TWINSIM_BRIDGE", default_value = "ws://127.0.0.1:8765/ws")]
        bridge: String,
    },
    /// Control the recorder of a running simulation.
    Record {
        #[arg(long, env = "TWINSIM_BRIDGE", default_value = "ws://127.0.0.1:8765/ws")]
        bridge: String,
        action: RecordArg,
        /// Where `export` writes the CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML file whose keys mirror these flags.
    #[arg(long, env = "TWINSIM_CONFIG")]
    config: Option<PathBuf>,
    /// Scene file, or the name of a bundled scene.
    #[arg(long, env = "TWINSIM_SCENE")]
    scene: Option<String>,
    #[arg(long, env = "TWINSIM_VEHICLES")]
    vehicles: Option<usize>,
    #[arg(long, env = "TWINSIM_SEED")]
    seed: Option<u64>,
    /// Physics step, s.
    #[arg(long, env = "TWINSIM_DT")]
    dt: Option<f64>,
    /// Sensor frame rate, Hz.
    #[arg(long, env = "TWINSIM_SENSOR_RATE")]
    sensor_rate: Option<f64>,
    /// Simulated seconds to run; runs until interrupted when omitted.
    #[arg(long, env = "TWINSIM_DURATION")]
    duration: Option<f64>,
    /// Record from tick 0 and write the CSV here on exit.
    #[arg(long, env = "TWINSIM_RECORD")]
    record: Option<PathBuf>,
    #[arg(long, env = "TWINSIM_BIND")]
    bind: Option<String>,
    /// Run as fast as possible instead of in real time.
    #[arg(long, env = "TWINSIM_HEADLESS", num_args = 0..=1, default_missing_value = "true")]
    headless: Option<bool>,
    /// Advance time only on STEP requests.
    #[arg(long, env = "TWINSIM_LOCKSTEP", num_args = 0..=1, default_missing_value = "true")]
    lockstep: Option<bool>,
}

#[derive(Args)]
struct EnvArgs {
    #[arg(long, default_value = "single")]
    scenario: String,
    #[arg(long, default_value_t = 1)]
    episodes: u32,
    #[arg(long, env = "TWINSIM_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "straight")]
    policy: Policy,
    #[arg(long)]
    ticks_per_step: Option<u32>,
    /// Write every step result here as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Straight,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Manual,
    Autonomous,
}

#[derive(Clone, Copy, ValueEnum)]
enum RecordArg {
    Start,
    Stop,
    Export,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::from(exit::RUNTIME);
        }
    };
    match rt.block_on(dispatch(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

async fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run(args) => run(args).await,
        Command::Replay { record } => replay_record(&record),
        Command::Env(args) => env_rollout(args),
        Command::Scm { bridge, bind } => scm(bridge, bind).await,
        Command::Light { scm, element, state } => {
            let ack = ScmClient::new(scm).set_light(&element, &state).await?;
            print_json(&ack);
            Ok(())
        }
        Command::Mode { scm, vehicle, mode } => {
            let mode = match mode {
                ModeArg::Manual => Mode::Manual,
                ModeArg::Autonomous => Mode::Autonomous,
            };
            let ack = ScmClient::new(scm).set_mode(&vehicle, mode).await?;
            print_json(&ack);
            Ok(())
        }
        Command::Reset { bridge } => {
            let mut ui = ui_client(&bridge).await?;
            let ack = ui.reset().await?;
            print_json(&ack);
            Ok(())
        }
        Command::Record { bridge, action, out } => {
            let mut ui = ui_client(&bridge).await?;
            match action {
                RecordArg::Start => print_json(&ui.record(RecordAction::Start).await?),
                RecordArg::Stop => print_json(&ui.record(RecordAction::Stop).await?),
                RecordArg::Export => {
                    let csv = ui.export().await?;
                    match out {
                        Some(path) => write_file(&path, &csv)?,
                        None => print!("{csv}"),
                    }
                }
            }
            Ok(())
        }
    }
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string(v).unwrap_or_default());
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))
}

async fn ui_client(url: &str) -> Result<BridgeClient, Failure> {
    let quiet = Subscriptions {
        frames: FrameFilter::None,
        peers: false,
        events: false,
    };
    Ok(BridgeClient::connect(url, Role::Ui, None, quiet).await?)
}

/// A path that exists is read as a scene file; otherwise the name must be a
/// bundled scene.
fn scene_source(scene: &str) -> Result<String, Failure> {
    let path = Path::new(scene);
    if path.exists() {
        return std::fs::read_to_string(path).map_err(|e| Failure::scene(format!("cannot read scene {scene}: {e}")));
    }
    fixture_source(scene)
        .map(str::to_string)
        .ok_or_else(|| Failure::scene(format!("scene not found: {scene}")))
}

async fn run(args: RunArgs) -> Result<(), Failure> {
    let file = match &args.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let cli = FileConfig {
        scene: args.scene,
        vehicles: args.vehicles,
        seed: args.seed,
        dt: args.dt,
        sensor_rate: args.sensor_rate,
        duration: args.duration,
        record: args.record,
        bind: args.bind,
        headless: args.headless,
        lockstep: args.lockstep,
    };
    let s = RunSettings::resolve(cli, file)?;

    let mut world = WorldConfig {
        seed: s.seed,
        ..WorldConfig::default()
    };
    if let Some(dt) = s.dt {
        world.dt = dt;
    }
    if let Some(rate) = s.sensor_rate {
        world.sensor_rate = rate;
    }
    let dt = world.dt;
    let mut session = SessionConfig::from_scene_source(scene_source(&s.scene)?, world, s.vehicles)?;
    session.lockstep = s.lockstep;
    let mut cfg = BridgeConfig::new(session);
    cfg.pacing = if s.headless { Pacing::Unpaced } else { Pacing::Realtime };
    cfg.record = s.record.is_some();
    cfg.max_ticks = s.duration.map(|d| (d / dt).round() as u64);

    let listener = TcpListener::bind(&s.bind)
        .await
        .map_err(|e| Failure::runtime(format!("cannot bind {}: {e}", s.bind)))?;
    let started = Instant::now();
    let mut bridge = Bridge::start(listener, cfg).await?;
    eprintln!("bridge listening on {}", bridge.ws_url());
    tokio::select! {
        _ = bridge.finished() => {}
        _ = tokio::signal::ctrl_c() => eprintln!("interrupted"),
    }
    let wall = started.elapsed();
    let m = bridge.metrics().snapshot();
    let mut session = bridge.shutdown().await?;

    println!(
        "ticks {}  sim time {:.3} s  wall {:.2} s  tick rate {:.0} Hz  messages {}  dropped {}",
        m.ticks,
        m.ticks as f64 * dt,
        wall.as_secs_f64(),
        m.ticks as f64 / wall.as_secs_f64().max(1e-9),
        m.messages_out,
        m.dropped,
    );
    if let Some(path) = &s.record {
        if session.is_recording() {
            session.stop_recording()?;
        }
        let csv = session.export_recording()?;
        write_file(path, &csv)?;
        let doc = RecordDocument::parse(&csv)?;
        let rows: usize = doc.segments.iter().map(|seg| seg.rows.len()).sum();
        println!("record {}: {rows} rows in {} segment(s)", path.display(), doc.segments.len());
    }
    Ok(())
}

fn replay_record(path: &Path) -> Result<(), Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read record {}: {e}", path.display())))?;
    let doc = RecordDocument::parse(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let report = replay(&doc)?;
    println!(
        "rows {}  differing {}  max deviation {:e} m",
        report.rows_compared, report.rows_differing, report.max_deviation
    );
    match report.first_divergence {
        None if report.is_exact() => Ok(()),
        None => Err(Failure::new(exit::REPLAY_DIVERGED, "replay diverged")),
        Some((row, tick, vehicle)) => Err(Failure::new(
            exit::REPLAY_DIVERGED,
            format!("replay diverged at row {row} (tick {tick}, {vehicle})"),
        )),
    }
}

fn env_rollout(args: EnvArgs) -> Result<(), Failure> {
    let scenario: Scenario = args.scenario.parse().map_err(|e: CoreError| Failure::usage(e.to_string()))?;
    let mut cfg = EnvConfig::default();
    if let Some(t) = args.ticks_per_step {
        cfg.ticks_per_step = t;
    }
    let mut env = IntersectionEnv::new(cfg)?;
    let mut trace = String::new();
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (mut goals, mut collisions, mut timeouts, mut total) = (0, 0, 0, 0.0);
    for episode in 0..args.episodes {
        let obs = env.reset(scenario, args.seed.wrapping_add(episode as u64))?;
        let mut returns = vec![0.0; obs.len()];
        let mut reasons = vec![None; obs.len()];
        let mut steps = 0;
        loop {
            let actions: Vec<i8> = (0..obs.len())
                .map(|_| match args.policy {
                    Policy::Straight => 0,
                    Policy::Random => rng.random_range(-1..=1),
                })
                .collect();
            let r = env.step(&actions)?;
            steps += 1;
            for (i, a) in r.agents.iter().enumerate() {
                returns[i] += a.reward;
                if a.done_reason.is_some() && reasons[i].is_none() {
                    reasons[i] = a.done_reason;
                }
            }
            if args.trace.is_some() {
                trace.push_str(&serde_json::to_string(&r).unwrap_or_default());
                trace.push('\n');
            }
            if r.episode_done {
                break;
            }
        }
        let mut parts = Vec::new();
        for (i, (ret, reason)) in returns.iter().zip(&reasons).enumerate() {
            match reason {
                Some(DoneReason::Goal) => goals += 1,
                Some(DoneReason::Collision) => collisions += 1,
                Some(DoneReason::Timeout) => timeouts += 1,
                None => {}
            }
            total += ret;
            parts.push(format!("A{} {ret:+.4} {reason:?}", i + 1));
        }
        println!("episode {episode}: {steps} steps  {}", parts.join("  "));
    }
    println!("goals {goals}  collisions {collisions}  timeouts {timeouts}  total return {total:+.4}");
    if let Some(path) = &args.trace {
        write_file(path, &trace)?;
    }
    Ok(())
}

async fn scm(bridge: String, bind: String) -> Result<(), Failure> {
    let listener = TcpListener::bind(&bind)
        .await
        .map_err(|e| Failure::runtime(format!("cannot bind {bind}: {e}")))?;
    let service = ScmService::start(listener, ScmConfig::new(bridge)).await?;
    eprintln!("scm listening on {}", service.base_url());
    if !service.wait_connected(Duration::from_secs(5)).await {
        eprintln!("bridge not reachable yet; retrying in the background");
    }
    let _ = tokio::signal::ctrl_c().await;
    service.shutdown().await;
    Ok(())
}
