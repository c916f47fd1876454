use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use companion_core::pipeline::{
    sweep, sweep_sequential, DelayConfig, ScriptedExchange, StrategyKind, SweepReport, SystemClock,
};
use companion_core::store::Store;
use companion_device::{run_session, DeviceConfig, Script, TimeSource};
use companion_gateway::{GatewayConfig, ServeError};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "companion",
    version,
    about = "Voice companion robot gateway and tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the gateway until interrupted.
    Serve(ServeArgs),
    /// Replay a button-press script on a simulated device.
    Simulate(SimulateArgs),
    /// Compare first-audio latency of both strategies over seeded turns.
    Bench(BenchArgs),
    /// Drop turn records older than their profile's retention.
    Purge(StoreArgs),
    /// Print a session's turn records as JSON lines.
    Export(ExportArgs),
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "companion.toml")]
    config: PathBuf,
    /// Overrides `server.bind`.
    #[arg(long)]
    bind: Option<String>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    script: PathBuf,
    /// Gateway URL; without it a gateway is started in-process.
    #[arg(long)]
    server: Option<String>,
    #[arg(long, env = "COMPANION_TOKEN", hide_env_values = true)]
    token: Option<String>,
    /// Configuration for the in-process gateway.
    #[arg(long, conflicts_with = "server")]
    config: Option<PathBuf>,
    /// Write the event log here instead of standard output.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value = "default")]
    profile: String,
    /// Join an existing session.
    #[arg(long)]
    session: Option<String>,
    #[arg(long, default_value_t = StrategyKind::Segmented)]
    strategy: StrategyKind,
    /// Take real time for captures and playback.
    #[arg(long)]
    real_time: bool,
    /// Do not relay events to the live stream.
    #[arg(long)]
    no_publish: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 1000)]
    turns: usize,
    /// Uniform jitter in ms applied to every stage.
    #[arg(long, default_value_t = 0)]
    jitter: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stage delay model as TOML; defaults to the reference timings.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Per-turn latencies as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Use one thread even when built with parallel sweeps.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct StoreArgs {
    #[arg(long)]
    store: PathBuf,
    /// Reference time; defaults to now.
    #[arg(long)]
    now_ms: Option<u64>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    session: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Bad input exits 2, a failure while running exits 1.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

type Outcome = Result<ExitCode, Failure>;

trait OrUsage<T> {
    fn usage(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrUsage<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    let result = match cli.command {
        Command::Serve(a) => runtime.block_on(serve(a)),
        Command::Simulate(a) => runtime.block_on(simulate(a)),
        Command::Bench(a) => bench(a),
        Command::Purge(a) => purge(a),
        Command::Export(a) => export(a),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_gateway_config(path: &Path) -> Result<GatewayConfig, Failure> {
    let mut config = GatewayConfig::load(path).usage()?;
    config.apply_env(|k| std::env::var(k).ok()).usage()?;
    Ok(config)
}

async fn serve(args: ServeArgs) -> Outcome {
    let mut config = load_gateway_config(&args.config)?;
    if let Some(bind) = args.bind {
        config.server.bind = bind;
    }
    config.validate().usage()?;
    match companion_gateway::serve(&config).await {
        Ok(()) => Ok(ExitCode::SUCCESS),
        Err(e @ ServeError::Config(_)) => Err(Failure::Usage(e.into())),
        Err(e) => Err(Failure::Runtime(e.into())),
    }
}

async fn simulate(args: SimulateArgs) -> Outcome {
    let script = Script::load(&args.script).usage()?;
    let mut local = None;
    let (server, token) = match args.server {
        Some(url) => (url, args.token),
        None => {
            let mut config = match &args.config {
                Some(path) => load_gateway_config(path)?,
                None => GatewayConfig::default(),
            };
            config.server.bind = "127.0.0.1:0".into();
            config.server.token = None;
            let gw = companion_gateway::spawn(&config, Arc::new(SystemClock))
                .await
                .map_err(|e| match e {
                    ServeError::Config(_) => Failure::Usage(e.into()),
                    other => Failure::Runtime(other.into()),
                })?;
            let url = gw.base_url();
            local = Some(gw);
            (url, None)
        }
    };
    let device = DeviceConfig {
        server,
        token,
        profile_id: args.profile,
        session_id: args.session,
        time_source: if args.real_time {
            TimeSource::Real
        } else {
            TimeSource::Virtual
        },
        strategy: args.strategy,
        publish_events: !args.no_publish,
        ..DeviceConfig::default()
    };
    let outcome = run_session(&device, &script).await.usage()?;
    if let Some(gw) = local {
        gw.shutdown().await.runtime()?;
    }
    match &args.log {
        Some(path) => outcome
            .log
            .write_jsonl(path)
            .with_context(|| format!("writing {}", path.display()))
            .runtime()?,
        None => std::io::stdout()
            .write_all(outcome.log.to_jsonl().as_bytes())
            .runtime()?,
    }
    eprintln!(
        "session {}: {} of {} turns played, {} events",
        outcome.session_id.as_deref().unwrap_or("-"),
        outcome.turns_completed,
        script.steps.len(),
        outcome.log.events().len()
    );
    if outcome.has_errors() {
        return Err(Failure::Runtime(anyhow::anyhow!(
            "the device logged errors"
        )));
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct CsvRow {
    turn: usize,
    seed: u64,
    monolithic_first_audio_ms: u64,
    monolithic_total_ms: u64,
    segmented_first_audio_ms: u64,
    segmented_total_ms: u64,
}

fn bench(args: BenchArgs) -> Outcome {
    let model = match &args.model {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .usage()?;
            toml::from_str::<DelayConfig>(&text)
                .with_context(|| format!("parsing {}", path.display()))
                .usage()?
        }
        None => DelayConfig::default(),
    };
    let model = if args.jitter > 0 {
        model.with_jitter(args.jitter)
    } else {
        model
    };
    model.validate().usage()?;
    let exchange = ScriptedExchange::reference();
    let started = Instant::now();
    let report = if args.sequential {
        sweep_sequential(&model, &exchange, args.turns, args.seed)
    } else {
        sweep(&model, &exchange, args.turns, args.seed)
    };
    let elapsed = started.elapsed();
    print_report(&report);
    println!("elapsed_ms {}", elapsed.as_millis());
    if let Some(path) = &args.csv {
        write_csv(path, &report, args.seed)
            .with_context(|| format!("writing {}", path.display()))
            .runtime()?;
    }
    Ok(ExitCode::SUCCESS)
}

fn print_report(report: &SweepReport) {
    println!(
        "{:<12} {:>8} {:>8} {:>8}",
        "strategy", "turns", "p50_ms", "p95_ms"
    );
    for kind in [StrategyKind::Monolithic, StrategyKind::Segmented] {
        let s = report.summary(kind);
        println!(
            "{:<12} {:>8} {:>8} {:>8}",
            kind.as_str(),
            s.count,
            s.p50_ms,
            s.p95_ms
        );
    }
}

fn write_csv(path: &Path, report: &SweepReport, seed: u64) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (turn, row) in report.rows.iter().enumerate() {
        w.serialize(CsvRow {
            turn,
            seed: seed + turn as u64,
            monolithic_first_audio_ms: row.monolithic.first_audio_ms,
            monolithic_total_ms: row.monolithic.total_ms,
            segmented_first_audio_ms: row.segmented.first_audio_ms,
            segmented_total_ms: row.segmented.total_ms,
        })?;
    }
    if report.rows.is_empty() {
        w.write_record([
            "turn",
            "seed",
            "monolithic_first_audio_ms",
            "monolithic_total_ms",
            "segmented_first_audio_ms",
            "segmented_total_ms",
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

fn open_store(dir: &Path) -> Result<Store, Failure> {
    if !dir.is_dir() {
        return Err(Failure::Usage(anyhow::anyhow!(
            "store directory {} does not exist",
            dir.display()
        )));
    }
    Store::open(dir).runtime()
}

fn purge(args: StoreArgs) -> Outcome {
    let store = open_store(&args.store)?;
    let report = store.purge(args.now_ms.unwrap_or_else(now_ms)).runtime()?;
    println!(
        "removed {} turn records, retained {}",
        report.removed, report.retained
    );
    Ok(ExitCode::SUCCESS)
}

fn export(args: ExportArgs) -> Outcome {
    let store = open_store(&args.store)?;
    if store.session(&args.session).is_none() {
        return Err(Failure::Usage(anyhow::anyhow!(
            "session `{}` not found",
            args.session
        )));
    }
    let count = match &args.out {
        Some(path) => {
            let mut f = std::fs::File::create(path)
                .with_context(|| format!("creating {}", path.display()))
                .runtime()?;
            store.export_session(&args.session, &mut f).runtime()?
        }
        None => store
            .export_session(&args.session, &mut std::io::stdout().lock())
            .runtime()?,
    };
    eprintln!("exported {count} turn records");
    Ok(ExitCode::SUCCESS)
}
