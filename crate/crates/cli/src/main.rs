use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use guestnet::agents::{LiveSystem, Topology};
use guestnet::domain::UserId;
use guestnet::harness::{self, check_trace, RunOptions, Scenario};
use guestnet::protocol::ProtocolConfig;
use guestnet::router::trace::digest;
use guestnet::router::LiveOptions;
use guestnet::store::{Store, StoreConfig};
use guestnet_service::ServiceConfig;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};

/// Agent-brokered reservations for networks of rural guesthouses.
#[derive(Debug, Parser)]
#[command(name = "guestnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run a scenario on the simulated transport and check its trace.
    Run {
        /// Scenario file, or a bundled name (figure4, bypass, timeout, race-lastroom, random-N).
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Where to write the trace.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        horizon: Option<u64>,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Evaluate every property over a trace file.
    Check { trace: PathBuf },
    /// Print the SHA-256 digest of a trace file.
    Digest { trace: PathBuf },
    /// Print a scenario, bundled or from a file, as JSON.
    Show { scenario: String },
    /// List the bundled scenarios.
    List,
    /// Start the live system and serve the HTTP API.
    Serve {
        /// Topology file, scenario file or bundled scenario name.
        topology: String,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Built web front end to serve next to the API.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
        /// Persist the store here; in memory when left out.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Milliseconds per logical time unit.
        #[arg(long, default_value_t = 10)]
        unit_ms: u64,
    },
    /// Talk to the live system in the text grammar over stdin and stdout.
    Text {
        /// Topology file, scenario file or bundled scenario name.
        topology: String,
        #[arg(long)]
        user: String,
        #[arg(long, default_value_t = 10)]
        unit_ms: u64,
    },
}

const PASS: u8 = 0;
const PROPERTY_FAILED: u8 = 1;
const ERROR: u8 = 2;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_max_level(tracing::Level::WARN)
        .with_writer(std::io::stderr)
        .init();
    match dispatch(Cli::parse().command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(ERROR)
        }
    }
}

fn dispatch(cmd: Cmd) -> anyhow::Result<u8> {
    match cmd {
        Cmd::Run {
            scenario,
            seed,
            trace,
            horizon,
            json,
        } => run(&scenario, RunOptions { seed, horizon }, trace.as_deref(), json),
        Cmd::Check { trace } => {
            let text = read(&trace)?;
            let report = check_trace(&text).map_err(|e| anyhow::anyhow!("{}: {e}", trace.display()))?;
            print!("{report}");
            Ok(if report.passed() { PASS } else { PROPERTY_FAILED })
        }
        Cmd::Digest { trace } => {
            println!("{}", digest(&read(&trace)?));
            Ok(PASS)
        }
        Cmd::Show { scenario } => {
            println!("{}", load_scenario(&scenario)?.to_json());
            Ok(PASS)
        }
        Cmd::List => {
            for name in harness::bundled_names() {
                println!("{name}");
            }
            println!("random-N");
            Ok(PASS)
        }
        Cmd::Serve {
            topology,
            addr,
            static_dir,
            data,
            unit_ms,
        } => {
            let topology = load_topology(&topology)?;
            let store = match data {
                Some(dir) => Store::open(&dir, StoreConfig::default())
                    .with_context(|| format!("opening the store in {}", dir.display()))?,
                None => Store::in_memory(StoreConfig::default()),
            };
            let config = ServiceConfig {
                static_dir,
                ..ServiceConfig::default()
            };
            runtime()?.block_on(serve(topology, store, addr, config, unit_ms))?;
            Ok(PASS)
        }
        Cmd::Text {
            topology,
            user,
            unit_ms,
        } => {
            let mut topology = load_topology(&topology)?;
            let user = UserId::from(user.as_str());
            let Some(profile) = topology.users.iter_mut().find(|u| u.user_id == user) else {
                bail!("no user {user} in the topology");
            };
            profile.text_channel = true;
            runtime()?.block_on(text(topology, user, unit_ms))?;
            Ok(PASS)
        }
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn runtime() -> anyhow::Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn load_scenario(arg: &str) -> anyhow::Result<Scenario> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = read(path)?;
        return Scenario::parse(&text).map_err(|e| anyhow::anyhow!("{}:\n{e}", path.display()));
    }
    harness::bundled(arg).with_context(|| format!("{arg} is neither a file nor a bundled scenario"))
}

fn load_topology(arg: &str) -> anyhow::Result<Topology> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = read(path)?;
        if let Ok(t) = Topology::from_json(&text) {
            return Ok(t);
        }
    }
    Ok(load_scenario(arg)?.topology)
}

fn run(arg: &str, options: RunOptions, trace: Option<&Path>, json: bool) -> anyhow::Result<u8> {
    let scenario = load_scenario(arg)?;
    let out = harness::run(&scenario, options)?;
    if let Some(path) = trace {
        std::fs::write(path, &out.trace).with_context(|| format!("writing {}", path.display()))?;
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&out.report)?);
    } else {
        print!("{}", out.report);
        println!("digest {}", out.digest);
    }
    Ok(if out.report.passed() { PASS } else { PROPERTY_FAILED })
}

fn live_options(unit_ms: u64) -> LiveOptions {
    LiveOptions {
        unit: Duration::from_millis(unit_ms.max(1)),
        record_trace: false,
    }
}

async fn serve(
    topology: Topology,
    store: Store,
    addr: SocketAddr,
    config: ServiceConfig,
    unit_ms: u64,
) -> anyhow::Result<()> {
    let system = Arc::new(LiveSystem::start(
        topology,
        Arc::new(store),
        ProtocolConfig::default(),
        live_options(unit_ms),
    )?);
    let app = guestnet_service::app(Arc::clone(&system), config);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    system.shutdown().await;
    Ok(())
}

async fn text(topology: Topology, user: UserId, unit_ms: u64) -> anyhow::Result<()> {
    let store = Arc::new(Store::in_memory(StoreConfig::default()));
    let system = LiveSystem::start(topology, store, ProtocolConfig::default(), live_options(unit_ms))?;
    let mut replies = system.subscribe_lines();
    let printer = tokio::spawn(async move {
        let mut stdout = tokio::io::stdout();
        while let Ok((_, line)) = replies.recv().await {
            if stdout.write_all(format!("{line}\n").as_bytes()).await.is_err() {
                break;
            }
            let _ = stdout.flush().await;
        }
    });
    let mut lines = BufReader::new(tokio::io::stdin()).lines();
    while let Some(line) = lines.next_line().await? {
        if line.trim().is_empty() {
            continue;
        }
        system.text_line(&user, line.trim());
    }
    // Give in-flight searches time to answer before closing.
    tokio::time::sleep(system.units(ProtocolConfig::default().national_collection + 100)).await;
    system.shutdown().await;
    printer.abort();
    Ok(())
}
