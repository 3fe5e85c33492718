use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use cavfleet_server::{serve_until, FleetServer, ServerConfig, WallClock};
use cavfleet_sim::analyze::{self, ControlRateSource};
use cavfleet_sim::{run, runlog, RunLog, ScenarioConfig, SimError};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cavfleet", version, about = "CAV fleet testbed: simulate, serve and analyze")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its run log.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a standalone fleet server on wall-clock time.
    Serve {
        #[arg(long, env = "CAVFLEET_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        /// Directory holding the server's message log.
        #[arg(long)]
        log: PathBuf,
        /// Server settings (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compute measurements from a run log.
    Analyze {
        #[command(subcommand)]
        what: Analysis,
    },
    /// Verify a run log and summarize what it contains.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
}

#[derive(Subcommand)]
enum Analysis {
    /// Space-time density grid as CSV (rows: space bins, columns: time bins).
    Density {
        #[arg(long)]
        log: PathBuf,
        /// Space bin, miles.
        #[arg(long, default_value_t = 0.1)]
        dx: f64,
        /// Time bin, seconds.
        #[arg(long, default_value_t = 300.0)]
        dt: f64,
        /// Count both directions instead of westbound only.
        #[arg(long)]
        all_directions: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fleet counts per window as CSV.
    Counts {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = 300.0)]
        window: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Penetration rate from a passing period or from a run log.
    Penetration {
        #[arg(long)]
        log: Option<PathBuf>,
        /// Seconds between controlled vehicles passing a point.
        #[arg(long, conflicts_with = "log")]
        control_period: Option<f64>,
        /// Mile marker at which to count crossings in a run log; testbed midpoint by default.
        #[arg(long, requires = "log")]
        at_mm: Option<f64>,
        /// Total flow across all lanes, veh/hr.
        #[arg(long)]
        flow: f64,
        /// Share of the total flow carried by the controlled lanes.
        #[arg(long)]
        lane_fraction: Option<f64>,
    },
    /// Trajectory points with commanded-speed color as JSON lines.
    Plotdata {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, SimError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| SimError::Io(p.display().to_string(), e))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn serve(port: u16, bind: &str, dir: &Path, config: Option<&Path>) -> Result<(), SimError> {
    let cfg = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| SimError::Io(p.display().to_string(), e))?;
            toml::from_str::<ServerConfig>(&text).map_err(|e| SimError::Usage(format!("{}: {e}", p.display())))?
        }
        None => ServerConfig::default(),
    };
    std::fs::create_dir_all(dir).map_err(|e| SimError::Io(dir.display().to_string(), e))?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| SimError::Io("tokio runtime".into(), e))?;
    rt.block_on(async {
        // Server time is Unix time in seconds, like the vehicles' clocks.
        let epoch = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
        let server = Arc::new(FleetServer::open(cfg, Arc::new(WallClock::new(epoch)), &dir.join(runlog::MESSAGES))?);
        let addr = format!("{bind}:{port}");
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| SimError::Io(addr.clone(), e))?;
        tracing::info!(%addr, "fleet server listening");
        serve_until(listener, server.clone(), async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| SimError::Io(addr, e))?;
        server.sync_log()?;
        Ok(())
    })
}

fn replay(dir: &Path) -> Result<(), SimError> {
    let log = RunLog::open(dir)?;
    let messages = log.messages()?;
    let traj = log.trajectories()?;
    let samples: usize = traj.values().map(Vec::len).sum();
    let state = log.server_state()?;
    let mut out = io::stdout().lock();
    let w = |e| SimError::Io("stdout".into(), e);
    writeln!(out, "scenario: {} (seed {})", log.scenario().name, log.scenario().seed).map_err(w)?;
    writeln!(out, "integrity: ok").map_err(w)?;
    writeln!(out, "messages: {}", messages.len()).map_err(w)?;
    writeln!(out, "telemetry streams: {} ({samples} samples)", traj.len()).map_err(w)?;
    writeln!(out, "whitelisted vins: {}", state.permissions.whitelist.values().filter(|v| **v).count()).map_err(w)?;
    writeln!(out, "state frames: {}", log.states()?.len()).map_err(w)?;
    Ok(())
}

fn main_inner(cli: Cli) -> Result<(), SimError> {
    match cli.cmd {
        Command::Run { config, out } => {
            let cfg = ScenarioConfig::load(&config)?;
            let report = run(&cfg, &out)?;
            println!("wrote {} ({} ticks)", out.display(), report.ticks);
            Ok(())
        }
        Command::Serve { port, bind, log, config } => serve(port, &bind, &log, config.as_deref()),
        Command::Replay { log } => replay(&log),
        Command::Analyze { what } => match what {
            Analysis::Density {
                log,
                dx,
                dt,
                all_directions,
                out,
            } => analyze::density_csv(&RunLog::open(&log)?, dx, dt, !all_directions, output(&out)?),
            Analysis::Counts { log, window, out } => analyze::counts_csv(&RunLog::open(&log)?, window, output(&out)?),
            Analysis::Plotdata { log, out } => analyze::plot_jsonl(&RunLog::open(&log)?, output(&out)?),
            Analysis::Penetration {
                log,
                control_period,
                at_mm,
                flow,
                lane_fraction,
            } => {
                let source = match (log, control_period) {
                    (Some(dir), _) => {
                        let log = RunLog::open(&dir)?;
                        let c = &log.scenario().corridor;
                        let mm = at_mm.unwrap_or(0.5 * (c.testbed_start_mm + c.testbed_end_mm));
                        analyze::measured_rate(&log, mm)?
                    }
                    (None, Some(p)) => ControlRateSource::Period(p),
                    (None, None) => {
                        return Err(SimError::Usage("give --control-period or --log".into()));
                    }
                };
                print!("{}", analyze::penetration(source, flow, lane_fraction)?);
                Ok(())
            }
        },
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(io::stderr)
        .init();
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
