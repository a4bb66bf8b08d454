//! `fso-relay`: command-line front end for the triple-hop FSO relay model.

mod commands;
mod output;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use fso_relay::capacity::{Estimator, LogBase, Placement, DEFAULT_POINT_SAMPLES, DEFAULT_SWEEP_SAMPLES};
use fso_relay::{load_params, SystemParams, VarianceMode};
use thiserror::Error;

use crate::commands::{Report, ValidateArgs};
use crate::output::{write_atomic, RunManifest};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(fso_relay::Error),
    #[error("cannot read {path}: {source}")]
    ConfigIo { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Domain(fso_relay::Error),
    #[error("numeric failure: {0}")]
    Numeric(fso_relay::Error),
    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    /// Maps a library error raised during computation.
    pub fn from_compute(e: fso_relay::Error) -> Self {
        match e {
            fso_relay::Error::Degenerate(_) => CliError::Numeric(e),
            fso_relay::Error::Parse(_) => CliError::Config(e),
            _ => CliError::Domain(e),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::ConfigIo { .. } => 2,
            CliError::Domain(_) => 3,
            CliError::Numeric(_) | CliError::Output(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fso-relay", version, about = "Triple-hop all-optical AF relaying over log-normal FSO channels")]
struct Cli {
    /// JSON parameter file; omitted keys take the reference defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Destination variance model: composed, printed, low-bg or thermal.
    #[arg(long, global = true, default_value = "composed")]
    mode: VarianceMode,

    /// Output file; a `<out>.manifest.json` is written next to it. Prints to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (default: all cores). FSO_RELAY_THREADS takes precedence.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Report capacity in nats instead of bits.
    #[arg(long, global = true)]
    nats: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct PlacementArgs {
    #[arg(long, default_value_t = 1850.0)]
    d_sr: f64,
    #[arg(long, default_value_t = 1800.0)]
    d_rr: f64,
    #[arg(long, default_value_t = 1350.0)]
    d_rd: f64,
}

impl PlacementArgs {
    fn placement(&self) -> Placement {
        Placement::new(self.d_sr, self.d_rr, self.d_rd)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-hop loss and turbulence figures, photon budgets and thermal noise.
    LinkBudget {
        /// Hop lengths in metres.
        #[arg(long, value_delimiter = ',', default_value = "1850,1800,1350")]
        distances: Vec<f64>,
    },
    /// Destination statistics at mean fading for one placement.
    Snr {
        #[command(flatten)]
        placement: PlacementArgs,
    },
    /// Monte-Carlo ergodic capacity for one placement.
    Capacity {
        #[command(flatten)]
        placement: PlacementArgs,
        #[arg(long, default_value_t = DEFAULT_POINT_SAMPLES)]
        samples: usize,
    },
    /// Capacity surface over (d_sr, d_rr) with the optimum as the last row.
    Sweep {
        /// Grid step in metres.
        #[arg(long, default_value_t = 50.0)]
        step: f64,
        /// Background power at every terminal (W); overrides the config.
        #[arg(long)]
        pb: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_SWEEP_SAMPLES)]
        samples: usize,
    },
    /// Capacity versus d_rd (d_sr = d_rr) per background power and variance model.
    Validate {
        #[arg(long, value_delimiter = ',', default_value = "1e-10,1e-9,5e-9")]
        pb_list: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "thermal,low-bg,composed")]
        mode_list: Vec<VarianceMode>,
        /// d_rd grid step in metres.
        #[arg(long, default_value_t = 250.0)]
        step: f64,
        #[arg(long, default_value_t = DEFAULT_SWEEP_SAMPLES)]
        samples: usize,
        /// Relative gap allowed between the low-background and composed models.
        #[arg(long, default_value_t = 0.05)]
        threshold: f64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::LinkBudget { .. } => "link-budget",
            Command::Snr { .. } => "snr",
            Command::Capacity { .. } => "capacity",
            Command::Sweep { .. } => "sweep",
            Command::Validate { .. } => "validate",
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<SystemParams, CliError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|source| CliError::ConfigIo {
            path: p.to_path_buf(),
            source,
        })?,
        None => "{}".to_string(),
    };
    load_params(&text).map_err(CliError::Config)
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    match std::env::var("FSO_RELAY_THREADS") {
        Ok(v) => v.trim().parse::<usize>().map(Some).map_err(|_| {
            CliError::Config(fso_relay::Error::Invalid {
                field: "FSO_RELAY_THREADS",
                reason: format!("expected a thread count, got `{v}`"),
            })
        }),
        Err(_) => Ok(flag),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let started = Instant::now();
    let mut params = load_config(cli.config.as_deref())?;
    let base = if cli.nats { LogBase::Nats } else { LogBase::Bits };

    if let Some(n) = thread_count(cli.threads)? {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }

    let report: Report = match &cli.command {
        Command::LinkBudget { distances } => commands::link_budget(&params, distances)?,
        Command::Snr { placement } => commands::snr(&params, placement.placement(), cli.mode)?,
        Command::Capacity { placement, samples } => {
            let est = Estimator::new(cli.mode, *samples, cli.seed).with_base(base);
            commands::capacity(&params, placement.placement(), &est)?
        }
        Command::Sweep { step, pb, samples } => {
            if let Some(pb) = pb {
                params = params.with_background_power(*pb).map_err(CliError::Config)?;
            }
            let est = Estimator::new(cli.mode, *samples, cli.seed).with_base(base);
            commands::sweep_grid(&params, *step, &est)?
        }
        Command::Validate {
            pb_list,
            mode_list,
            step,
            samples,
            threshold,
        } => commands::validate(
            &params,
            &ValidateArgs {
                pb_list: pb_list.clone(),
                modes: mode_list.clone(),
                step: *step,
                samples: *samples,
                seed: cli.seed,
                base,
                threshold: *threshold,
            },
        )?,
    };

    match &cli.out {
        Some(out) => {
            write_atomic(out, report.text.as_bytes())?;
            let manifest = RunManifest {
                subcommand: cli.command.name().to_string(),
                version: env!("CARGO_PKG_VERSION"),
                params: params.config().clone(),
                seed: cli.seed,
                mode: cli.mode.to_string(),
                arguments: report.arguments,
                outputs: vec![out.display().to_string()],
                summary: report.summary,
                wall_clock_seconds: started.elapsed().as_secs_f64(),
            };
            let path = manifest.write_next_to(out)?;
            log::info!("wrote {} and {}", out.display(), path.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(report.text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
