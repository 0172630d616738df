//! `cpa-forecast`: simulate auction logs, fit per-line models, build
//! control response curves and validate them against realized delivery.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod plot;

#[derive(Debug, Parser)]
#[command(name = "cpa-forecast", version, about = "Control response curve forecasting for CPA lines")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    common: CommonArgs,
}

/// Options shared by every subcommand. Each overrides the same key in `--config`.
#[derive(Debug, Default, Clone, Args)]
pub struct CommonArgs {
    /// JSON run configuration; flags take precedence over its keys
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// Root seed; every random stream is derived from it
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Log-spaced grid points above zero
    #[arg(long, global = true)]
    pub grid_points: Option<usize>,
    /// Half-width of the win-rate confidence interval used to size the fitting sample
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// Confidence level used to size the fitting sample
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// Fixed fitting sample size, overriding epsilon/gamma
    #[arg(long, global = true)]
    pub sample_size: Option<usize>,
    /// Largest mixture order tried by BIC selection
    #[arg(long, global = true)]
    pub k_max: Option<usize>,
    /// Ratio of raw bid requests to logged records
    #[arg(long, global = true)]
    pub log_sampling_factor: Option<f64>,
    /// Also write SVG charts of the curves
    #[arg(long, global = true)]
    pub plots: bool,
    /// Worker threads for multi-line commands
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate one day of auction log from a synthetic plant
    Simulate {
        /// Plant specification JSON; a built-in example plant if omitted
        #[arg(long)]
        plant: Option<PathBuf>,
        /// Also write the records the true plant wins at this control
        #[arg(long)]
        deliver_at: Option<f64>,
    },
    /// Fit the bid transform and event-rate mixture for one line
    Fit {
        #[command(flatten)]
        input: LogInput,
    },
    /// Build response curves for one line, fitting first if no models are given
    Forecast {
        #[command(flatten)]
        input: LogInput,
        /// models.json from a previous `fit`
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Score forecasts against realized delivery for one or more lines
    Validate {
        /// Validation manifest JSON
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Fit and forecast a simulated day and compare against the true plant
    Roundtrip {
        #[arg(long)]
        plant: Option<PathBuf>,
    },
    /// Print the sample size needed for the configured epsilon and gamma
    SampleSize,
}

#[derive(Debug, Clone, Args)]
struct LogInput {
    /// Auction log (JSON lines or CSV)
    #[arg(long)]
    log: Option<PathBuf>,
    /// Line configuration JSON
    #[arg(long)]
    line: Option<PathBuf>,
    /// The log carries raw internal-auction fields instead of b_star
    #[arg(long)]
    raw: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(errors) => {
            for e in errors {
                eprintln!("error: {e:#}");
            }
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), Vec<anyhow::Error>> {
    let settings = config::Settings::resolve(&cli.common).map_err(|e| vec![e])?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers.unwrap_or(0))
        .build()
        .map_err(|e| vec![e.into()])?;
    pool.install(|| match cli.command {
        Command::Simulate { plant, deliver_at } => {
            commands::simulate(&settings, plant.as_deref(), deliver_at).map_err(|e| vec![e])
        }
        Command::Fit { input } => commands::fit(&settings, &input.into()).map_err(|e| vec![e]),
        Command::Forecast { input, models } => {
            commands::forecast(&settings, &input.into(), models.as_deref()).map_err(|e| vec![e])
        }
        Command::Validate { manifest } => commands::validate(&settings, manifest.as_deref()),
        Command::Roundtrip { plant } => commands::roundtrip(&settings, plant.as_deref()).map_err(|e| vec![e]),
        Command::SampleSize => commands::sample_size(&settings).map_err(|e| vec![e]),
    })
}

impl From<LogInput> for commands::LogInput {
    fn from(a: LogInput) -> Self {
        Self {
            log: a.log,
            line: a.line,
            raw: a.raw,
        }
    }
}
