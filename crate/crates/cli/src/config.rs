//! Run settings: built-in defaults, then the `--config` file, then flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use crate::CommonArgs;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    output: Option<PathBuf>,
    seed: Option<u64>,
    grid_points: Option<usize>,
    epsilon: Option<f64>,
    gamma: Option<f64>,
    sample_size: Option<usize>,
    k_max: Option<usize>,
    log_sampling_factor: Option<f64>,
    emit_plots: Option<bool>,
    workers: Option<usize>,
    plant: Option<PathBuf>,
    log: Option<PathBuf>,
    line: Option<PathBuf>,
    models: Option<PathBuf>,
    manifest: Option<PathBuf>,
    deliver_at: Option<f64>,
    raw: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub output: PathBuf,
    pub seed: u64,
    pub grid_points: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub sample_size: Option<usize>,
    pub k_max: usize,
    pub log_sampling_factor: Option<f64>,
    pub emit_plots: bool,
    pub workers: Option<usize>,
    /// Input paths from the config file; subcommand flags win over these.
    pub files: InputFiles,
}

#[derive(Debug, Clone, Default)]
pub struct InputFiles {
    pub plant: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub line: Option<PathBuf>,
    pub models: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub deliver_at: Option<f64>,
    pub raw: bool,
}

impl Settings {
    pub fn resolve(args: &CommonArgs) -> Result<Self> {
        let file = match &args.config {
            Some(path) => read_config(path)?,
            None => ConfigFile::default(),
        };
        let s = Settings {
            output: args.output.clone().or(file.output).unwrap_or_else(|| PathBuf::from("out")),
            seed: args.seed.or(file.seed).unwrap_or(0),
            grid_points: args.grid_points.or(file.grid_points).unwrap_or(cpa_forecast::forecast::DEFAULT_GRID_POINTS),
            epsilon: args.epsilon.or(file.epsilon).unwrap_or(0.01),
            gamma: args.gamma.or(file.gamma).unwrap_or(0.95),
            sample_size: args.sample_size.or(file.sample_size),
            k_max: args.k_max.or(file.k_max).unwrap_or(cpa_forecast::event_rate::DEFAULT_K_MAX),
            log_sampling_factor: args.log_sampling_factor.or(file.log_sampling_factor),
            emit_plots: args.plots || file.emit_plots.unwrap_or(false),
            workers: args.workers.or(file.workers),
            files: InputFiles {
                plant: file.plant,
                log: file.log,
                line: file.line,
                models: file.models,
                manifest: file.manifest,
                deliver_at: file.deliver_at,
                raw: file.raw.unwrap_or(false),
            },
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if self.grid_points < 2 {
            bail!("--grid-points must be at least 2, got {}", self.grid_points);
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 0.5) {
            bail!("--epsilon must be in (0, 0.5], got {}", self.epsilon);
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            bail!("--gamma must be in (0, 1), got {}", self.gamma);
        }
        if self.sample_size == Some(0) {
            bail!("--sample-size must be positive");
        }
        if self.k_max == 0 {
            bail!("--k-max must be at least 1");
        }
        if let Some(f) = self.log_sampling_factor {
            if !(f > 0.0 && f.is_finite()) {
                bail!("--log-sampling-factor must be positive, got {f}");
            }
        }
        if self.workers == Some(0) {
            bail!("--workers must be at least 1");
        }
        Ok(())
    }
}

fn read_config(path: &Path) -> Result<ConfigFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}
