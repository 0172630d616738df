use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use cpa_forecast::event_rate::SelectConfig;
use cpa_forecast::ingest::{self, LogFormat};
use cpa_forecast::pipeline::{self, FittedLine, PipelineOptions};
use cpa_forecast::simulator::{self, PlantSpec, RoundtripOptions};
use cpa_forecast::validation::{self, ActualDelivery, BiasRecord, BiasSummary};
use cpa_forecast::{AuctionRecord, LineConfig, ResponseCurves};

use crate::config::Settings;
use crate::plot;

pub struct LogInput {
    pub log: Option<PathBuf>,
    pub line: Option<PathBuf>,
    pub raw: bool,
}

pub fn simulate(s: &Settings, plant: Option<&Path>, deliver_at: Option<f64>) -> Result<()> {
    let mut spec = match plant.or(s.files.plant.as_deref()) {
        Some(p) => read_json::<PlantSpec>(p)?,
        None => PlantSpec::example(s.seed),
    };
    spec.seed = s.seed;
    if let Some(f) = s.log_sampling_factor {
        spec.log_sampling_factor = f;
    }
    if spec.line_id.is_empty() {
        spec.line_id = format!("line-{}", s.seed);
    }
    let day = simulator::generate_day(&spec)?;

    let mut log = Vec::new();
    ingest::write_auction_log(&day.records, &mut log)?;
    write(s, "log.jsonl", log)?;
    write_json(s, "line.json", &day.line)?;
    write_json(s, "truth.json", &day.truth)?;

    let grid = simulator::truth_grid(&day, s.grid_points)?;
    let dense = simulator::dense_population(&spec, simulator::TRUTH_MULTIPLIER)?;
    let truth = simulator::brute_force_curves(&dense, &day.truth.true_bid_model, day.truth.n_total, &grid);
    write(s, "truth_curves.csv", truth.to_csv())?;

    if let Some(u) = deliver_at.or(s.files.deliver_at) {
        if !(u >= 0.0 && u.is_finite()) {
            bail!("--deliver-at must be a nonnegative control, got {u}");
        }
        let bid = day.truth.true_bid_model;
        let won: Vec<AuctionRecord> = day
            .records
            .iter()
            .filter(|r| u > 0.0 && bid.bid_price(r.e, u) > r.b_star)
            .copied()
            .collect();
        let mut out = Vec::new();
        ingest::write_auction_log(&won, &mut out)?;
        write(s, "delivered.jsonl", out)?;
    }
    println!(
        "simulated {}: {} of {} available impressions logged",
        spec.line_id, day.truth.emitted_total, day.truth.unthinned_total
    );
    Ok(())
}

struct LoadedLine {
    records: Vec<AuctionRecord>,
    line: LineConfig,
}

fn load_line(s: &Settings, input: &LogInput) -> Result<LoadedLine> {
    let log = input
        .log
        .as_deref()
        .or(s.files.log.as_deref())
        .ok_or_else(|| anyhow!("missing --log"))?;
    let line = input
        .line
        .as_deref()
        .or(s.files.line.as_deref())
        .ok_or_else(|| anyhow!("missing --line"))?;
    let format = if input.raw || s.files.raw { LogFormat::Raw } else { LogFormat::Derived };
    let records = read_log(log, format)?;
    let mut line: LineConfig = read_json(line)?;
    if let Some(f) = s.log_sampling_factor {
        line.log_sampling_factor = f;
    }
    Ok(LoadedLine { records, line })
}

fn read_log(path: &Path, format: LogFormat) -> Result<Vec<AuctionRecord>> {
    let file = File::open(path).with_context(|| format!("opening log {}", path.display()))?;
    let parsed = ingest::parse_auction_log(BufReader::new(file), format)
        .with_context(|| format!("reading log {}", path.display()))?;
    if parsed.skipped > 0 {
        eprintln!(
            "warning: {}: skipped {} of {} malformed rows",
            path.display(),
            parsed.skipped,
            parsed.total_rows()
        );
    }
    Ok(parsed.records)
}

fn pipeline_options(s: &Settings) -> Result<PipelineOptions> {
    let sample_size = match s.sample_size {
        Some(n) => n,
        None => ingest::required_sample_size(s.epsilon, s.gamma)?,
    };
    Ok(PipelineOptions {
        seed: s.seed,
        sample_size: Some(sample_size),
        select: SelectConfig {
            k_max: s.k_max,
            ..SelectConfig::default()
        },
        grid_points: s.grid_points,
    })
}

fn fit_loaded(s: &Settings, l: &LoadedLine) -> Result<FittedLine> {
    let fitted = pipeline::fit_line(&l.records, &l.line, &pipeline_options(s)?)?;
    write_json(s, "models.json", &fitted)?;
    println!(
        "fit {}: theta=({:.6}, {:.6}) K={} N={:.1} from {} of {} records",
        fitted.line_id,
        fitted.bid_model.theta1,
        fitted.bid_model.theta0,
        fitted.fit_report.k_selected,
        fitted.n_total,
        fitted.n_used,
        fitted.n_observed
    );
    Ok(fitted)
}

pub fn fit(s: &Settings, input: &LogInput) -> Result<()> {
    let l = load_line(s, input)?;
    fit_loaded(s, &l).map(|_| ())
}

pub fn forecast(s: &Settings, input: &LogInput, models: Option<&Path>) -> Result<()> {
    let l = load_line(s, input)?;
    let fitted = match models.or(s.files.models.as_deref()) {
        Some(p) => read_json::<FittedLine>(p)?,
        None => fit_loaded(s, &l)?,
    };
    let curves = pipeline::forecast_line(&l.records, &fitted, &pipeline_options(s)?)?;
    write(s, "curves.csv", curves.to_csv())?;
    write_json(s, "curves.json", &curves)?;
    if s.emit_plots {
        for (name, svg) in plot::curve_charts(&curves) {
            write(s, name, svg)?;
        }
    }
    let top = curves.points.last().expect("grid is nonempty");
    println!(
        "forecast {}: {} grid points up to u={:.6}, saturating at {:.1} impressions",
        fitted.line_id,
        curves.len(),
        top.u,
        top.n_impressions
    );
    Ok(())
}

/// One line to validate. Paths are relative to the manifest.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    line_id: String,
    curves: PathBuf,
    u_realized: f64,
    /// Delivery given directly.
    #[serde(default)]
    actual: Option<ActualDelivery>,
    /// Delivery read from a log of won impressions, normalized with `line`.
    #[serde(default)]
    delivered_log: Option<PathBuf>,
    #[serde(default)]
    line: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    lines: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize)]
struct BiasReport<'a> {
    records: &'a [BiasRecord],
    summary: &'a BiasSummary,
}

fn validate_entry(s: &Settings, base: &Path, e: &ManifestEntry) -> Result<BiasRecord> {
    let curves_path = base.join(&e.curves);
    let text = fs::read_to_string(&curves_path)
        .with_context(|| format!("reading curves {}", curves_path.display()))?;
    let curves = ResponseCurves::from_csv(&text).with_context(|| format!("parsing {}", curves_path.display()))?;
    let actual = match (&e.actual, &e.delivered_log, &e.line) {
        (Some(a), None, None) => a.clone(),
        (None, Some(log), Some(line)) => {
            let records = read_log(&base.join(log), LogFormat::Derived)?;
            let mut line: LineConfig = read_json(&base.join(line))?;
            if let Some(f) = s.log_sampling_factor {
                line.log_sampling_factor = f;
            }
            ActualDelivery {
                counts: ingest::bucket_counts(&records),
                pacing: line.pacing,
                tod: line.tod,
                log_sampling_factor: line.log_sampling_factor,
                external_win_rate: line.external_win_rate,
            }
        }
        _ => bail!("give either `actual` or both `delivered_log` and `line`"),
    };
    Ok(validation::forecast_bias(&e.line_id, &curves, e.u_realized, &actual)?)
}

pub fn validate(s: &Settings, manifest: Option<&Path>) -> Result<(), Vec<anyhow::Error>> {
    let path = manifest
        .or(s.files.manifest.as_deref())
        .ok_or_else(|| vec![anyhow!("missing --manifest")])?;
    let m: Manifest = read_json(path).map_err(|e| vec![e])?;
    let base = path.parent().unwrap_or(Path::new("."));

    let results: Vec<Result<BiasRecord>> = m
        .lines
        .par_iter()
        .map(|e| validate_entry(s, base, e).with_context(|| format!("line {}", e.line_id)))
        .collect();
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(b) => records.push(b),
            Err(e) => errors.push(e),
        }
    }
    if !records.is_empty() {
        let written = validation::bias_summary(&records).map_err(anyhow::Error::from).and_then(|summary| {
            write_json(s, "bias.json", &BiasReport { records: &records, summary: &summary })?;
            write(s, "bias_hist.csv", summary.histogram_csv())?;
            println!(
                "validated {} lines: median rho {:.4}, central 90% [{:.4}, {:.4}]",
                summary.n_lines, summary.rho.q50, summary.central_90.0, summary.central_90.1
            );
            Ok(())
        });
        if let Err(e) = written {
            errors.push(e);
        }
    } else if errors.is_empty() {
        errors.push(anyhow!("manifest lists no lines"));
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

pub fn roundtrip(s: &Settings, plant: Option<&Path>) -> Result<()> {
    let mut spec = match plant.or(s.files.plant.as_deref()) {
        Some(p) => read_json::<PlantSpec>(p)?,
        None => PlantSpec::example(s.seed),
    };
    spec.seed = s.seed;
    if let Some(f) = s.log_sampling_factor {
        spec.log_sampling_factor = f;
    }
    let opts = RoundtripOptions {
        grid_points: s.grid_points,
        k_max: s.k_max,
        ..RoundtripOptions::default()
    };
    let report = simulator::fit_and_forecast_roundtrip(&spec, &opts)?;
    write_json(s, "roundtrip.json", &report)?;
    println!(
        "roundtrip {}: theta ({:.4}, {:.4}) -> ({:.4}, {:.4}), K={}, max impressions error {:.4}",
        report.line_id,
        report.true_theta.0,
        report.true_theta.1,
        report.fitted_theta.0,
        report.fitted_theta.1,
        report.k_selected,
        report.max_impressions_rel_err
    );
    Ok(())
}

pub fn sample_size(s: &Settings) -> Result<()> {
    println!("{}", ingest::required_sample_size(s.epsilon, s.gamma)?);
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write(s: &Settings, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::create_dir_all(&s.output).with_context(|| format!("creating {}", s.output.display()))?;
    let path = s.output.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize + ?Sized>(s: &Settings, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(s, name, text)
}
