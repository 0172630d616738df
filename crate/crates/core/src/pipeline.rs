//! The daily per-line pipeline: normalize supply, downsample, fit the bid
//! transform and event-rate mixture, and build response curves.

use serde::{Deserialize, Serialize};

use crate::bid_model::{self, BidModel};
use crate::error::Result;
use crate::event_rate::{self, EventRateModel, FitReport, SelectConfig};
use crate::forecast::{ForecastInputs, Forecaster, ResponseCurves, DEFAULT_GRID_POINTS};
use crate::ingest::{self, AuctionRecord};
use crate::line::LineConfig;
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    pub seed: u64,
    /// Records kept for fitting and forecasting; `None` keeps all.
    pub sample_size: Option<usize>,
    pub select: SelectConfig,
    pub grid_points: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            sample_size: None,
            select: SelectConfig::default(),
            grid_points: DEFAULT_GRID_POINTS,
        }
    }
}

/// Everything fitted for one line; serialized as `models.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedLine {
    pub line_id: String,
    pub bid_model: BidModel,
    pub event_rate_model: EventRateModel,
    pub fit_report: FitReport,
    /// Full-day available impressions.
    pub n_total: f64,
    pub n_observed: usize,
    pub n_used: usize,
    /// Pearson correlation between `e` and `b*` in the fitting sample.
    pub pearson_e_bstar: Option<f64>,
}

/// Downsamples to `opts.sample_size` with the run's downsampling stream.
pub fn prepare_records(records: &[AuctionRecord], opts: &PipelineOptions) -> Vec<AuctionRecord> {
    match opts.sample_size {
        Some(n) => ingest::downsample(records, n, seeds::sub_seed(opts.seed, seeds::DOWNSAMPLE)),
        None => records.to_vec(),
    }
}

/// Fits one line. Bucket counts for normalization come from the full log,
/// before downsampling.
pub fn fit_line(records: &[AuctionRecord], line: &LineConfig, opts: &PipelineOptions) -> Result<FittedLine> {
    let n_total = line.total_available(&ingest::bucket_counts(records))?;
    let used = prepare_records(records, opts);

    let pairs: Vec<(f64, f64)> = used.iter().map(|r| (r.e, r.b_s)).collect();
    let bid_model = bid_model::fit_bid_params(&pairs, line.g, line.b_max, line.u_train)?;

    let es: Vec<f64> = used.iter().map(|r| r.e).collect();
    let select = SelectConfig {
        k_max: opts.select.k_max.min(es.len()).max(1),
        ..opts.select
    };
    let (event_rate_model, fit_report) =
        event_rate::select_k_bic_with(&es, &select, seeds::sub_seed(opts.seed, seeds::FIT))?;

    let bstars: Vec<f64> = used.iter().map(|r| r.b_star).collect();
    let pearson_e_bstar = event_rate::pearson_diagnostic(&es, &bstars).ok();

    Ok(FittedLine {
        line_id: line.line_id.clone(),
        bid_model,
        event_rate_model,
        fit_report,
        n_total,
        n_observed: records.len(),
        n_used: used.len(),
        pearson_e_bstar,
    })
}

pub fn forecaster(used: Vec<AuctionRecord>, fitted: &FittedLine, opts: &PipelineOptions) -> Result<Forecaster> {
    Forecaster::new(ForecastInputs {
        records: used,
        bid: fitted.bid_model,
        erm: fitted.event_rate_model.clone(),
        n_total: fitted.n_total,
        seed: seeds::sub_seed(opts.seed, seeds::SAMPLE),
    })
}

/// Fit and forecast in one step.
pub fn run_line(
    records: &[AuctionRecord],
    line: &LineConfig,
    opts: &PipelineOptions,
) -> Result<(FittedLine, ResponseCurves)> {
    let fitted = fit_line(records, line, opts)?;
    let curves = forecast_line(records, &fitted, opts)?;
    Ok((fitted, curves))
}

/// Builds curves from already-fitted models.
pub fn forecast_line(
    records: &[AuctionRecord],
    fitted: &FittedLine,
    opts: &PipelineOptions,
) -> Result<ResponseCurves> {
    let used = prepare_records(records, opts);
    forecaster(used, fitted, opts)?.build_response_curves(opts.grid_points)
}
