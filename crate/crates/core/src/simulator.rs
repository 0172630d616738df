//! Synthetic plants with known ground truth.
//!
//! A plant fixes the joint law of `(e, b*, b^c)`: event rates from a mixture,
//! competing bids log-normal and independent of `e`, costs derived from `b*`.
//! Each generated day emits the auction log the line would have recorded
//! under its pacing, together with the unthinned supply. Brute-force curves
//! count wins directly and serve as the oracle for the analytic forecast.

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::bid_model::{self, BidModel};
use crate::error::{Error, Result};
use crate::event_rate::{EventRateModel, SelectConfig};
use crate::forecast::{control_grid, CurvePoint, ResponseCurves};
use crate::ingest::{AuctionRecord, DEFAULT_LOG_SAMPLING_FACTOR};
use crate::line::LineConfig;
use crate::normalization::{BucketCounts, PacingVector, TodModel, SLOTS};
use crate::pipeline::{self, FittedLine, PipelineOptions};
use crate::seeds;

/// Dense truth sample size as a multiple of the daily record count.
pub const TRUTH_MULTIPLIER: usize = 20;

/// Event-rate draws paired with every logged `b*` for roundtrip truth.
pub const TRUTH_DRAWS: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BstarDist {
    LogNormal { location: f64, scale: f64 },
}

impl BstarDist {
    fn sampler(&self) -> Result<LogNormal<f64>> {
        match *self {
            BstarDist::LogNormal { location, scale } => {
                if !location.is_finite() {
                    return Err(Error::Domain {
                        name: "log-normal location",
                        value: location,
                        range: "finite",
                    });
                }
                if !(scale >= 0.0 && scale.is_finite()) {
                    return Err(Error::Domain {
                        name: "log-normal scale",
                        value: scale,
                        range: "[0, ∞)",
                    });
                }
                LogNormal::new(location, scale).map_err(|_| Error::Domain {
                    name: "log-normal scale",
                    value: scale,
                    range: "[0, ∞)",
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostModel {
    /// `b^c = b*`.
    SecondPriceEqual,
    /// `b^c = κ·b*`.
    Discounted { kappa: f64 },
}

impl CostModel {
    fn cost(&self, b_star: f64) -> f64 {
        match *self {
            CostModel::SecondPriceEqual => b_star,
            CostModel::Discounted { kappa } => kappa * b_star,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    #[serde(default)]
    pub line_id: String,
    pub true_erm: EventRateModel,
    pub bstar_dist: BstarDist,
    pub cost_model: CostModel,
    /// `(θ₁, θ₀)`.
    pub true_theta: (f64, f64),
    pub g: f64,
    pub b_max: f64,
    /// Average control in effect while the day is logged.
    pub u_day: f64,
    /// Available impressions per day at the log sampling rate, before pacing.
    pub n_records: usize,
    #[serde(default)]
    pub pacing: PacingVector,
    #[serde(default)]
    pub tod: TodModel,
    #[serde(default = "default_factor")]
    pub log_sampling_factor: f64,
    #[serde(default = "default_win_rate")]
    pub external_win_rate: f64,
    /// Standard deviation of additive noise on logged scores.
    #[serde(default)]
    pub score_noise: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_factor() -> f64 {
    DEFAULT_LOG_SAMPLING_FACTOR
}

fn default_win_rate() -> f64 {
    1.0
}

impl PlantSpec {
    /// A two-component plant with all-day pacing and flat traffic.
    pub fn example(seed: u64) -> Self {
        Self {
            line_id: format!("line-{seed}"),
            true_erm: EventRateModel::new(vec![0.6, 0.4], vec![0.02, 0.05], vec![0.004, 0.008])
                .expect("valid"),
            bstar_dist: BstarDist::LogNormal {
                location: -0.5,
                scale: 0.6,
            },
            cost_model: CostModel::SecondPriceEqual,
            true_theta: (1.0, 0.0),
            g: 20.0,
            b_max: 5.0,
            u_day: 1.0,
            n_records: 10_000,
            pacing: PacingVector::full(),
            tod: TodModel::flat(),
            log_sampling_factor: DEFAULT_LOG_SAMPLING_FACTOR,
            external_win_rate: 1.0,
            score_noise: 0.0,
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn true_bid(&self) -> Result<BidModel> {
        BidModel::new(self.true_theta.0, self.true_theta.1, self.g, self.b_max, self.u_day)
    }

    pub fn validate(&self) -> Result<()> {
        self.true_bid()?;
        self.bstar_dist.sampler()?;
        self.tod.validate()?;
        if self.n_records == 0 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        if let CostModel::Discounted { kappa } = self.cost_model {
            if !(kappa > 0.0 && kappa <= 1.0) {
                return Err(Error::Domain {
                    name: "kappa",
                    value: kappa,
                    range: "(0, 1]",
                });
            }
        }
        if !(self.score_noise >= 0.0) {
            return Err(Error::Domain {
                name: "score_noise",
                value: self.score_noise,
                range: "[0, ∞)",
            });
        }
        Ok(())
    }

    pub fn line_config(&self) -> LineConfig {
        LineConfig {
            line_id: self.line_id.clone(),
            g: self.g,
            b_max: self.b_max,
            u_train: self.u_day,
            pacing: self.pacing.clone(),
            tod: self.tod,
            external_win_rate: self.external_win_rate,
            log_sampling_factor: self.log_sampling_factor,
        }
    }

    /// Expected full-day available impressions.
    pub fn true_n_total(&self) -> f64 {
        self.log_sampling_factor * self.n_records as f64 * self.external_win_rate
    }
}

/// Ground truth recorded alongside a generated day; serialized as `truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub line_id: String,
    pub unthinned_counts: BucketCounts,
    pub unthinned_total: u64,
    pub emitted_total: u64,
    /// Full-day available impressions implied by the unthinned supply.
    pub n_total: f64,
    pub true_bid_model: BidModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDay {
    /// The auction log: records that survived pacing.
    pub records: Vec<AuctionRecord>,
    /// Every available impression, including those pacing dropped.
    pub population: Vec<AuctionRecord>,
    pub line: LineConfig,
    pub truth: Truth,
}

pub fn generate_day(spec: &PlantSpec) -> Result<SimulatedDay> {
    spec.validate()?;
    let bid = spec.true_bid()?;
    let bstar = spec.bstar_dist.sampler()?;
    let shares = spec.tod.bucket_shares()?;
    let mut rng = seeds::rng(seeds::sub_seed(spec.seed, seeds::GENERATE));

    let mut cum = Vec::with_capacity(SLOTS);
    let mut acc = 0.0;
    for s in &shares {
        acc += s;
        cum.push(acc);
    }

    let mut population = Vec::with_capacity(spec.n_records);
    let mut records = Vec::with_capacity(spec.n_records);
    let mut counts = vec![0u64; SLOTS];
    for _ in 0..spec.n_records {
        let x: f64 = rng.random::<f64>() * acc;
        let bucket = cum.partition_point(|&c| c <= x).min(SLOTS - 1);
        let e = spec.true_erm.draw(&mut rng);
        let b_star = bstar.sample(&mut rng);
        let b_c = spec.cost_model.cost(b_star);
        let mut b_s = bid.bid_price(e, spec.u_day);
        if spec.score_noise > 0.0 {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            b_s += spec.score_noise * z;
        }
        let b_s = b_s.max(0.0);
        let keep = rng.random::<f64>() < spec.pacing.as_slice()[bucket];
        let r = AuctionRecord {
            e,
            b_s,
            b_star,
            b_c,
            bucket: bucket as u16,
        };
        counts[bucket] += 1;
        population.push(r);
        if keep {
            records.push(r);
        }
    }

    let truth = Truth {
        line_id: spec.line_id.clone(),
        unthinned_total: spec.n_records as u64,
        emitted_total: records.len() as u64,
        unthinned_counts: BucketCounts::new(counts)?,
        n_total: spec.true_n_total(),
        true_bid_model: bid,
    };
    Ok(SimulatedDay {
        records,
        population,
        line: spec.line_config(),
        truth,
    })
}

/// A large draw from the plant for ground-truth curves, from its own stream.
pub fn dense_population(spec: &PlantSpec, multiplier: usize) -> Result<Vec<AuctionRecord>> {
    let dense = PlantSpec {
        n_records: spec.n_records * multiplier.max(1),
        pacing: PacingVector::full(),
        seed: seeds::sub_seed(spec.seed, "truth"),
        ..spec.clone()
    };
    Ok(generate_day(&dense)?.population)
}

/// Win counts per slot at control `u` under the true bid transform.
pub fn delivered_counts(records: &[AuctionRecord], bid: &BidModel, u: f64) -> BucketCounts {
    let mut counts = vec![0u64; SLOTS];
    for r in records {
        if u > 0.0 && bid.bid_price(r.e, u) > r.b_star {
            counts[usize::from(r.bucket)] += 1;
        }
    }
    BucketCounts::new(counts).expect("fixed length")
}

/// Curves by direct counting of `f(eᵢ, u) > b*ᵢ` over the given records,
/// scaled by `n_total/|records|`. The gain column is a central difference of
/// the spend column.
pub fn brute_force_curves(
    records: &[AuctionRecord],
    bid: &BidModel,
    n_total: f64,
    grid: &[f64],
) -> ResponseCurves {
    let scale = if records.is_empty() {
        0.0
    } else {
        n_total / records.len() as f64
    };
    let points: Vec<CurvePoint> = grid
        .iter()
        .map(|&u| {
            let (mut wins, mut spend, mut conv) = (0usize, 0.0, 0.0);
            if u > 0.0 {
                for r in records {
                    if bid.bid_price(r.e, u) > r.b_star {
                        wins += 1;
                        spend += r.b_c;
                        conv += r.e;
                    }
                }
            }
            point(u, scale * wins as f64, scale * spend, scale * conv)
        })
        .collect();
    with_difference_gain(points)
}

/// The resampling check on the analytic curves: `draws` event rates from the
/// mixture are paired with every logged `b*`, and wins are counted by direct
/// bid comparison.
pub fn numerical_curves(
    records: &[AuctionRecord],
    bid: &BidModel,
    erm: &EventRateModel,
    n_total: f64,
    grid: &[f64],
    draws: usize,
    seed: u64,
) -> ResponseCurves {
    let mut es = erm.sample(draws, seed);
    es.sort_by(f64::total_cmp);
    // suffix sums of event rate over the sorted draws
    let mut suffix = vec![0.0; es.len() + 1];
    for i in (0..es.len()).rev() {
        suffix[i] = suffix[i + 1] + es[i];
    }
    let m = es.len() as f64;
    let scale = n_total / records.len() as f64;
    let points: Vec<CurvePoint> = grid
        .iter()
        .map(|&u| {
            let (mut n, mut spend, mut conv) = (0.0, 0.0, 0.0);
            if u > 0.0 {
                for r in records {
                    let lose = es.partition_point(|&e| bid.bid_price(e, u) <= r.b_star);
                    let won = (es.len() - lose) as f64 / m;
                    n += won;
                    spend += won * r.b_c;
                    conv += suffix[lose] / m;
                }
            }
            point(u, scale * n, scale * spend, scale * conv)
        })
        .collect();
    with_difference_gain(points)
}

fn point(u: f64, n_impressions: f64, spend: f64, n_conversions: f64) -> CurvePoint {
    CurvePoint {
        u,
        n_impressions,
        spend,
        plant_gain: 0.0,
        n_conversions,
        ecpa: (n_conversions > 0.0).then(|| spend / n_conversions),
    }
}

fn with_difference_gain(mut points: Vec<CurvePoint>) -> ResponseCurves {
    let n = points.len();
    for i in 0..n {
        let (a, b) = match i {
            _ if n < 2 => continue,
            0 => (0, 1),
            _ if i == n - 1 => (n - 2, n - 1),
            _ => (i - 1, i + 1),
        };
        if points[i].u == 0.0 {
            continue;
        }
        let du = points[b].u - points[a].u;
        points[i].plant_gain = ((points[b].spend - points[a].spend) / du).max(0.0);
    }
    ResponseCurves { points }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundtripRow {
    pub u: f64,
    pub forecast_impressions: f64,
    pub truth_impressions: f64,
    pub impressions_rel_err: Option<f64>,
    pub forecast_spend: f64,
    pub truth_spend: f64,
    pub spend_rel_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundtripReport {
    pub line_id: String,
    pub true_theta: (f64, f64),
    pub fitted_theta: (f64, f64),
    pub k_selected: usize,
    pub n_total_true: f64,
    pub n_total_estimated: f64,
    /// Largest relative impressions error over rows where the truth exceeds
    /// [`MIN_TRUTH_IMPRESSIONS`].
    pub max_impressions_rel_err: f64,
    pub rows: Vec<RoundtripRow>,
}

pub const MIN_TRUTH_IMPRESSIONS: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundtripOptions {
    pub grid_points: usize,
    pub k_max: usize,
    pub truth_draws: usize,
}

impl Default for RoundtripOptions {
    fn default() -> Self {
        Self {
            grid_points: crate::forecast::DEFAULT_GRID_POINTS,
            k_max: crate::event_rate::DEFAULT_K_MAX,
            truth_draws: TRUTH_DRAWS,
        }
    }
}

/// Runs the full pipeline on a generated day and scores it against the
/// curves the true plant would deliver against the same logged competition:
/// every logged `b*` is paired with a dense draw of true event rates and
/// wins are counted under the true bid transform.
pub fn fit_and_forecast_roundtrip(spec: &PlantSpec, opts: &RoundtripOptions) -> Result<RoundtripReport> {
    let day = generate_day(spec)?;
    let popts = PipelineOptions {
        seed: spec.seed,
        grid_points: opts.grid_points,
        select: SelectConfig {
            k_max: opts.k_max,
            ..SelectConfig::default()
        },
        ..PipelineOptions::default()
    };
    let (fitted, curves): (FittedLine, ResponseCurves) = pipeline::run_line(&day.records, &day.line, &popts)?;
    let grid: Vec<f64> = curves.grid().collect();

    let truth = numerical_curves(
        &day.records,
        &spec.true_bid()?,
        &spec.true_erm,
        spec.true_n_total(),
        &grid,
        opts.truth_draws,
        seeds::sub_seed(spec.seed, "truth"),
    );

    let rel = |f: f64, t: f64| (t > 0.0).then(|| (f - t).abs() / t);
    let rows: Vec<RoundtripRow> = curves
        .points
        .iter()
        .zip(&truth.points)
        .map(|(f, t)| RoundtripRow {
            u: f.u,
            forecast_impressions: f.n_impressions,
            truth_impressions: t.n_impressions,
            impressions_rel_err: rel(f.n_impressions, t.n_impressions),
            forecast_spend: f.spend,
            truth_spend: t.spend,
            spend_rel_err: rel(f.spend, t.spend),
        })
        .collect();
    let max_impressions_rel_err = rows
        .iter()
        .filter(|r| r.truth_impressions > MIN_TRUTH_IMPRESSIONS)
        .filter_map(|r| r.impressions_rel_err)
        .fold(0.0, f64::max);

    Ok(RoundtripReport {
        line_id: spec.line_id.clone(),
        true_theta: spec.true_theta,
        fitted_theta: (fitted.bid_model.theta1, fitted.bid_model.theta0),
        k_selected: fitted.fit_report.k_selected,
        n_total_true: spec.true_n_total(),
        n_total_estimated: fitted.n_total,
        max_impressions_rel_err,
        rows,
    })
}

/// Grid for ground-truth curves of a generated day under the true bid.
pub fn truth_grid(day: &SimulatedDay, points: usize) -> Result<Vec<f64>> {
    let u_max = bid_model::u_max(&day.truth.true_bid_model, &day.population)?;
    control_grid(u_max, points)
}
