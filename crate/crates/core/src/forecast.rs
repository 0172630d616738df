//! Control-response curves.
//!
//! With event rate independent of the competing bid, the win probability of
//! logged impression `i` at control `u` is the event-rate survival function
//! at the threshold `(b*ᵢ + θ₀)/(θ₁·g·u)`. Averaging over the logged `b*`
//! sample gives impressions and spend in closed form, and differentiating the
//! spend sum gives the plant gain. Conversions need the joint of `e` and the
//! win indicator, so they are estimated from one fixed event-rate draw.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bid_model::{self, BidModel};
use crate::error::{Error, Result};
use crate::event_rate::EventRateModel;
use crate::ingest::AuctionRecord;

/// Lower end of the curve grid as a fraction of `u_max`.
pub const GRID_LOW_FRACTION: f64 = 1e-4;
/// Upper end of the curve grid as a multiple of `u_max`.
pub const GRID_OVERSHOOT: f64 = 1.05;
pub const DEFAULT_GRID_POINTS: usize = 200;

/// Survival function of an event-rate distribution.
pub trait EventRateLaw {
    /// `P(e > x)`.
    fn survival(&self, x: f64) -> f64;
}

impl EventRateLaw for EventRateModel {
    fn survival(&self, x: f64) -> f64 {
        self.sf(x)
    }
}

/// Empirical distribution of observed event rates.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalEventRates {
    sorted: Vec<f64>,
}

impl EmpiricalEventRates {
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        Self { sorted: values }
    }

    /// Number of values strictly above `x`.
    pub fn count_above(&self, x: f64) -> usize {
        self.sorted.len() - self.sorted.partition_point(|&v| v <= x)
    }
}

impl EventRateLaw for EmpiricalEventRates {
    fn survival(&self, x: f64) -> f64 {
        self.count_above(x) as f64 / self.sorted.len() as f64
    }
}

/// `(N/N′)·Σᵢ P(e > f⁻¹(b*ᵢ, u))` over eligible records, for any event-rate law.
pub fn impressions_with<L: EventRateLaw + ?Sized>(
    law: &L,
    records: &[AuctionRecord],
    bid: &BidModel,
    n_total: f64,
    u: f64,
) -> f64 {
    if u <= 0.0 || records.is_empty() {
        return 0.0;
    }
    let cap = bid.eligibility_cap();
    let sum: f64 = records
        .iter()
        .filter(|r| r.b_star < cap)
        .map(|r| law.survival(bid.inverse_bid(r.b_star, u)))
        .fold(0.0, |acc, v| acc + v);
    n_total / records.len() as f64 * sum
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastInputs {
    pub records: Vec<AuctionRecord>,
    pub bid: BidModel,
    pub erm: EventRateModel,
    /// Full-day available impressions.
    pub n_total: f64,
    /// Seed for the conversion sampler.
    pub seed: u64,
}

/// One row of the response curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub u: f64,
    pub n_impressions: f64,
    pub spend: f64,
    pub plant_gain: f64,
    pub n_conversions: f64,
    /// Absent when no conversions are forecast.
    pub ecpa: Option<f64>,
}

pub const CSV_HEADER: &str = "u,n_impressions,spend,plant_gain,n_conversions,ecpa";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResponseCurves {
    pub points: Vec<CurvePoint>,
}

impl ResponseCurves {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn grid(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.u)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.points.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            let ecpa = p.ecpa.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.u, p.n_impressions, p.spend, p.plant_gain, p.n_conversions, ecpa
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut points = Vec::new();
        for row in reader.deserialize::<CsvRow>() {
            let r = row?;
            points.push(CurvePoint {
                u: r.u,
                n_impressions: r.n_impressions,
                spend: r.spend,
                plant_gain: r.plant_gain,
                n_conversions: r.n_conversions,
                ecpa: r.ecpa,
            });
        }
        Ok(Self { points })
    }
}

#[derive(Deserialize)]
struct CsvRow {
    u: f64,
    n_impressions: f64,
    spend: f64,
    plant_gain: f64,
    n_conversions: f64,
    ecpa: Option<f64>,
}

/// Evaluates the response metrics for one line.
///
/// The conversion sample is drawn once at construction and paired with the
/// logged `b*` in log order, so conversions are monotone in `u` and repeated
/// evaluations agree exactly.
#[derive(Debug, Clone)]
pub struct Forecaster {
    inputs: ForecastInputs,
    /// `(b*, b^c)` of records under the eligibility cap.
    eligible: Vec<(f64, f64)>,
    /// Event-rate draws paired with each record's `b*`.
    conversion_draws: Vec<(f64, f64)>,
    scale: f64,
}

impl Forecaster {
    pub fn new(inputs: ForecastInputs) -> Result<Self> {
        if inputs.records.is_empty() {
            return Err(Error::Empty("forecast records"));
        }
        if !(inputs.n_total > 0.0 && inputs.n_total.is_finite()) {
            return Err(Error::Domain {
                name: "N",
                value: inputs.n_total,
                range: "(0, ∞)",
            });
        }
        let cap = inputs.bid.eligibility_cap();
        let eligible = inputs
            .records
            .iter()
            .filter(|r| r.b_star < cap)
            .map(|r| (r.b_star, r.b_c))
            .collect();
        let draws = inputs.erm.sample(inputs.records.len(), inputs.seed);
        let conversion_draws = draws
            .into_iter()
            .zip(&inputs.records)
            .map(|(e, r)| (e, r.b_star))
            .collect();
        let scale = inputs.n_total / inputs.records.len() as f64;
        Ok(Self {
            inputs,
            eligible,
            conversion_draws,
            scale,
        })
    }

    pub fn inputs(&self) -> &ForecastInputs {
        &self.inputs
    }

    pub fn u_max(&self) -> Result<f64> {
        bid_model::u_max(&self.inputs.bid, &self.inputs.records)
    }

    pub fn impressions_at(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        let bid = &self.inputs.bid;
        let sum: f64 = self
            .eligible
            .iter()
            .map(|&(b_star, _)| self.inputs.erm.sf(bid.inverse_bid(b_star, u)))
            .fold(0.0, |acc, v| acc + v);
        self.scale * sum
    }

    pub fn spend_at(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        let bid = &self.inputs.bid;
        let sum: f64 = self
            .eligible
            .iter()
            .map(|&(b_star, b_c)| self.inputs.erm.sf(bid.inverse_bid(b_star, u)) * b_c)
            .fold(0.0, |acc, v| acc + v);
        self.scale * sum
    }

    /// `∂c/∂u = (N/N′)/u² · Σ p_e(f⁻¹(b*ᵢ, u))·b^cᵢ·(b*ᵢ + θ₀)/(θ₁·g)`,
    /// extended by continuity to 0 at `u = 0`.
    pub fn plant_gain_at(&self, u: f64) -> f64 {
        let bid = &self.inputs.bid;
        if u <= 0.0 || bid.theta1 <= 0.0 {
            return 0.0;
        }
        let denom = bid.theta1 * bid.g;
        let sum: f64 = self
            .eligible
            .iter()
            .map(|&(b_star, b_c)| {
                let thr = bid.inverse_bid(b_star, u);
                self.inputs.erm.pdf(thr) * b_c * (b_star + bid.theta0) / denom
            })
            .fold(0.0, |acc, v| acc + v);
        self.scale * sum / (u * u)
    }

    pub fn conversions_at(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        let bid = &self.inputs.bid;
        let sum: f64 = self
            .conversion_draws
            .iter()
            .filter(|&&(e, b_star)| bid.bid_price(e, u) >= b_star)
            .map(|&(e, _)| e)
            .fold(0.0, |acc, v| acc + v);
        self.scale * sum
    }

    pub fn ecpa_at(&self, u: f64) -> Option<f64> {
        ratio(self.spend_at(u), self.conversions_at(u))
    }

    pub fn point(&self, u: f64) -> CurvePoint {
        let spend = self.spend_at(u);
        let n_conversions = self.conversions_at(u);
        CurvePoint {
            u,
            n_impressions: self.impressions_at(u),
            spend,
            plant_gain: self.plant_gain_at(u),
            n_conversions,
            ecpa: ratio(spend, n_conversions),
        }
    }

    /// Evaluates every metric on `{0} ∪ logspace(u_max·1e-4, 1.05·u_max)`.
    pub fn build_response_curves(&self, grid_points: usize) -> Result<ResponseCurves> {
        let grid = control_grid(self.u_max()?, grid_points)?;
        Ok(self.curves_on(&grid))
    }

    pub fn curves_on(&self, grid: &[f64]) -> ResponseCurves {
        ResponseCurves {
            points: grid.par_iter().map(|&u| self.point(u)).collect(),
        }
    }
}

fn ratio(spend: f64, conversions: f64) -> Option<f64> {
    (conversions > 0.0).then(|| spend / conversions)
}

/// `[0]` followed by `points` log-spaced values on `[u_max·1e-4, 1.05·u_max]`.
pub fn control_grid(u_max: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::Domain {
            name: "grid_points",
            value: points as f64,
            range: "[2, ∞)",
        });
    }
    if !(u_max > 0.0 && u_max.is_finite()) {
        return Err(Error::EmptyRange("u_max must be positive to span a log grid"));
    }
    let lo = (u_max * GRID_LOW_FRACTION).ln();
    let hi = (u_max * GRID_OVERSHOOT).ln();
    let step = (hi - lo) / (points - 1) as f64;
    let mut grid = Vec::with_capacity(points + 1);
    grid.push(0.0);
    grid.extend((0..points).map(|i| (lo + step * i as f64).exp()));
    grid[points] = u_max * GRID_OVERSHOOT;
    Ok(grid)
}

/// `(spend, eCPA)` pairs where eCPA is defined, ascending in spend.
pub fn spend_ecpa_profile(curves: &ResponseCurves) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = curves
        .points
        .iter()
        .filter_map(|p| p.ecpa.map(|v| (p.spend, v)))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Largest spend reachable before eCPA first rises above `target`, linearly
/// interpolated between profile points. `None` if the cheapest point already
/// exceeds the target or the profile is empty.
pub fn spend_at_ecpa(profile: &[(f64, f64)], target: f64) -> Option<f64> {
    let first = profile.first()?;
    if first.1 > target {
        return None;
    }
    for w in profile.windows(2) {
        let (s0, v0) = w[0];
        let (s1, v1) = w[1];
        if v1 > target {
            let t = (target - v0) / (v1 - v0);
            return Some(s0 + t * (s1 - s0));
        }
    }
    profile.last().map(|p| p.0)
}
