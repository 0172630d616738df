//! The production bid transform and its fit.
//!
//! A line bids `θ₁·min(u·g·e, b_max) − θ₀`: the control-scaled value of the
//! impression, capped at the advertiser's max bid, less multiplicative and
//! additive fees. θ is recovered from logged `(e, b_s)` pairs by box-constrained
//! least squares over `[0, 1]²`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::AuctionRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BidModel {
    pub theta1: f64,
    pub theta0: f64,
    /// Goal amount per conversion.
    pub g: f64,
    pub b_max: f64,
    /// Average control signal over the window the scores were logged in.
    pub u_train: f64,
}

impl BidModel {
    pub fn new(theta1: f64, theta0: f64, g: f64, b_max: f64, u_train: f64) -> Result<Self> {
        check_unit("theta1", theta1)?;
        check_unit("theta0", theta0)?;
        check_positive("g", g)?;
        check_positive("b_max", b_max)?;
        check_positive("u_train", u_train)?;
        Ok(Self {
            theta1,
            theta0,
            g,
            b_max,
            u_train,
        })
    }

    /// `f(e, u) = θ₁·min(u·g·e, b_max) − θ₀`.
    #[inline]
    pub fn bid_price(&self, e: f64, u: f64) -> f64 {
        self.theta1 * (u * self.g * e).min(self.b_max) - self.theta0
    }

    /// Event-rate threshold above which the uncapped bid beats `b_star`:
    /// `(b* + θ₀)/(θ₁·u·g)`. Returns `+∞` when no bid can be placed
    /// (`u = 0` or `θ₁ = 0`).
    #[inline]
    pub fn inverse_bid(&self, b_star: f64, u: f64) -> f64 {
        let denom = self.theta1 * u * self.g;
        if denom > 0.0 {
            (b_star + self.theta0) / denom
        } else {
            f64::INFINITY
        }
    }

    /// Highest bid reachable at any control: `θ₁·b_max − θ₀`.
    #[inline]
    pub fn eligibility_cap(&self) -> f64 {
        self.theta1 * self.b_max - self.theta0
    }

    #[inline]
    pub fn is_eligible(&self, b_star: f64) -> bool {
        b_star < self.eligibility_cap()
    }

    /// Capped control value `x = min(u_train·g·e, b_max)` used by the fit.
    #[inline]
    fn design(&self, e: f64) -> f64 {
        (self.u_train * self.g * e).min(self.b_max)
    }
}

fn check_unit(name: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value: v,
            range: "[0, 1]",
        })
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value: v,
            range: "(0, ∞)",
        })
    }
}

/// `½ Σ (θ₁·x − θ₀ − b)²`.
pub fn fit_objective(xs: &[f64], bs: &[f64], theta1: f64, theta0: f64) -> f64 {
    0.5 * xs
        .iter()
        .zip(bs)
        .map(|(&x, &b)| {
            let r = theta1 * x - theta0 - b;
            r * r
        })
        .sum::<f64>()
}

/// Fits θ over `[0, 1]²` from `(e, b_s)` pairs.
///
/// The problem has two unknowns, so the active set is enumerated exactly:
/// the unconstrained normal-equation solution if it is feasible, otherwise
/// the best of the four edge problems (each a clamped 1-D least squares,
/// which also covers the corners).
pub fn fit_bid_params(pairs: &[(f64, f64)], g: f64, b_max: f64, u_train: f64) -> Result<BidModel> {
    if pairs.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: pairs.len(),
        });
    }
    let mut model = BidModel::new(1.0, 0.0, g, b_max, u_train)?;
    let xs: Vec<f64> = pairs.iter().map(|&(e, _)| model.design(e)).collect();
    let bs: Vec<f64> = pairs.iter().map(|&(_, b)| b).collect();
    let (theta1, theta0) = solve_box_ls(&xs, &bs);
    model.theta1 = theta1;
    model.theta0 = theta0;
    Ok(model)
}

fn solve_box_ls(xs: &[f64], bs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let b_mean = bs.iter().sum::<f64>() / n;
    let (mut sxx_c, mut sxb_c) = (0.0, 0.0);
    for (&x, &b) in xs.iter().zip(bs) {
        sxx_c += (x - x_mean) * (x - x_mean);
        sxb_c += (x - x_mean) * (b - b_mean);
    }
    let sxx: f64 = xs.iter().map(|x| x * x).sum();

    // Degenerate design: θ₀ and θ₁ are not separately identifiable.
    if sxx_c <= 1e-12 * sxx.max(f64::MIN_POSITIVE) {
        let t1 = b_mean / x_mean;
        let t1 = if t1.is_nan() { 0.0 } else { t1.clamp(0.0, 1.0) };
        return (t1, 0.0);
    }

    let t1 = sxb_c / sxx_c;
    let t0 = t1 * x_mean - b_mean;
    if (0.0..=1.0).contains(&t1) && (0.0..=1.0).contains(&t0) {
        return (t1, t0);
    }

    // Edge minimizers. With θ₁ fixed, θ₀ = θ₁x̄ − b̄; with θ₀ fixed,
    // θ₁ = Σx(b + θ₀)/Σx².
    let sxb_raw: f64 = xs.iter().zip(bs).map(|(x, b)| x * b).sum();
    let sx: f64 = xs.iter().sum();
    let theta0_given = |t1: f64| (t1 * x_mean - b_mean).clamp(0.0, 1.0);
    let theta1_given = |t0: f64| ((sxb_raw + t0 * sx) / sxx).clamp(0.0, 1.0);
    let candidates = [
        (0.0, theta0_given(0.0)),
        (1.0, theta0_given(1.0)),
        (theta1_given(0.0), 0.0),
        (theta1_given(1.0), 1.0),
    ];
    candidates
        .into_iter()
        .map(|(a, b)| (fit_objective(xs, bs, a, b), a, b))
        .min_by(|p, q| p.0.total_cmp(&q.0))
        .map(|(_, a, b)| (a, b))
        .expect("four candidates")
}

/// Smallest control at which every eligible record is won in the uncapped
/// branch: `max (b*ᵢ + θ₀)/(θ₁·g·eᵢ)` over eligible records with `eᵢ > 0`.
pub fn u_max(m: &BidModel, records: &[AuctionRecord]) -> Result<f64> {
    if m.theta1 <= 0.0 {
        return Err(Error::EmptyRange("theta1 is zero, no bid can be placed"));
    }
    let mut any_eligible = false;
    let mut best: Option<f64> = None;
    for r in records.iter().filter(|r| m.is_eligible(r.b_star)) {
        any_eligible = true;
        if r.e > 0.0 {
            let u = (r.b_star + m.theta0) / (m.theta1 * m.g * r.e);
            best = Some(best.map_or(u, |b| b.max(u)));
        }
    }
    match best {
        Some(u) => Ok(u),
        None if any_eligible => Err(Error::EmptyRange("every eligible record has e = 0")),
        None => Err(Error::EmptyRange("no record is below the eligibility cap")),
    }
}
