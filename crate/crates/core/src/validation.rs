//! Next-day forecast validation.
//!
//! Yesterday's curve is read at today's realized control and compared with
//! today's delivery after the same supply normalization. The bias `ρ` is the
//! ratio forecast/actual; the line population is summarized by quantiles of
//! `ρ` and a histogram of `ln ρ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{CurvePoint, ResponseCurves};
use crate::normalization::{self, BucketCounts, PacingVector, TodModel};

/// Central-90% interval of `ρ` reported for the production system.
pub const PRODUCTION_CENTRAL_90: (f64, f64) = (0.339, 4.459);
/// Central-50% interval of `ρ` reported for the production system.
pub const PRODUCTION_CENTRAL_50: (f64, f64) = (0.726, 2.08);
pub const LOG_RHO_BIN_WIDTH: f64 = 0.25;

/// Which curve column a bias is computed on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Impressions,
    Spend,
}

impl Metric {
    fn of(self, p: &CurvePoint) -> f64 {
        match self {
            Metric::Impressions => p.n_impressions,
            Metric::Spend => p.spend,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRecord {
    pub line_id: String,
    pub forecast: f64,
    pub actual_normalized: f64,
    pub rho: f64,
    pub log_rho: f64,
}

impl BiasRecord {
    pub fn new(line_id: impl Into<String>, forecast: f64, actual_normalized: f64) -> Result<Self> {
        if !(actual_normalized > 0.0) {
            return Err(Error::UndefinedBias);
        }
        let rho = forecast / actual_normalized;
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Domain {
                name: "rho",
                value: rho,
                range: "(0, ∞)",
            });
        }
        Ok(Self {
            line_id: line_id.into(),
            forecast,
            actual_normalized,
            rho,
            log_rho: rho.ln(),
        })
    }
}

/// Reads `metric` off the curve at `u`, linearly in `(ln u, value)` between
/// positive grid points and linearly in `u` below the first positive one.
/// Exact grid hits return the stored value unchanged.
pub fn interpolate(curves: &ResponseCurves, metric: Metric, u: f64) -> Result<f64> {
    let pts = &curves.points;
    let (lo, hi) = match (pts.first(), pts.last()) {
        (Some(a), Some(b)) => (a.u, b.u),
        _ => return Err(Error::Empty("response curves")),
    };
    if !(u >= lo && u <= hi) {
        return Err(Error::Extrapolation { u, lo, hi });
    }
    let idx = pts.partition_point(|p| p.u < u);
    let right = &pts[idx];
    if right.u == u {
        return Ok(metric.of(right));
    }
    let left = &pts[idx - 1];
    let (y0, y1) = (metric.of(left), metric.of(right));
    let t = if left.u > 0.0 {
        (u.ln() - left.u.ln()) / (right.u.ln() - left.u.ln())
    } else {
        (u - left.u) / (right.u - left.u)
    };
    Ok(y0 + t * (y1 - y0))
}

/// Delivery of one line on the validation day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActualDelivery {
    pub counts: BucketCounts,
    pub pacing: PacingVector,
    pub tod: TodModel,
    pub log_sampling_factor: f64,
    pub external_win_rate: f64,
}

impl ActualDelivery {
    pub fn normalized(&self) -> Result<f64> {
        normalization::total_available(
            &self.counts,
            &self.pacing,
            &self.tod,
            self.log_sampling_factor,
            self.external_win_rate,
        )
    }
}

pub fn forecast_bias(
    line_id: &str,
    curves: &ResponseCurves,
    u_realized: f64,
    actual: &ActualDelivery,
) -> Result<BiasRecord> {
    forecast_bias_for(line_id, curves, Metric::Impressions, u_realized, actual)
}

pub fn forecast_bias_for(
    line_id: &str,
    curves: &ResponseCurves,
    metric: Metric,
    u_realized: f64,
    actual: &ActualDelivery,
) -> Result<BiasRecord> {
    let forecast = interpolate(curves, metric, u_realized)?;
    let actual = actual.normalized()?;
    BiasRecord::new(line_id, forecast, actual)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_left: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasSummary {
    pub n_lines: usize,
    pub rho: Quantiles,
    pub central_90: (f64, f64),
    pub central_50: (f64, f64),
    pub log_rho_bin_width: f64,
    pub log_rho_histogram: Vec<HistogramBin>,
}

impl BiasSummary {
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("bin_left,count\n");
        for b in &self.log_rho_histogram {
            out.push_str(&format!("{},{}\n", b.bin_left, b.count));
        }
        out
    }
}

/// Type-7 quantile (linear between order statistics) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn bias_summary(records: &[BiasRecord]) -> Result<BiasSummary> {
    if records.is_empty() {
        return Err(Error::Empty("bias records"));
    }
    let mut rho: Vec<f64> = records.iter().map(|r| r.rho).collect();
    rho.sort_by(f64::total_cmp);
    let q = |p| quantile_sorted(&rho, p);
    let quantiles = Quantiles {
        min: rho[0],
        q05: q(0.05),
        q25: q(0.25),
        q50: q(0.5),
        q75: q(0.75),
        q95: q(0.95),
        max: rho[rho.len() - 1],
    };

    let mut bins: std::collections::BTreeMap<i64, usize> = Default::default();
    for r in records {
        *bins.entry((r.log_rho / LOG_RHO_BIN_WIDTH).floor() as i64).or_default() += 1;
    }
    let log_rho_histogram = bins
        .into_iter()
        .map(|(b, count)| HistogramBin {
            bin_left: b as f64 * LOG_RHO_BIN_WIDTH,
            count,
        })
        .collect();

    Ok(BiasSummary {
        n_lines: records.len(),
        central_90: (quantiles.q05, quantiles.q95),
        central_50: (quantiles.q25, quantiles.q75),
        rho: quantiles,
        log_rho_bin_width: LOG_RHO_BIN_WIDTH,
        log_rho_histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalization::SLOTS;
    use proptest::prelude::*;

    fn curves() -> ResponseCurves {
        let grid = [0.0, 0.1, 1.0, 10.0];
        ResponseCurves {
            points: grid
                .iter()
                .map(|&u| CurvePoint {
                    u,
                    n_impressions: 100.0 * u,
                    spend: 7.0 * u,
                    plant_gain: 7.0,
                    n_conversions: u,
                    ecpa: None,
                })
                .collect(),
        }
    }

    fn delivery(count: u64) -> ActualDelivery {
        ActualDelivery {
            counts: BucketCounts::new(vec![count; SLOTS]).unwrap(),
            pacing: PacingVector::full(),
            tod: TodModel::flat(),
            log_sampling_factor: 1.0,
            external_win_rate: 1.0,
        }
    }

    #[test]
    fn interpolation_exact_on_grid() {
        let c = curves();
        assert_eq!(interpolate(&c, Metric::Impressions, 1.0).unwrap(), 100.0);
        assert_eq!(interpolate(&c, Metric::Spend, 10.0).unwrap(), 70.0);
        assert_eq!(interpolate(&c, Metric::Impressions, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn interpolation_is_linear_in_log_u() {
        let c = curves();
        let mid = interpolate(&c, Metric::Impressions, 10f64.powf(0.5)).unwrap();
        assert!((mid - 550.0).abs() < 1e-9);
        let low = interpolate(&c, Metric::Impressions, 0.05).unwrap();
        assert!((low - 5.0).abs() < 1e-12);
    }

    #[test]
    fn refuses_extrapolation() {
        assert!(matches!(
            interpolate(&curves(), Metric::Impressions, 11.0),
            Err(Error::Extrapolation { .. })
        ));
    }

    #[test]
    fn bias_examples() {
        // forecast 100 at u = 1; actual 100/288 per bucket is not integral, so
        // compare against a curve scaled to the delivery instead.
        let actual = delivery(1);
        let mut c = curves();
        c.points.iter_mut().for_each(|p| p.n_impressions *= 2.88);
        let r = forecast_bias("a", &c, 1.0, &actual).unwrap();
        assert!((r.rho - 1.0).abs() < 1e-12);
        assert!(r.log_rho.abs() < 1e-12);

        c.points.iter_mut().for_each(|p| p.n_impressions *= 2.0);
        let r = forecast_bias("a", &c, 1.0, &actual).unwrap();
        assert!((r.log_rho - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn zero_actual_is_undefined() {
        assert!(matches!(
            forecast_bias("a", &curves(), 1.0, &delivery(0)),
            Err(Error::UndefinedBias)
        ));
    }

    #[test]
    fn spend_metric_extension() {
        let r = forecast_bias_for("a", &curves(), Metric::Spend, 10.0, &delivery(1)).unwrap();
        assert!((r.forecast - 70.0).abs() < 1e-12);
    }

    fn rec(rho: f64) -> BiasRecord {
        BiasRecord::new("x", rho, 1.0).unwrap()
    }

    #[test]
    fn summary_examples() {
        let s = bias_summary(&[rec(1.0), rec(1.0), rec(1.0)]).unwrap();
        assert_eq!(
            [s.rho.q05, s.rho.q25, s.rho.q50, s.rho.q75, s.rho.q95],
            [1.0; 5]
        );

        let s = bias_summary(&[rec(0.5), rec(1.0), rec(2.0)]).unwrap();
        assert_eq!(s.rho.q50, 1.0);
        assert!(s.central_50.0 >= 0.5 && s.central_50.1 <= 2.0);
        assert_eq!(s.central_50, (0.75, 1.5));
        assert!(bias_summary(&[]).is_err());
    }

    #[test]
    fn histogram_bins() {
        let s = bias_summary(&[rec(1.0), rec(1.1), rec(0.5), rec(3.0)]).unwrap();
        let bins: Vec<(f64, usize)> = s.log_rho_histogram.iter().map(|b| (b.bin_left, b.count)).collect();
        assert_eq!(bins, vec![(-0.75, 1), (0.0, 2), (1.0, 1)]);
        assert!(s.histogram_csv().starts_with("bin_left,count\n-0.75,1\n"));
    }

    proptest! {
        #[test]
        fn quantiles_are_ordered(rhos in proptest::collection::vec(0.01f64..100.0, 1..60)) {
            let rs: Vec<_> = rhos.iter().map(|&r| rec(r)).collect();
            let q = bias_summary(&rs).unwrap().rho;
            prop_assert!(q.min <= q.q05 && q.q05 <= q.q25 && q.q25 <= q.q50);
            prop_assert!(q.q50 <= q.q75 && q.q75 <= q.q95 && q.q95 <= q.max);
        }

        #[test]
        fn rho_scale_invariant(f in 0.1f64..1e4, a in 0.1f64..1e4, k in 1e-3f64..1e3) {
            let r1 = BiasRecord::new("x", f, a).unwrap();
            let r2 = BiasRecord::new("x", f * k, a * k).unwrap();
            prop_assert!((r1.rho - r2.rho).abs() <= 1e-12 * r1.rho);
        }
    }
}
