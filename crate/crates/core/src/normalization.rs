//! Full-day supply extrapolation.
//!
//! Observed per-bucket counts are throttled by pacing and may cover only part
//! of the day. Counts in active buckets are corrected by `1/√a`, then scaled
//! up by the share of daily traffic the active buckets represent under the
//! time-of-day model, and finally by the log sampling factor.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 5-minute slots per day.
pub const SLOTS: usize = 288;

/// Per-slot probability that the line participates in an available auction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PacingVector(Vec<f64>);

impl PacingVector {
    pub fn new(a: Vec<f64>) -> Result<Self> {
        if a.len() != SLOTS {
            return Err(Error::Length {
                expected: SLOTS,
                got: a.len(),
            });
        }
        if let Some(&bad) = a.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain {
                name: "pacing",
                value: bad,
                range: "[0, 1]",
            });
        }
        Ok(Self(a))
    }

    pub fn full() -> Self {
        Self(vec![1.0; SLOTS])
    }

    pub fn constant(a: f64) -> Result<Self> {
        Self::new(vec![a; SLOTS])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Default for PacingVector {
    fn default() -> Self {
        Self::full()
    }
}

impl TryFrom<Vec<f64>> for PacingVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PacingVector> for Vec<f64> {
    fn from(p: PacingVector) -> Self {
        p.0
    }
}

/// Observed available impressions per slot, at the log sampling rate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct BucketCounts(Vec<u64>);

impl BucketCounts {
    pub fn new(n: Vec<u64>) -> Result<Self> {
        if n.len() != SLOTS {
            return Err(Error::Length {
                expected: SLOTS,
                got: n.len(),
            });
        }
        Ok(Self(n))
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }
}

impl TryFrom<Vec<u64>> for BucketCounts {
    type Error = Error;

    fn try_from(v: Vec<u64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<BucketCounts> for Vec<u64> {
    fn from(c: BucketCounts) -> Self {
        c.0
    }
}

/// Two-harmonic daily traffic pattern `h(t)`, t in hours.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TodModel {
    pub beta1: f64,
    pub phi1: f64,
    pub beta2: f64,
    pub phi2: f64,
}

impl TodModel {
    pub fn flat() -> Self {
        Self::default()
    }

    pub fn height(&self, t: f64) -> f64 {
        self.beta1 * (2.0 * PI * t / 24.0 + self.phi1).sin()
            + self.beta2 * (4.0 * PI * t / 24.0 + self.phi2).sin()
    }

    /// Checks `1 + h(t) > 0` on a one-minute grid over the day.
    pub fn validate(&self) -> Result<()> {
        for m in 0..1440 {
            let t = f64::from(m) / 60.0;
            let v = 1.0 + self.height(t);
            if !(v > 0.0) {
                return Err(Error::InvalidTod { t, value: v });
            }
        }
        Ok(())
    }

    /// Unnormalized slot weights `1 + h(t_j)` at slot midpoints.
    fn bucket_weights(&self) -> Result<Vec<f64>> {
        (0..SLOTS)
            .map(|j| {
                let t = slot_midpoint(j);
                let w = 1.0 + self.height(t);
                if w > 0.0 {
                    Ok(w)
                } else {
                    Err(Error::InvalidTod { t, value: w })
                }
            })
            .collect()
    }

    /// Traffic share of every slot, renormalized to sum to one.
    pub fn bucket_shares(&self) -> Result<Vec<f64>> {
        let mut shares = self.bucket_weights()?;
        let total: f64 = shares.iter().sum();
        shares.iter_mut().for_each(|s| *s /= total);
        Ok(shares)
    }

    pub fn bucket_share(&self, j: usize) -> Result<f64> {
        if j >= SLOTS {
            return Err(Error::Domain {
                name: "bucket",
                value: j as f64,
                range: "[0, 287]",
            });
        }
        Ok(self.bucket_shares()?[j])
    }
}

/// Midpoint of slot `j` in hours.
pub fn slot_midpoint(j: usize) -> f64 {
    (j as f64 + 0.5) / 12.0
}

pub fn tod_height(m: &TodModel, t: f64) -> f64 {
    m.height(t)
}

/// Pacing-corrected counts. `None` marks an inactive slot (a = 0).
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedCounts {
    pub counts: Vec<Option<f64>>,
    /// Inactive slots that nevertheless reported impressions; those counts are
    /// dropped.
    pub inconsistent: Vec<usize>,
}

impl AdjustedCounts {
    pub fn active(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter_map(|(j, c)| c.map(|c| (j, c)))
    }
}

pub fn pacing_adjust(counts: &BucketCounts, pacing: &PacingVector) -> AdjustedCounts {
    let mut inconsistent = Vec::new();
    let counts = counts
        .as_slice()
        .iter()
        .zip(pacing.as_slice())
        .enumerate()
        .map(|(j, (&n, &a))| {
            if a > 0.0 {
                Some(n as f64 / a.sqrt())
            } else {
                if n > 0 {
                    inconsistent.push(j);
                }
                None
            }
        })
        .collect();
    AdjustedCounts {
        counts,
        inconsistent,
    }
}

/// Full-day available impressions `N`.
pub fn total_available(
    counts: &BucketCounts,
    pacing: &PacingVector,
    tod: &TodModel,
    log_sampling_factor: f64,
    external_win_rate: f64,
) -> Result<f64> {
    if !(log_sampling_factor > 0.0 && log_sampling_factor.is_finite()) {
        return Err(Error::Domain {
            name: "log_sampling_factor",
            value: log_sampling_factor,
            range: "(0, ∞)",
        });
    }
    if !(external_win_rate > 0.0 && external_win_rate <= 1.0) {
        return Err(Error::Domain {
            name: "external_win_rate",
            value: external_win_rate,
            range: "(0, 1]",
        });
    }
    // Active share is computed as a ratio of raw weights so the flat-TOD
    // case reduces to integer arithmetic.
    let weights = tod.bucket_weights()?;
    let total_weight: f64 = weights.iter().sum();
    let adjusted = pacing_adjust(counts, pacing);
    let (sum_n, active_weight) = adjusted
        .active()
        .fold((0.0, 0.0), |(n, w), (j, c)| (n + c, w + weights[j]));
    if active_weight == 0.0 {
        return Err(Error::EmptyActivity);
    }
    Ok(log_sampling_factor * sum_n * total_weight / active_weight * external_win_rate)
}
