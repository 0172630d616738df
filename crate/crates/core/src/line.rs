//! Per-line configuration as read from the line-config JSON.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ingest::DEFAULT_LOG_SAMPLING_FACTOR;
use crate::normalization::{self, BucketCounts, PacingVector, TodModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineConfig {
    #[serde(default)]
    pub line_id: String,
    /// Goal amount per conversion.
    pub g: f64,
    pub b_max: f64,
    /// Average control signal over the logged day.
    pub u_train: f64,
    #[serde(default)]
    pub pacing: PacingVector,
    #[serde(default)]
    pub tod: TodModel,
    #[serde(default = "default_win_rate")]
    pub external_win_rate: f64,
    #[serde(default = "default_factor")]
    pub log_sampling_factor: f64,
}

fn default_win_rate() -> f64 {
    1.0
}

fn default_factor() -> f64 {
    DEFAULT_LOG_SAMPLING_FACTOR
}

impl LineConfig {
    /// Full-day available impressions for the given observed counts.
    pub fn total_available(&self, counts: &BucketCounts) -> Result<f64> {
        normalization::total_available(
            counts,
            &self.pacing,
            &self.tod,
            self.log_sampling_factor,
            self.external_win_rate,
        )
    }
}
