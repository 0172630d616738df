use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("malformed log: {skipped} of {total} rows rejected")]
    Format { skipped: usize, total: usize },

    #[error("{name} = {value} is outside {range}")]
    Domain {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("empty control range: {0}")]
    EmptyRange(&'static str),

    #[error("model selection failed: no candidate order could be fitted")]
    ModelSelection,

    #[error("correlation undefined: zero variance in {0}")]
    UndefinedCorrelation(&'static str),

    #[error("invalid time-of-day model: 1 + h(t) = {value} at t = {t} h")]
    InvalidTod { t: f64, value: f64 },

    #[error("no active pacing buckets")]
    EmptyActivity,

    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },

    #[error("bias undefined: normalized actual delivery is zero")]
    UndefinedBias,

    #[error("control {u} outside the forecast grid [{lo}, {hi}]")]
    Extrapolation { u: f64, lo: f64, hi: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
