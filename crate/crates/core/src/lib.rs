//! Mid-flight forecasting of control-response curves for CPA ad lines.
//!
//! From one day of per-line auction logs the pipeline
//!
//! 1. reconstructs the production bid transform ([`bid_model`]),
//! 2. models the event-rate distribution as a Gaussian mixture ([`event_rate`]),
//! 3. extrapolates the observed, pacing-throttled supply to a full day
//!    ([`normalization`]),
//! 4. evaluates impressions, spend, plant gain, conversions and eCPA as
//!    functions of the control signal ([`forecast`]),
//!
//! and scores yesterday's forecast against today's delivery ([`validation`]).
//! [`simulator`] generates synthetic plants with known ground truth.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bid_model;
pub mod error;
pub mod event_rate;
pub mod forecast;
pub mod ingest;
pub mod line;
pub mod normal;
pub mod normalization;
pub mod pipeline;
pub mod seeds;
pub mod simulator;
pub mod validation;

pub use bid_model::BidModel;
pub use error::{Error, Result};
pub use event_rate::{EventRateModel, FitReport};
pub use forecast::{CurvePoint, ForecastInputs, Forecaster, ResponseCurves};
pub use ingest::{AuctionRecord, RawAuctionRecord};
pub use line::LineConfig;
pub use normalization::{BucketCounts, PacingVector, TodModel};
