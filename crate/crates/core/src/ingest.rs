//! Auction-log parsing, highest-competing-bid derivation and downsampling.
//!
//! Logs are line-delimited: either JSON objects, one per line, or CSV with a
//! header row naming the same fields. Malformed rows are skipped and counted;
//! a log where more than half the rows are malformed is rejected outright.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;
use crate::normalization::{BucketCounts, SLOTS};
use crate::seeds;

/// Ratio of raw bid requests to logged auctions.
pub const DEFAULT_LOG_SAMPLING_FACTOR: f64 = 4.0;

/// One available impression for a line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuctionRecord {
    /// Predicted event (conversion) rate.
    pub e: f64,
    /// The line's internal auction score.
    pub b_s: f64,
    /// Highest competing bid.
    pub b_star: f64,
    /// Advertiser cost if won.
    pub b_c: f64,
    /// 5-minute slot of the day, 0..=287.
    pub bucket: u16,
}

impl AuctionRecord {
    pub fn is_valid(&self) -> bool {
        [self.e, self.b_s, self.b_star, self.b_c]
            .iter()
            .all(|v| v.is_finite())
            && (0.0..=1.0).contains(&self.e)
            && self.b_s >= 0.0
            && self.b_star >= 0.0
            && self.b_c >= 0.0
            && usize::from(self.bucket) < SLOTS
    }
}

/// An auction row before the highest competing bid has been derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawAuctionRecord {
    pub won: bool,
    pub second_internal: f64,
    pub inventory_cost: f64,
    pub highest_internal: f64,
    pub e: f64,
    pub b_s: f64,
    pub b_c: f64,
    pub bucket: u16,
}

impl RawAuctionRecord {
    fn is_valid(&self) -> bool {
        [self.second_internal, self.inventory_cost, self.highest_internal]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
            && self.highest_internal >= self.second_internal
    }

    pub fn derive(&self) -> AuctionRecord {
        AuctionRecord {
            e: self.e,
            b_s: self.b_s,
            b_star: derive_highest_competing(self),
            b_c: self.b_c,
            bucket: self.bucket,
        }
    }
}

/// Winners paid the larger of the runner-up internal bid and the inventory
/// cost; losers were beaten by the top internal bid.
pub fn derive_highest_competing(r: &RawAuctionRecord) -> f64 {
    if r.won {
        r.second_internal.max(r.inventory_cost)
    } else {
        r.highest_internal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    Derived,
    Raw,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedLog {
    pub records: Vec<AuctionRecord>,
    pub skipped: usize,
}

impl ParsedLog {
    pub fn total_rows(&self) -> usize {
        self.records.len() + self.skipped
    }
}

/// Parses a JSON-lines or headed CSV auction log.
///
/// The encoding is sniffed from the first non-blank character: `{` selects
/// JSON lines, anything else CSV.
pub fn parse_auction_log<R: Read>(mut stream: R, format: LogFormat) -> Result<ParsedLog> {
    let mut text = String::new();
    stream.read_to_string(&mut text)?;

    let rows: Vec<Option<AuctionRecord>> = match text.trim_start().chars().next() {
        None => Vec::new(),
        Some('{') => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| parse_json_row(l, format))
            .collect(),
        Some(_) => parse_csv_rows(&text, format)?,
    };

    let total = rows.len();
    let records: Vec<AuctionRecord> = rows.into_iter().flatten().collect();
    let skipped = total - records.len();
    if skipped * 2 > total {
        return Err(Error::Format { skipped, total });
    }
    Ok(ParsedLog { records, skipped })
}

/// Writes records as JSON lines, the format [`parse_auction_log`] reads.
pub fn write_auction_log<W: Write>(records: &[AuctionRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn parse_json_row(line: &str, format: LogFormat) -> Option<AuctionRecord> {
    let rec = match format {
        LogFormat::Derived => serde_json::from_str::<AuctionRecord>(line).ok()?,
        LogFormat::Raw => {
            let raw = serde_json::from_str::<RawAuctionRecord>(line).ok()?;
            raw.is_valid().then(|| raw.derive())?
        }
    };
    rec.is_valid().then_some(rec)
}

fn parse_csv_rows(text: &str, format: LogFormat) -> Result<Vec<Option<AuctionRecord>>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let mut out = Vec::new();
    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(_) => {
                out.push(None);
                continue;
            }
        };
        let rec = match format {
            LogFormat::Derived => row.deserialize::<AuctionRecord>(Some(&headers)).ok(),
            LogFormat::Raw => row
                .deserialize::<RawAuctionRecord>(Some(&headers))
                .ok()
                .filter(RawAuctionRecord::is_valid)
                .map(|r| r.derive()),
        };
        out.push(rec.filter(AuctionRecord::is_valid));
    }
    Ok(out)
}

/// Sample size for a Bernoulli win-rate estimate within ±`epsilon` with
/// confidence `gamma`, using the worst case p = 1/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub epsilon: f64,
    pub gamma: f64,
    pub required_n: usize,
}

impl SamplePlan {
    pub fn new(epsilon: f64, gamma: f64) -> Result<Self> {
        Ok(Self {
            epsilon,
            gamma,
            required_n: required_sample_size(epsilon, gamma)?,
        })
    }
}

/// `ceil((z / 2ε)²)` with `z = Φ⁻¹(1 − (1 − γ)/2)`, the two-sided normal
/// critical value at confidence `γ`.
pub fn required_sample_size(epsilon: f64, gamma: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(Error::Domain {
            name: "epsilon",
            value: epsilon,
            range: "(0, 0.5]",
        });
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain {
            name: "gamma",
            value: gamma,
            range: "(0, 1)",
        });
    }
    let z = normal::inv_cdf(1.0 - (1.0 - gamma) / 2.0);
    let n = (z / (2.0 * epsilon)).powi(2).ceil();
    Ok((n as usize).max(1))
}

/// Uniform sample of `n` records without replacement, in input order.
pub fn downsample(records: &[AuctionRecord], n: usize, seed: u64) -> Vec<AuctionRecord> {
    if n >= records.len() {
        return records.to_vec();
    }
    sample_indices(records.len(), n, seed)
        .into_iter()
        .map(|i| records[i])
        .collect()
}

/// Partial Fisher–Yates: the first `n` slots of a shuffled index vector,
/// returned sorted.
fn sample_indices(len: usize, n: usize, seed: u64) -> Vec<usize> {
    let mut rng = seeds::rng(seed);
    let mut idx: Vec<usize> = (0..len).collect();
    for i in 0..n {
        let j = rng.random_range(i..len);
        idx.swap(i, j);
    }
    idx.truncate(n);
    idx.sort_unstable();
    idx
}

/// Per-bucket record counts.
pub fn bucket_counts(records: &[AuctionRecord]) -> BucketCounts {
    let mut counts = vec![0u64; SLOTS];
    for r in records {
        counts[usize::from(r.bucket)] += 1;
    }
    BucketCounts::new(counts).expect("fixed length")
}
