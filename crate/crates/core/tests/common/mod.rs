#![allow(dead_code)]

use cpa_forecast::{seeds, AuctionRecord, BidModel, EventRateModel, ForecastInputs, Forecaster};
use rand::Rng;
use rand_distr::{Distribution, LogNormal};

/// A random but well-posed line: bid model, event-rate mixture, and a
/// record set drawn from them.
pub fn random_inputs(seed: u64) -> ForecastInputs {
    let mut rng = seeds::rng(seed);
    let theta1: f64 = rng.random_range(0.3..=1.0);
    let theta0 = rng.random_range(0.0..0.2);
    let g = rng.random_range(5.0..50.0);
    // keeps the eligibility cap above the median competing bid
    let b_max = rng.random_range(2.0..20.0) / theta1;
    let bid = BidModel::new(theta1, theta0, g, b_max, 1.0).unwrap();

    let k = rng.random_range(1..=3);
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    let means: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..0.2)).collect();
    let stds = means.iter().map(|m| m * rng.random_range(0.1..0.4)).collect();
    let erm = EventRateModel::new(weights, means, stds).unwrap();

    let n = rng.random_range(50..1500);
    let bstar = LogNormal::new(rng.random_range(-2.0..0.5), rng.random_range(0.2..1.0)).unwrap();
    let kappa = rng.random_range(0.5..=1.0);
    let records = (0..n)
        .map(|_| {
            let e = erm.draw(&mut rng);
            let b_star = bstar.sample(&mut rng);
            AuctionRecord {
                e,
                b_s: bid.bid_price(e, 1.0).max(0.0),
                b_star,
                b_c: kappa * b_star,
                bucket: rng.random_range(0..288),
            }
        })
        .collect();
    ForecastInputs {
        records,
        bid,
        erm,
        n_total: 4.0 * n as f64 * rng.random_range(0.3..=1.0),
        seed: seeds::sub_seed(seed, seeds::SAMPLE),
    }
}

pub fn random_line(seed: u64) -> Forecaster {
    Forecaster::new(random_inputs(seed)).unwrap()
}
