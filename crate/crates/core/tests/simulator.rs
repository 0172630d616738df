use cpa_forecast::forecast::control_grid;
use cpa_forecast::normalization::{PacingVector, TodModel};
use cpa_forecast::simulator::*;
use cpa_forecast::{AuctionRecord, BidModel, EventRateModel, ForecastInputs, Forecaster};

fn k1_plant(seed: u64) -> PlantSpec {
    PlantSpec {
        true_erm: EventRateModel::single(0.05, 0.01).unwrap(),
        ..PlantSpec::example(seed)
    }
}

#[test]
fn second_price_equal_costs_are_competing_bids() {
    let day = generate_day(&PlantSpec::example(1)).unwrap();
    assert!(day.records.iter().all(|r| r.b_c == r.b_star));
}

#[test]
fn discounted_costs_scale_competing_bids() {
    let spec = PlantSpec {
        cost_model: CostModel::Discounted { kappa: 0.7 },
        ..PlantSpec::example(1)
    };
    let day = generate_day(&spec).unwrap();
    assert!(day.records.iter().all(|r| r.b_c == 0.7 * r.b_star));
}

#[test]
fn identity_transform_scores_are_uncapped_bids() {
    let spec = PlantSpec {
        b_max: 1e12,
        u_day: 1.7,
        ..PlantSpec::example(2)
    };
    let day = generate_day(&spec).unwrap();
    for r in &day.records {
        assert_eq!(r.b_s, 1.7 * spec.g * r.e);
    }
}

#[test]
fn same_seed_same_day() {
    let spec = PlantSpec {
        pacing: PacingVector::constant(0.6).unwrap(),
        tod: TodModel { beta1: 0.4, phi1: 1.0, beta2: 0.1, phi2: 0.3 },
        ..PlantSpec::example(3)
    };
    let a = generate_day(&spec).unwrap();
    let b = generate_day(&spec).unwrap();
    assert_eq!(a, b);
    let c = generate_day(&spec.with_seed(4)).unwrap();
    assert_ne!(a.records, c.records);
}

#[test]
fn pacing_thins_and_sqrt_correction_leaves_sqrt_a() {
    let spec = PlantSpec {
        pacing: PacingVector::constant(0.25).unwrap(),
        n_records: 40_000,
        ..PlantSpec::example(5)
    };
    let day = generate_day(&spec).unwrap();
    assert_eq!(day.truth.unthinned_total, 40_000);
    assert_eq!(day.truth.unthinned_counts.total(), 40_000);
    assert_eq!(day.truth.emitted_total as usize, day.records.len());
    let kept = day.records.len() as f64 / 40_000.0;
    // binomial sd is about 0.0022
    assert!((kept - 0.25).abs() < 0.011, "kept fraction {kept}");
    // Bernoulli thinning at rate a against the N'/√a correction leaves a
    // factor of √a = 0.5 in the normalized total
    let n = day.line.total_available(&cpa_forecast::ingest::bucket_counts(&day.records)).unwrap();
    assert!((n / day.truth.n_total - 0.5).abs() < 0.025, "N {n} vs {}", day.truth.n_total);
}

#[test]
fn generated_event_rates_pass_ks() {
    let spec = PlantSpec {
        n_records: 100_000,
        ..PlantSpec::example(6)
    };
    let day = generate_day(&spec).unwrap();
    let mut es: Vec<f64> = day.population.iter().map(|r| r.e).collect();
    es.sort_by(f64::total_cmp);
    let n = es.len() as f64;
    let d = es
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let c = spec.true_erm.cdf(e);
            (c - i as f64 / n).abs().max((c - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max);
    assert!(d < 1.63 / n.sqrt(), "KS distance {d}");
}

fn rec(e: f64, b_star: f64, b_c: f64) -> AuctionRecord {
    AuctionRecord { e, b_s: 0.0, b_star, b_c, bucket: 0 }
}

#[test]
fn brute_force_hand_enumeration() {
    // θ = (1, 0), g = 10: bid = 10·u·e
    let bid = BidModel::new(1.0, 0.0, 10.0, 100.0, 1.0).unwrap();
    let records = [rec(0.1, 0.5, 0.4), rec(0.2, 1.0, 0.9), rec(0.05, 2.0, 1.5)];
    let grid = [0.0, 0.4, 0.6, 2.0, 5.0];
    let c = brute_force_curves(&records, &bid, 6.0, &grid);
    // bids at u: (u, 2u, 0.5u); wins need bid > b*
    // u=0.4: (0.4, 0.8, 0.2) vs (0.5, 1, 2) -> none
    // u=0.6: (0.6, 1.2, 0.3) -> first two
    // u=2:   (2, 4, 1) -> first two
    // u=5:   (5, 10, 2.5) -> all
    let wins = [0.0, 0.0, 2.0, 2.0, 3.0];
    let spend = [0.0, 0.0, 1.3, 1.3, 2.8];
    let conv = [0.0, 0.0, 0.3, 0.3, 0.35];
    for i in 0..5 {
        let p = c.points[i];
        assert_eq!(p.n_impressions, 2.0 * wins[i]);
        assert!((p.spend - 2.0 * spend[i]).abs() < 1e-12);
        assert!((p.n_conversions - 2.0 * conv[i]).abs() < 1e-12);
    }
    assert_eq!(c.points[0].spend, 0.0);
    assert_eq!(c.points[0].plant_gain, 0.0);
    assert_eq!(c.points[0].ecpa, None);
    // central difference at u=0.6 over [0.4, 2]
    assert!((c.points[2].plant_gain - 2.6 / 1.6).abs() < 1e-12);
}

#[test]
fn brute_force_columns_are_monotone_and_spend_is_bounded() {
    for seed in 0..5 {
        let spec = PlantSpec::example(10 + seed);
        let day = generate_day(&spec).unwrap();
        let bid = spec.true_bid().unwrap();
        let grid = truth_grid(&day, 100).unwrap();
        let n = spec.true_n_total();
        let c = brute_force_curves(&day.records, &bid, n, &grid);
        let bound = n / day.records.len() as f64 * day.records.iter().map(|r| r.b_star).sum::<f64>();
        assert!(c.points[0].n_impressions == 0.0);
        for w in c.points.windows(2) {
            assert!(w[1].n_impressions >= w[0].n_impressions);
            assert!(w[1].spend >= w[0].spend);
        }
        assert!(c.points.iter().all(|p| p.spend <= bound));
        // the analytic spend obeys the same bound
        let f = Forecaster::new(ForecastInputs {
            records: day.records.clone(),
            bid,
            erm: spec.true_erm.clone(),
            n_total: n,
            seed,
        })
        .unwrap();
        assert!(grid.iter().all(|&u| f.spend_at(u) <= bound * (1.0 + 1e-12)));
    }
}

#[test]
fn delivered_counts_match_brute_force() {
    let spec = PlantSpec::example(20);
    let day = generate_day(&spec).unwrap();
    let bid = spec.true_bid().unwrap();
    let u = 1.3;
    let delivered = delivered_counts(&day.records, &bid, u);
    let bf = brute_force_curves(&day.records, &bid, day.records.len() as f64, &[u]);
    assert_eq!(delivered.total() as f64, bf.points[0].n_impressions);
}

#[test]
fn numerical_method_tracks_analytic_curves() {
    let spec = PlantSpec::example(30);
    let day = generate_day(&spec).unwrap();
    let bid = spec.true_bid().unwrap();
    let f = Forecaster::new(ForecastInputs {
        records: day.records.clone(),
        bid,
        erm: spec.true_erm.clone(),
        n_total: spec.true_n_total(),
        seed: 0,
    })
    .unwrap();
    let grid = control_grid(f.u_max().unwrap(), 60).unwrap();
    let num = numerical_curves(&day.records, &bid, &spec.true_erm, spec.true_n_total(), &grid, 1_000_000, 9);
    for (p, &u) in num.points.iter().zip(&grid) {
        let a = f.impressions_at(u);
        if a > 50.0 {
            assert!((p.n_impressions / a - 1.0).abs() < 0.02, "u={u}: {} vs {a}", p.n_impressions);
            assert!((p.spend / f.spend_at(u) - 1.0).abs() < 0.02);
        }
    }
}

#[test]
fn roundtrip_single_component_identity_transform() {
    let rep = fit_and_forecast_roundtrip(&k1_plant(40), &RoundtripOptions::default()).unwrap();
    assert_eq!(rep.k_selected, 1);
    assert!(rep.rows.iter().any(|r| r.truth_impressions > 50.0));
    assert!(rep.max_impressions_rel_err < 0.05, "max error {}", rep.max_impressions_rel_err);
}

#[test]
fn roundtrip_recovers_affine_transform() {
    let spec = PlantSpec {
        true_theta: (0.8, 0.05),
        ..k1_plant(41)
    };
    let opts = RoundtripOptions { k_max: 3, ..RoundtripOptions::default() };
    let rep = fit_and_forecast_roundtrip(&spec, &opts).unwrap();
    assert!((rep.fitted_theta.0 - 0.8).abs() < 0.01, "{:?}", rep.fitted_theta);
    assert!((rep.fitted_theta.1 - 0.05).abs() < 0.01, "{:?}", rep.fitted_theta);
}

#[test]
fn roundtrip_is_deterministic() {
    let spec = PlantSpec { n_records: 3_000, ..k1_plant(42) };
    let opts = RoundtripOptions { k_max: 2, grid_points: 40, truth_draws: 100_000 };
    let a = fit_and_forecast_roundtrip(&spec, &opts).unwrap();
    let b = fit_and_forecast_roundtrip(&spec, &opts).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn plant_spec_json_defaults() {
    let json = r#"{
        "true_erm": {"weights": [1.0], "means": [0.05], "stds": [0.01]},
        "bstar_dist": {"kind": "log_normal", "location": -0.5, "scale": 0.6},
        "cost_model": {"kind": "discounted", "kappa": 0.9},
        "true_theta": [1.0, 0.0],
        "g": 20.0, "b_max": 5.0, "u_day": 1.0, "n_records": 100
    }"#;
    let spec: PlantSpec = serde_json::from_str(json).unwrap();
    assert_eq!(spec.log_sampling_factor, 4.0);
    assert_eq!(spec.pacing, PacingVector::full());
    assert_eq!(spec.cost_model, CostModel::Discounted { kappa: 0.9 });
    let back: PlantSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
    assert_eq!(back, spec);
}

#[test]
fn invalid_specs_are_rejected() {
    let bad = [
        PlantSpec { n_records: 0, ..PlantSpec::example(0) },
        PlantSpec { cost_model: CostModel::Discounted { kappa: 1.5 }, ..PlantSpec::example(0) },
        PlantSpec { true_theta: (1.2, 0.0), ..PlantSpec::example(0) },
        PlantSpec { bstar_dist: BstarDist::LogNormal { location: 0.0, scale: -1.0 }, ..PlantSpec::example(0) },
    ];
    for spec in bad {
        assert!(generate_day(&spec).is_err(), "{spec:?}");
    }
}
