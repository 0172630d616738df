//! Event-rate distribution as a one-dimensional Gaussian mixture.
//!
//! Fitted by EM from k-means++ seeds, with the component count chosen by BIC.
//! The mixture is fitted untruncated; draws are clamped to `[0, 1]`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;
use crate::seeds;

/// Lower bound on every fitted component standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-6;
pub const DEFAULT_K_MAX: usize = 10;
pub const DEFAULT_RESTARTS: usize = 5;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 500;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRateModel {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl EventRateModel {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, stds: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::Empty("mixture components"));
        }
        if means.len() != k || stds.len() != k {
            return Err(Error::Length {
                expected: k,
                got: means.len().min(stds.len()),
            });
        }
        if let Some(&w) = weights.iter().find(|w| !(**w >= 0.0)) {
            return Err(Error::Domain {
                name: "weight",
                value: w,
                range: "[0, 1]",
            });
        }
        if let Some(&s) = stds.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::Domain {
                name: "std",
                value: s,
                range: "(0, ∞)",
            });
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain {
                name: "sum of weights",
                value: total,
                range: "{1}",
            });
        }
        let weights = weights.iter().map(|w| w / total).collect();
        Ok(Self {
            weights,
            means,
            stds,
        })
    }

    pub fn single(mean: f64, std: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![std])
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    fn components(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((&w, &m), &s)| (w, m, s))
    }

    pub fn pdf(&self, e: f64) -> f64 {
        self.components()
            .map(|(w, m, s)| w * normal::pdf((e - m) / s) / s)
            .sum()
    }

    pub fn cdf(&self, e: f64) -> f64 {
        self.components()
            .map(|(w, m, s)| w * normal::cdf((e - m) / s))
            .sum()
    }

    /// `1 − cdf(e)`, summed from component upper tails.
    pub fn sf(&self, e: f64) -> f64 {
        self.components()
            .map(|(w, m, s)| w * normal::sf((e - m) / s))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.components().map(|(w, m, _)| w * m).sum()
    }

    /// One draw clamped to `[0, 1]`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut u: f64 = rng.random::<f64>();
        let mut k = self.k() - 1;
        for (j, w) in self.weights.iter().enumerate() {
            if u < *w {
                k = j;
                break;
            }
            u -= w;
        }
        let z: f64 = rng.sample(StandardNormal);
        (self.means[k] + self.stds[k] * z).clamp(0.0, 1.0)
    }

    /// `n` draws clamped to `[0, 1]`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seeds::rng(seed);
        (0..n).map(|_| self.draw(&mut rng)).collect()
    }

    pub fn log_likelihood(&self, data: &[f64]) -> f64 {
        let lw: Vec<f64> = self.weights.iter().map(|w| w.ln()).collect();
        let ls: Vec<f64> = self.stds.iter().map(|s| s.ln()).collect();
        let mut buf = vec![0.0; self.k()];
        data.iter()
            .map(|&x| {
                for k in 0..self.k() {
                    let z = (x - self.means[k]) / self.stds[k];
                    buf[k] = lw[k] - ls[k] - LN_SQRT_2PI - 0.5 * z * z;
                }
                log_sum_exp(&buf)
            })
            .sum()
    }
}

pub fn gmm_pdf(m: &EventRateModel, e: f64) -> f64 {
    m.pdf(e)
}

pub fn gmm_cdf(m: &EventRateModel, e: f64) -> f64 {
    m.cdf(e)
}

pub fn gmm_sample(m: &EventRateModel, n: usize, seed: u64) -> Vec<f64> {
    m.sample(n, seed)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Result of one EM run.
#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub model: EventRateModel,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood after each E-step, in order.
    pub trace: Vec<f64>,
}

/// One EM run with `k` components from a k-means++ start.
///
/// Stops when the relative log-likelihood improvement drops below `tol` or
/// after `max_iter` iterations. Constant data yields a single component at
/// the floor width regardless of `k`.
pub fn fit_gmm_em(data: &[f64], k: usize, seed: u64, tol: f64, max_iter: usize) -> Result<EmFit> {
    if k == 0 {
        return Err(Error::Domain {
            name: "K",
            value: 0.0,
            range: "[1, ∞)",
        });
    }
    if data.len() < k {
        return Err(Error::InsufficientData {
            needed: k,
            got: data.len(),
        });
    }
    if let Some(&bad) = data.iter().find(|x| !x.is_finite()) {
        return Err(Error::Domain {
            name: "event rate",
            value: bad,
            range: "finite",
        });
    }

    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if lo == hi {
        let model = EventRateModel::single(lo, SIGMA_FLOOR)?;
        let loglik = model.log_likelihood(data);
        return Ok(EmFit {
            model,
            loglik,
            iterations: 0,
            converged: true,
            trace: vec![loglik],
        });
    }

    let mut model = kmeans_pp_start(data, k, seed);
    let mut trace = Vec::new();
    let mut stats = Sufficient::new(k);
    for iter in 1..=max_iter {
        let ll = e_step(data, &model, &mut stats);
        if let Some(&prev) = trace.last() {
            debug_assert!(
                ll >= prev - 1e-9 * f64::abs(prev).max(1.0),
                "EM log-likelihood decreased: {prev} -> {ll}"
            );
            trace.push(ll);
            if (ll - prev).abs() <= tol * f64::abs(prev).max(f64::MIN_POSITIVE) {
                return Ok(EmFit {
                    model,
                    loglik: ll,
                    iterations: iter,
                    converged: true,
                    trace,
                });
            }
        } else {
            trace.push(ll);
        }
        m_step(&stats, data.len(), &mut model);
    }
    let loglik = e_step(data, &model, &mut stats);
    trace.push(loglik);
    Ok(EmFit {
        model,
        loglik,
        iterations: max_iter,
        converged: false,
        trace,
    })
}

/// Responsibility-weighted sums, accumulated around the previous means.
struct Sufficient {
    n: Vec<f64>,
    s: Vec<f64>,
    q: Vec<f64>,
    centers: Vec<f64>,
}

impl Sufficient {
    fn new(k: usize) -> Self {
        Self {
            n: vec![0.0; k],
            s: vec![0.0; k],
            q: vec![0.0; k],
            centers: vec![0.0; k],
        }
    }
}

const CHUNK: usize = 256;

fn e_step(data: &[f64], model: &EventRateModel, st: &mut Sufficient) -> f64 {
    let k = model.k();
    let bias: Vec<f64> = (0..k)
        .map(|j| model.weights[j].ln() - model.stds[j].ln() - LN_SQRT_2PI)
        .collect();
    let curv: Vec<f64> = model.stds.iter().map(|s| -0.5 / (s * s)).collect();
    st.n.iter_mut().for_each(|v| *v = 0.0);
    st.s.iter_mut().for_each(|v| *v = 0.0);
    st.q.iter_mut().for_each(|v| *v = 0.0);
    st.centers.copy_from_slice(&model.means);

    // component-major scratch: p[j * CHUNK + i]
    let mut p = vec![0.0; k * CHUNK];
    let mut max = [0.0; CHUNK];
    let mut total = [0.0; CHUNK];
    let mut ll = 0.0;
    for xs in data.chunks(CHUNK) {
        let m = xs.len();
        let max = &mut max[..m];
        let total = &mut total[..m];
        max.fill(f64::NEG_INFINITY);
        total.fill(0.0);
        for j in 0..k {
            let (mu, b, c) = (model.means[j], bias[j], curv[j]);
            let row = &mut p[j * CHUNK..j * CHUNK + m];
            for ((v, &x), mx) in row.iter_mut().zip(xs).zip(max.iter_mut()) {
                let d = x - mu;
                *v = b + c * d * d;
                *mx = mx.max(*v);
            }
        }
        for j in 0..k {
            let row = &mut p[j * CHUNK..j * CHUNK + m];
            for ((v, mx), t) in row.iter_mut().zip(max.iter()).zip(total.iter_mut()) {
                *v = (*v - mx).exp();
                *t += *v;
            }
        }
        for (mx, t) in max.iter().zip(total.iter_mut()) {
            ll += mx + t.ln();
            *t = 1.0 / *t;
        }
        for j in 0..k {
            let c = st.centers[j];
            let row = &p[j * CHUNK..j * CHUNK + m];
            let (mut n, mut s, mut q) = (0.0, 0.0, 0.0);
            for ((&v, &inv), &x) in row.iter().zip(total.iter()).zip(xs) {
                let r = v * inv;
                let d = x - c;
                n += r;
                s += r * d;
                q += r * d * d;
            }
            st.n[j] += n;
            st.s[j] += s;
            st.q[j] += q;
        }
    }
    ll
}

fn m_step(st: &Sufficient, n: usize, model: &mut EventRateModel) {
    let k = model.k();
    for j in 0..k {
        let nj = st.n[j];
        model.weights[j] = nj / n as f64;
        if nj > 0.0 {
            let shift = st.s[j] / nj;
            model.means[j] = st.centers[j] + shift;
            let var = (st.q[j] / nj - shift * shift).max(0.0);
            model.stds[j] = var.sqrt().max(SIGMA_FLOOR);
        }
    }
    let total: f64 = model.weights.iter().sum();
    model.weights.iter_mut().for_each(|w| *w /= total);
}

/// k-means++ seeding followed by one hard-assignment M-step.
fn kmeans_pp_start(data: &[f64], k: usize, seed: u64) -> EventRateModel {
    let mut rng = seeds::rng(seed);
    let n = data.len();
    let mut centers = vec![data[rng.random_range(0..n)]];
    let mut d2: Vec<f64> = data.iter().map(|x| (x - centers[0]).powi(2)).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = data[pick];
        centers.push(c);
        for (d, x) in d2.iter_mut().zip(data) {
            *d = d.min((x - c).powi(2));
        }
    }

    let global_mean = data.iter().sum::<f64>() / n as f64;
    let global_std = (data.iter().map(|x| (x - global_mean).powi(2)).sum::<f64>() / n as f64)
        .sqrt()
        .max(SIGMA_FLOOR);

    let mut count = vec![0.0; k];
    let mut sum = vec![0.0; k];
    let mut sq = vec![0.0; k];
    for &x in data {
        let j = (0..k)
            .min_by(|&a, &b| (x - centers[a]).abs().total_cmp(&(x - centers[b]).abs()))
            .expect("k >= 1");
        let d = x - centers[j];
        count[j] += 1.0;
        sum[j] += d;
        sq[j] += d * d;
    }
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut stds = Vec::with_capacity(k);
    for j in 0..k {
        if count[j] > 0.0 {
            let shift = sum[j] / count[j];
            weights.push(count[j]);
            means.push(centers[j] + shift);
            stds.push((sq[j] / count[j] - shift * shift).max(0.0).sqrt().max(SIGMA_FLOOR));
        } else {
            // duplicate seed; give it one pseudo-observation
            weights.push(1.0);
            means.push(centers[j]);
            stds.push(global_std);
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    EventRateModel {
        weights,
        means,
        stds,
    }
}

/// Free parameters of a K-component 1-D mixture.
pub fn parameter_count(k: usize) -> usize {
    3 * k - 1
}

pub fn bic(loglik: f64, k: usize, n: usize) -> f64 {
    -2.0 * loglik + parameter_count(k) as f64 * (n as f64).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub k_selected: usize,
    pub bic_by_k: BTreeMap<usize, f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectConfig {
    pub k_max: usize,
    pub n_restarts: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            k_max: DEFAULT_K_MAX,
            n_restarts: DEFAULT_RESTARTS,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

pub fn select_k_bic(data: &[f64], k_max: usize, seed: u64) -> Result<(EventRateModel, FitReport)> {
    select_k_bic_with(
        data,
        &SelectConfig {
            k_max,
            ..SelectConfig::default()
        },
        seed,
    )
}

/// Fits K = 1..=k_max, keeps the best of `n_restarts` runs per K, and returns
/// the BIC minimizer.
pub fn select_k_bic_with(
    data: &[f64],
    cfg: &SelectConfig,
    seed: u64,
) -> Result<(EventRateModel, FitReport)> {
    if cfg.k_max == 0 {
        return Err(Error::ModelSelection);
    }
    if data.len() < cfg.k_max {
        return Err(Error::InsufficientData {
            needed: cfg.k_max,
            got: data.len(),
        });
    }
    let restarts = cfg.n_restarts.max(1);
    let jobs: Vec<(usize, usize)> = (1..=cfg.k_max)
        .flat_map(|k| (0..restarts).map(move |r| (k, r)))
        .collect();
    let fits: Vec<(usize, Result<EmFit>)> = jobs
        .par_iter()
        .map(|&(k, r)| {
            let s = seeds::splitmix64(seed ^ ((k as u64) << 32) ^ r as u64);
            (k, fit_gmm_em(data, k, s, cfg.tol, cfg.max_iter))
        })
        .collect();

    let mut best_per_k: BTreeMap<usize, EmFit> = BTreeMap::new();
    let mut first_err = None;
    for (k, fit) in fits {
        match fit {
            Ok(f) => {
                let keep = best_per_k.get(&k).is_none_or(|b| f.loglik > b.loglik);
                if keep {
                    best_per_k.insert(k, f);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if best_per_k.is_empty() {
        return Err(first_err.unwrap_or(Error::ModelSelection));
    }

    let n = data.len();
    let bic_by_k: BTreeMap<usize, f64> = best_per_k
        .iter()
        .map(|(&k, f)| (k, bic(f.loglik, f.model.k(), n)))
        .collect();
    let (&k_selected, _) = bic_by_k
        .iter()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let best = best_per_k.remove(&k_selected).expect("present");
    let report = FitReport {
        k_selected,
        bic_by_k,
        loglik: best.loglik,
        iterations: best.iterations,
        converged: best.converged,
    };
    Ok((best.model, report))
}

/// Pearson's r.
pub fn pearson_diagnostic(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Length {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: xs.len(),
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::UndefinedCorrelation("xs"));
    }
    if syy == 0.0 {
        return Err(Error::UndefinedCorrelation("ys"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
