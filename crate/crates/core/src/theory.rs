//! Split-point behaviour of a decision stump on noiseless step data.
//!
//! For `g(x) = I(x > b)` and `n` design points uniform on `(b − w, b + w)`, the
//! least-squares stump puts its breakpoint at the midpoint `b̂` of the largest
//! point left of `b` and the smallest point right of it. The scaled error
//! `n (b̂ − b) / w` converges in distribution to a standard Laplace law
//! (location 0, scale 1, variance 2), which [`simulate_theorem1`] checks by
//! Monte Carlo.

use rand::Rng as _;
use rayon::prelude::*;

use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StumpFit {
    pub b_hat: f64,
    /// Largest design point with target 0.
    pub x_sup: f64,
    /// Smallest design point with target 1.
    pub x_inf: f64,
}

/// Midpoint breakpoint estimate for separable 0/1 step data. Input order does
/// not matter.
pub fn fit_stump(xs: &[f64], ys: &[f64]) -> Result<StumpFit> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidArgument("xs and ys differ in length".into()));
    }
    let mut x_sup = f64::NEG_INFINITY;
    let mut x_inf = f64::INFINITY;
    for (&x, &y) in xs.iter().zip(ys) {
        if y == 0.0 {
            x_sup = x_sup.max(x);
        } else if y == 1.0 {
            x_inf = x_inf.min(x);
        } else {
            return Err(Error::InvalidArgument(format!(
                "stump targets must be 0 or 1, got {y}"
            )));
        }
    }
    if x_sup == f64::NEG_INFINITY || x_inf == f64::INFINITY {
        return Err(Error::InvalidArgument(
            "stump data needs both classes".into(),
        ));
    }
    if x_sup >= x_inf {
        return Err(Error::InvalidArgument(
            "stump data is not separable by a single threshold".into(),
        ));
    }
    Ok(StumpFit {
        b_hat: 0.5 * (x_sup + x_inf),
        x_sup,
        x_inf,
    })
}

/// Standard Laplace CDF, `½ + ½ sign(t) (1 − e^{−|t|})`.
pub fn laplace_cdf(t: f64) -> f64 {
    0.5 + 0.5 * t.signum() * (1.0 - (-t.abs()).exp())
}

pub fn laplace_pdf(t: f64) -> f64 {
    0.5 * (-t.abs()).exp()
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / m).max((i + 1) as f64 / m - f)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub n: usize,
    pub w: f64,
    pub b: f64,
    pub reps: usize,
    /// `n (b̂ − b) / w` per repetition.
    pub scaled_errors: Vec<f64>,
    pub mean: f64,
    /// Sample variance (divide by `reps − 1`).
    pub variance: f64,
    pub ks_distance: f64,
    /// Draws discarded because every design point fell on one side of `b`.
    pub degenerate_draws: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Empirical density `count / (reps · width)`.
    pub density: f64,
    /// Standard Laplace density at the bin centre.
    pub laplace_density: f64,
}

impl SimulationReport {
    /// Standard deviation of `n (b̂ − b)` (unscaled by `w`).
    pub fn unscaled_sd(&self) -> f64 {
        self.w * self.variance.sqrt()
    }

    /// Equal-width histogram of the scaled errors over `[-range, range]`.
    pub fn histogram(&self, bins: usize, range: f64) -> Vec<HistogramBin> {
        let width = 2.0 * range / bins as f64;
        let mut counts = vec![0usize; bins];
        for &e in &self.scaled_errors {
            if e >= -range && e < range {
                let k = (((e + range) / width) as usize).min(bins - 1);
                counts[k] += 1;
            }
        }
        counts
            .into_iter()
            .enumerate()
            .map(|(k, count)| {
                let lower = -range + k as f64 * width;
                HistogramBin {
                    lower,
                    upper: lower + width,
                    count,
                    density: count as f64 / (self.reps as f64 * width),
                    laplace_density: laplace_pdf(lower + 0.5 * width),
                }
            })
            .collect()
    }
}

/// Simulates the stump breakpoint estimator `reps` times.
pub fn simulate_theorem1(
    n: usize,
    w: f64,
    b: f64,
    reps: usize,
    seed: u64,
) -> Result<SimulationReport> {
    if n < 100 || reps < 500 {
        return Err(Error::InvalidArgument(format!(
            "simulation needs n >= 100 and reps >= 500, got n={n} reps={reps}"
        )));
    }
    if !(w > 0.0 && w.is_finite()) || !b.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "need finite b and w > 0, got b={b} w={w}"
        )));
    }
    let runs: Vec<(f64, usize)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed::rng(seed::derive(seed, r as u64));
            let mut xs = vec![0.0; n];
            let mut ys = vec![0.0; n];
            let mut degenerate = 0;
            loop {
                for (x, y) in xs.iter_mut().zip(ys.iter_mut()) {
                    *x = rng.random_range(b - w..b + w);
                    *y = f64::from(u8::from(*x > b));
                }
                match fit_stump(&xs, &ys) {
                    Ok(fit) => return (n as f64 * (fit.b_hat - b) / w, degenerate),
                    Err(_) => degenerate += 1,
                }
            }
        })
        .collect();
    let scaled_errors: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let m = reps as f64;
    let mean = scaled_errors.iter().sum::<f64>() / m;
    let variance = scaled_errors
        .iter()
        .map(|e| (e - mean).powi(2))
        .sum::<f64>()
        / (m - 1.0);
    let ks = ks_distance(&scaled_errors, laplace_cdf);
    Ok(SimulationReport {
        n,
        w,
        b,
        reps,
        mean,
        variance,
        ks_distance: ks,
        degenerate_draws: runs.iter().map(|r| r.1).sum(),
        scaled_errors,
    })
}
