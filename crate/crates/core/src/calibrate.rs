//! Out-of-bag selection of the bandwidth and the affine calibration.
//!
//! For a fixed bandwidth the optimal `(β₁, β₀)` is the ordinary least-squares
//! fit of OOB targets on OOB smoothed predictions, so only `λ` needs a
//! numerical search: a log-spaced grid followed by golden-section refinement
//! around the best grid point. The global mode shares one `(λ, β₀, β₁)` across
//! all trees; the local mode optimises each tree's own OOB error separately.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::kernel::{KernelFamily, KernelSpec};
use crate::smooth::{LeafProbabilities, SmoothingParams, TreeSmoother};
use crate::tree::FittedTree;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationMode {
    Global,
    Local,
}

impl std::str::FromStr for CalibrationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(CalibrationMode::Global),
            "local" => Ok(CalibrationMode::Local),
            other => Err(Error::InvalidArgument(format!(
                "unknown calibration mode '{other}' (expected global or local)"
            ))),
        }
    }
}

impl std::fmt::Display for CalibrationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CalibrationMode::Global => "global",
            CalibrationMode::Local => "local",
        })
    }
}

/// Search range for the bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaSearchSpec {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Number of log-spaced grid points, at least 3.
    pub grid: usize,
    /// Golden-section stopping width, relative to `λ`.
    pub rel_tol: f64,
}

impl LambdaSearchSpec {
    pub const DEFAULT_GRID: usize = 25;
    pub const DEFAULT_REL_TOL: f64 = 1e-3;

    pub fn new(lambda_min: f64, lambda_max: f64, grid: usize) -> Result<Self> {
        let spec = Self {
            lambda_min,
            lambda_max,
            grid,
            rel_tol: Self::DEFAULT_REL_TOL,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `[1e-3 s, 10 s]` with `s` the median per-feature standard deviation
    /// (`s = 1` when every feature is constant).
    pub fn for_dataset(data: &Dataset) -> Self {
        let s = data.median_feature_std();
        let s = if s > 0.0 && s.is_finite() { s } else { 1.0 };
        Self {
            lambda_min: 1e-3 * s,
            lambda_max: 10.0 * s,
            grid: Self::DEFAULT_GRID,
            rel_tol: Self::DEFAULT_REL_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda_min > 0.0
            && self.lambda_min.is_finite()
            && self.lambda_max.is_finite()
            && self.lambda_min < self.lambda_max
            && self.grid >= 3
            && self.rel_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "lambda search needs 0 < min < max and grid >= 3, got min={} max={} grid={}",
                self.lambda_min, self.lambda_max, self.grid
            )))
        }
    }

    /// The log-spaced grid, ascending.
    pub fn grid_points(&self) -> Vec<f64> {
        let (a, b) = (self.lambda_min.ln(), self.lambda_max.ln());
        let last = (self.grid - 1) as f64;
        (0..self.grid)
            .map(|i| match i {
                0 => self.lambda_min,
                i if i == self.grid - 1 => self.lambda_max,
                i => (a + (b - a) * i as f64 / last).exp(),
            })
            .collect()
    }

    /// The middle grid point.
    pub fn midpoint(&self) -> f64 {
        self.grid_points()[self.grid / 2]
    }
}

/// Calibration of one tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeCalibration {
    pub lambda: f64,
    pub beta0: f64,
    pub beta1: f64,
}

impl TreeCalibration {
    pub fn smoothing(&self, family: KernelFamily) -> SmoothingParams {
        SmoothingParams {
            kernel: KernelSpec {
                family,
                lambda: self.lambda,
            },
            beta0: self.beta0,
            beta1: self.beta1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub mode: CalibrationMode,
    pub family: KernelFamily,
    /// One entry per tree; all identical in global mode.
    pub per_tree: Vec<TreeCalibration>,
    /// OOB residual sum of squares at the returned parameters.
    pub oob_rss: f64,
}

/// Least-squares `(β₁, β₀)` for `targets ≈ β₁ · predictions + β₀`.
///
/// Predictions without spread give `(0, mean(targets))`.
pub fn fit_beta_ols(predictions: &[f64], targets: &[f64]) -> (f64, f64) {
    let n = predictions.len().min(targets.len());
    if n == 0 {
        return (0.0, 0.0);
    }
    let (p, y) = (&predictions[..n], &targets[..n]);
    let mean_p = p.iter().sum::<f64>() / n as f64;
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let mut spp = 0.0;
    let mut spy = 0.0;
    let mut max_abs = 0.0f64;
    for (&pi, &yi) in p.iter().zip(y) {
        let dp = pi - mean_p;
        spp += dp * dp;
        spy += dp * (yi - mean_y);
        max_abs = max_abs.max(pi.abs());
    }
    // Spread at the level of rounding noise counts as none.
    if spp <= n as f64 * (1e-12 * max_abs).powi(2) {
        return (0.0, mean_y);
    }
    let beta1 = spy / spp;
    (beta1, mean_y - beta1 * mean_p)
}

fn rss(predictions: &[f64], targets: &[f64], beta1: f64, beta0: f64) -> f64 {
    predictions
        .iter()
        .zip(targets)
        .map(|(&p, &y)| (beta1 * p + beta0 - y).powi(2))
        .sum()
}

/// Minimises `objective` over `λ` in the search range.
///
/// The objective is evaluated on the log-spaced grid, then golden-section
/// search (in `log λ`) refines between the neighbours of the best grid point.
/// Returns the best `(λ, value)` seen, grid points included. Non-finite
/// objective values count as `+∞`.
pub fn lambda_line_search<F>(mut objective: F, spec: &LambdaSearchSpec) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    spec.validate()?;
    let grid = spec.grid_points();
    let mut eval = |lambda: f64| {
        let v = objective(lambda);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let values: Vec<f64> = grid.iter().map(|&l| eval(l)).collect();
    let (mut best_i, mut best_v) = (0, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < best_v {
            best_i = i;
            best_v = v;
        }
    }
    if best_v == f64::INFINITY {
        return Err(Error::SearchFailed);
    }
    let mut best = (grid[best_i], best_v);

    let mut a = grid[best_i.saturating_sub(1)].ln();
    let mut b = grid[(best_i + 1).min(grid.len() - 1)].ln();
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = eval(c.exp());
    let mut fd = eval(d.exp());
    let consider = |u: f64, v: f64, best: &mut (f64, f64)| {
        if v < best.1 {
            *best = (u.exp(), v);
        }
    };
    consider(c, fc, &mut best);
    consider(d, fd, &mut best);
    while b - a > spec.rel_tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c.exp());
            consider(c, fc, &mut best);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d.exp());
            consider(d, fd, &mut best);
        }
    }
    Ok(best)
}

fn check_forest(forest: &[FittedTree]) -> Result<()> {
    if forest.is_empty() {
        return Err(Error::Config("cannot calibrate an empty forest".into()));
    }
    if let Some(t) = forest.iter().position(|t| t.oob().is_empty()) {
        return Err(Error::Config(format!(
            "tree {t} has no out-of-bag rows; use more training rows or fewer in-bag draws"
        )));
    }
    Ok(())
}

/// Uncalibrated smoothed predictions at a tree's OOB rows.
pub fn oob_predictions(tree: &FittedTree, data: &Dataset, kernel: KernelSpec) -> Vec<f64> {
    let smoother = TreeSmoother::new(tree, SmoothingParams::uncalibrated(kernel));
    let mut buf = LeafProbabilities::new();
    tree.oob()
        .iter()
        .map(|&i| smoother.raw_smoothed(data.row(i), &mut buf))
        .collect()
}

fn oob_targets(tree: &FittedTree, data: &Dataset) -> Vec<f64> {
    tree.oob().iter().map(|&i| data.target(i)).collect()
}

/// Total OOB residual sum of squares with `β = (1, 0)` at a fixed `λ`.
pub fn uncalibrated_oob_rss(
    forest: &[FittedTree],
    data: &Dataset,
    family: KernelFamily,
    lambda: f64,
) -> Result<f64> {
    check_forest(forest)?;
    let kernel = KernelSpec::new(family, lambda)?;
    let per_tree: Vec<f64> = forest
        .par_iter()
        .map(|t| {
            rss(
                &oob_predictions(t, data, kernel),
                &oob_targets(t, data),
                1.0,
                0.0,
            )
        })
        .collect();
    Ok(per_tree.iter().sum())
}

/// Objective value and betas at one `λ`.
#[derive(Debug, Clone, Copy)]
struct Fit {
    rss: f64,
    beta1: f64,
    beta0: f64,
}

/// One shared `(λ, β₀, β₁)` minimising the pooled OOB residual sum of squares.
pub fn calibrate_global(
    forest: &[FittedTree],
    data: &Dataset,
    search: &LambdaSearchSpec,
    family: KernelFamily,
) -> Result<CalibrationResult> {
    check_forest(forest)?;
    let targets: Vec<f64> = forest.iter().flat_map(|t| oob_targets(t, data)).collect();
    let mut fits: HashMap<u64, Fit> = HashMap::new();
    let mut fit_at = |lambda: f64| -> Fit {
        *fits.entry(lambda.to_bits()).or_insert_with(|| {
            let kernel = KernelSpec { family, lambda };
            let per_tree: Vec<Vec<f64>> = forest
                .par_iter()
                .map(|t| oob_predictions(t, data, kernel))
                .collect();
            let preds: Vec<f64> = per_tree.concat();
            let (beta1, beta0) = fit_beta_ols(&preds, &targets);
            Fit {
                rss: rss(&preds, &targets, beta1, beta0),
                beta1,
                beta0,
            }
        })
    };
    let (lambda, _) = lambda_line_search(|l| fit_at(l).rss, search)?;
    let fit = fit_at(lambda);
    Ok(CalibrationResult {
        mode: CalibrationMode::Global,
        family,
        per_tree: vec![
            TreeCalibration {
                lambda,
                beta0: fit.beta0,
                beta1: fit.beta1,
            };
            forest.len()
        ],
        oob_rss: fit.rss,
    })
}

/// Calibrates one tree on its own OOB rows.
pub fn calibrate_tree(
    tree: &FittedTree,
    data: &Dataset,
    search: &LambdaSearchSpec,
    family: KernelFamily,
) -> Result<(TreeCalibration, f64)> {
    let targets = oob_targets(tree, data);
    let mut fits: HashMap<u64, Fit> = HashMap::new();
    let mut fit_at = |lambda: f64| -> Fit {
        *fits.entry(lambda.to_bits()).or_insert_with(|| {
            let preds = oob_predictions(tree, data, KernelSpec { family, lambda });
            let (beta1, beta0) = fit_beta_ols(&preds, &targets);
            Fit {
                rss: rss(&preds, &targets, beta1, beta0),
                beta1,
                beta0,
            }
        })
    };
    let (lambda, _) = lambda_line_search(|l| fit_at(l).rss, search)?;
    let fit = fit_at(lambda);
    Ok((
        TreeCalibration {
            lambda,
            beta0: fit.beta0,
            beta1: fit.beta1,
        },
        fit.rss,
    ))
}

/// Per-tree `(λ_t, β₀ₜ, β₁ₜ)`, each minimising its own tree's OOB error.
pub fn calibrate_local(
    forest: &[FittedTree],
    data: &Dataset,
    search: &LambdaSearchSpec,
    family: KernelFamily,
) -> Result<CalibrationResult> {
    check_forest(forest)?;
    search.validate()?;
    let per_tree: Vec<(TreeCalibration, f64)> = forest
        .par_iter()
        .map(|t| calibrate_tree(t, data, search, family))
        .collect::<Result<_>>()?;
    Ok(CalibrationResult {
        mode: CalibrationMode::Local,
        family,
        oob_rss: per_tree.iter().map(|p| p.1).sum(),
        per_tree: per_tree.into_iter().map(|p| p.0).collect(),
    })
}

pub fn calibrate(
    mode: CalibrationMode,
    forest: &[FittedTree],
    data: &Dataset,
    search: &LambdaSearchSpec,
    family: KernelFamily,
) -> Result<CalibrationResult> {
    match mode {
        CalibrationMode::Global => calibrate_global(forest, data, search, family),
        CalibrationMode::Local => calibrate_local(forest, data, search, family),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_exact_cases() {
        let p = [0.5, 1.5, -2.0, 4.0];
        assert_eq!(fit_beta_ols(&p, &p), (1.0, 0.0));
        let y: Vec<f64> = p.iter().map(|v| 2.0 * v + 3.0).collect();
        let (b1, b0) = fit_beta_ols(&p, &y);
        assert!((b1 - 2.0).abs() < 1e-14 && (b0 - 3.0).abs() < 1e-14);
        assert_eq!(fit_beta_ols(&[2.0; 3], &[1.0, 2.0, 6.0]), (0.0, 3.0));
        assert_eq!(fit_beta_ols(&[0.0; 2], &[1.0, 2.0]), (0.0, 1.5));
    }

    #[test]
    fn ols_residuals_orthogonal() {
        let p = [0.1, 0.4, 0.35, 0.8, 0.9, 0.2];
        let y = [1.0, 2.1, 1.7, 3.9, 3.5, 0.8];
        let (b1, b0) = fit_beta_ols(&p, &y);
        let r: Vec<f64> = p.iter().zip(&y).map(|(p, y)| b1 * p + b0 - y).collect();
        assert!(r.iter().sum::<f64>().abs() < 1e-12);
        assert!(r.iter().zip(&p).map(|(r, p)| r * p).sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn grid_is_log_spaced() {
        let s = LambdaSearchSpec::new(1e-3, 10.0, 5).unwrap();
        let g = s.grid_points();
        assert_eq!(g.len(), 5);
        assert_eq!(g[0], 1e-3);
        assert_eq!(g[4], 10.0);
        assert!((g[2] - 0.1).abs() < 1e-12);
        assert!(LambdaSearchSpec::new(1.0, 1.0, 5).is_err());
        assert!(LambdaSearchSpec::new(0.0, 1.0, 5).is_err());
        assert!(LambdaSearchSpec::new(0.1, 1.0, 2).is_err());
    }

    #[test]
    fn line_search_quadratic_in_log() {
        let spec = LambdaSearchSpec::new(1e-3, 10.0, 25).unwrap();
        for target in [2.3e-3, 0.017, 0.4, 7.5] {
            let f = |l: f64| (l.ln() - f64::ln(target)).powi(2) + 1.0;
            let (l, v) = lambda_line_search(f, &spec).unwrap();
            assert!((l / target - 1.0).abs() < 0.01, "{l} vs {target}");
            assert!(v >= 1.0);
        }
    }

    #[test]
    fn line_search_boundaries() {
        let spec = LambdaSearchSpec::new(1e-2, 5.0, 10).unwrap();
        let (l, _) = lambda_line_search(|l| -l, &spec).unwrap();
        assert!((l / 5.0 - 1.0).abs() <= spec.rel_tol);
        let (l, _) = lambda_line_search(|l| l, &spec).unwrap();
        assert!((l / 1e-2 - 1.0).abs() <= spec.rel_tol);
    }

    #[test]
    fn line_search_failure_and_partial_nan() {
        let spec = LambdaSearchSpec::new(1e-2, 5.0, 10).unwrap();
        assert!(matches!(
            lambda_line_search(|_| f64::NAN, &spec),
            Err(Error::SearchFailed)
        ));
        let (l, v) = lambda_line_search(|l| if l < 1.0 { f64::NAN } else { l }, &spec).unwrap();
        assert!(l >= 1.0 && v.is_finite());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!(
            "local".parse::<CalibrationMode>().unwrap(),
            CalibrationMode::Local
        );
        assert!("both".parse::<CalibrationMode>().is_err());
    }
}
