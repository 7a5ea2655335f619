//! Kernel-smoothed prediction, variance and gradient of a single tree.
//!
//! For a tree with leaves `D_i` and constants `c_i`, the smoothed prediction at
//! `x0` is `β₁ Σ_i c_i P(z ∈ D_i) + β₀` with `z` drawn from the kernel centred
//! at `x0`, and the smoothed variance is `β₁² [Σ_i c_i² P(z ∈ D_i) − ŷ²]`.
//! Evaluation costs one kernel CDF per split node plus `O(k p)` arithmetic.

use serde::{Deserialize, Serialize};

use crate::kernel::{KernelFamily, KernelSpec};
use crate::tree::{FittedTree, Node};
use crate::{Error, Result};

/// Bandwidth and affine calibration applied to one tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    pub kernel: KernelSpec,
    pub beta0: f64,
    pub beta1: f64,
}

impl SmoothingParams {
    /// Smoothing without calibration (`β₁ = 1`, `β₀ = 0`).
    pub fn uncalibrated(kernel: KernelSpec) -> Self {
        Self {
            kernel,
            beta0: 0.0,
            beta1: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        KernelSpec::new(self.kernel.family, self.kernel.lambda)?;
        if !(self.beta0.is_finite() && self.beta1.is_finite()) {
            return Err(Error::InvalidArgument(
                "calibration betas must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Reusable buffers for leaf probabilities.
#[derive(Debug, Default, Clone)]
pub struct LeafProbabilities {
    below: Vec<f64>,
    above: Vec<f64>,
    probs: Vec<f64>,
}

impl LeafProbabilities {
    pub fn new() -> Self {
        Self::default()
    }

    /// `P(z ∈ D_i | x0)` for every leaf of `tree`, in leaf order.
    pub fn compute(&mut self, tree: &FittedTree, kernel: &KernelSpec, x0: &[f64]) -> &[f64] {
        let nodes = tree.nodes();
        self.below.resize(nodes.len(), 0.0);
        self.above.resize(nodes.len(), 0.0);
        // One tail evaluation per split, taken on the side of the centre where
        // it is accurate; the complement comes from subtraction.
        for (i, node) in nodes.iter().enumerate() {
            if let Node::Split {
                feature, threshold, ..
            } = *node
            {
                let c = x0[feature];
                if threshold >= c {
                    let sf = kernel.sf(threshold, c);
                    self.above[i] = sf;
                    self.below[i] = 1.0 - sf;
                } else {
                    let cdf = kernel.cdf(threshold, c);
                    self.below[i] = cdf;
                    self.above[i] = 1.0 - cdf;
                }
            }
        }
        self.probs.clear();
        for leaf in 0..tree.n_leaves() {
            let mut p = 1.0;
            for term in tree.leaf_terms(leaf) {
                let mass = match (term.lower(), term.upper()) {
                    (Some(a), Some(b)) => {
                        let (feature, threshold) = split_of(nodes[a]);
                        if threshold >= x0[feature] {
                            self.above[a] - self.above[b]
                        } else {
                            self.below[b] - self.below[a]
                        }
                    }
                    (Some(a), None) => self.above[a],
                    (None, Some(b)) => self.below[b],
                    (None, None) => 1.0,
                };
                p *= mass.max(0.0);
            }
            self.probs.push(p);
        }
        &self.probs
    }
}

fn split_of(node: Node) -> (usize, f64) {
    match node {
        Node::Split {
            feature, threshold, ..
        } => (feature, threshold),
        Node::Leaf { .. } => unreachable!("bound terms reference split nodes"),
    }
}

/// Uncalibrated smoothed mean and variance from leaf probabilities.
fn moments(tree: &FittedTree, probs: &[f64]) -> (f64, f64) {
    let mean: f64 = tree
        .leaves()
        .iter()
        .zip(probs)
        .map(|(l, &p)| l.constant * p)
        .sum();
    // Σ p (c − ŷ)² is Σ c² p − ŷ² when Σ p = 1, without the cancellation.
    let var: f64 = tree
        .leaves()
        .iter()
        .zip(probs)
        .map(|(l, &p)| p * (l.constant - mean).powi(2))
        .sum();
    (mean, var.max(0.0))
}

/// A tree together with its smoothing parameters.
#[derive(Debug, Clone, Copy)]
pub struct TreeSmoother<'a> {
    pub tree: &'a FittedTree,
    pub params: SmoothingParams,
}

impl<'a> TreeSmoother<'a> {
    pub fn new(tree: &'a FittedTree, params: SmoothingParams) -> Self {
        Self { tree, params }
    }

    /// Smoothed prediction before calibration, `Σ_i c_i P(z ∈ D_i | x0)`.
    pub fn raw_smoothed(&self, x0: &[f64], buf: &mut LeafProbabilities) -> f64 {
        let probs = buf.compute(self.tree, &self.params.kernel, x0);
        moments(self.tree, probs).0
    }

    /// Calibrated smoothed mean and variance in one pass.
    pub fn predict_with_variance(&self, x0: &[f64], buf: &mut LeafProbabilities) -> (f64, f64) {
        let probs = buf.compute(self.tree, &self.params.kernel, x0);
        let (mean, var) = moments(self.tree, probs);
        let b1 = self.params.beta1;
        (b1 * mean + self.params.beta0, b1 * b1 * var)
    }

    pub fn smoothed_predict(&self, x0: &[f64]) -> f64 {
        self.predict_with_variance(x0, &mut LeafProbabilities::new())
            .0
    }

    /// Variance of the calibrated tree output under the kernel; never negative.
    pub fn smoothed_variance(&self, x0: &[f64]) -> f64 {
        self.predict_with_variance(x0, &mut LeafProbabilities::new())
            .1
    }

    /// Partial derivative of [`smoothed_predict`](Self::smoothed_predict) with
    /// respect to `x0[j]`. Gaussian kernel only.
    pub fn smoothed_derivative(&self, x0: &[f64], j: usize) -> Result<f64> {
        let kernel = &self.params.kernel;
        if kernel.family != KernelFamily::Gaussian {
            return Err(Error::Unsupported(
                "analytic derivative requires the gaussian kernel".into(),
            ));
        }
        if j >= x0.len() {
            return Err(Error::InvalidArgument(format!(
                "dimension {j} out of range for a {}-dimensional point",
                x0.len()
            )));
        }
        let mut total = 0.0;
        for leaf in self.tree.leaves() {
            let (lo, hi) = (leaf.lower[j], leaf.upper[j]);
            // d/dx0 of ∫_lo^hi k(z | x0) dz is k(lo | x0) − k(hi | x0).
            let dj = kernel.pdf(lo, x0[j]) - kernel.pdf(hi, x0[j]);
            if dj == 0.0 {
                continue;
            }
            let mut others = 1.0;
            for (d, &c) in x0.iter().enumerate() {
                if d != j && (leaf.lower[d].is_finite() || leaf.upper[d].is_finite()) {
                    others *= kernel.interval_mass(leaf.lower[d], leaf.upper[d], c);
                }
            }
            total += leaf.constant * others * dj;
        }
        Ok(self.params.beta1 * total)
    }

    /// Full gradient.
    pub fn smoothed_gradient(&self, x0: &[f64]) -> Result<Vec<f64>> {
        (0..x0.len())
            .map(|j| self.smoothed_derivative(x0, j))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::seed;
    use crate::tree::{fit_tree, TreeParams};
    use rand::Rng as _;

    fn step_tree() -> FittedTree {
        let xs: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![-1.0 + i as f64 * 0.1 + 0.05])
            .collect();
        let ys = xs.iter().map(|x| f64::from(u8::from(x[0] > 0.0))).collect();
        let d = Dataset::from_rows(&xs, ys).unwrap();
        let params = TreeParams {
            min_samples_leaf: 1,
            ..TreeParams::default()
        };
        let t = fit_tree(&d, &(0..20).collect::<Vec<_>>(), &params).unwrap();
        assert_eq!(t.n_leaves(), 2);
        assert!(t.leaves()[0].upper[0].abs() < 1e-15);
        t
    }

    fn random_tree(seed: u64, p: usize) -> FittedTree {
        let mut rng = seed::rng(seed);
        let rows: Vec<Vec<f64>> = (0..150)
            .map(|_| (0..p).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let ys = rows
            .iter()
            .map(|r| r.iter().map(|v| (2.0 * v).sin()).sum::<f64>() + rng.random_range(-0.2..0.2))
            .collect();
        let d = Dataset::from_rows(&rows, ys).unwrap();
        let params = TreeParams {
            min_samples_leaf: 4,
            mtry: Some(p),
            seed,
            ..TreeParams::default()
        };
        fit_tree(&d, &(0..150).collect::<Vec<_>>(), &params).unwrap()
    }

    fn gauss(lambda: f64) -> SmoothingParams {
        SmoothingParams::uncalibrated(KernelSpec::gaussian(lambda).unwrap())
    }

    #[test]
    fn single_leaf_tree() {
        let d = Dataset::from_rows(&[vec![0.0], vec![1.0]], vec![3.0, 3.0]).unwrap();
        let t = fit_tree(&d, &[0, 1], &TreeParams::default()).unwrap();
        for lambda in [1e-6, 0.3, 50.0] {
            let s = TreeSmoother::new(&t, gauss(lambda));
            assert_eq!(s.smoothed_predict(&[0.7]), 3.0);
            assert_eq!(s.smoothed_variance(&[0.7]), 0.0);
            assert_eq!(s.smoothed_derivative(&[0.7], 0).unwrap(), 0.0);
        }
    }

    #[test]
    fn step_tree_at_threshold() {
        let t = step_tree();
        let th = t.leaves()[0].upper[0];
        let s = TreeSmoother::new(&t, gauss(1.0));
        assert!((s.smoothed_predict(&[th]) - 0.5).abs() < 1e-15);
        assert!((s.smoothed_variance(&[th]) - 0.25).abs() < 1e-15);
        let d = s.smoothed_derivative(&[th], 0).unwrap();
        let fd = (s.smoothed_predict(&[th + 1e-5]) - s.smoothed_predict(&[th - 1e-5])) / 2e-5;
        assert!((fd - 0.398_94).abs() < 1e-5);
        assert!((d - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-6);
        assert!((d - fd).abs() < 1e-6);
        assert!(s.smoothed_derivative(&[th + 20.0], 0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn laplace_derivative_unsupported() {
        let t = step_tree();
        let s = TreeSmoother::new(
            &t,
            SmoothingParams::uncalibrated(KernelSpec::laplace(1.0).unwrap()),
        );
        assert!(matches!(
            s.smoothed_derivative(&[0.0], 0),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn fast_path_matches_box_products() {
        for seed in 0..10 {
            let t = random_tree(seed, 3);
            let mut rng = seed::rng(seed + 50);
            let mut buf = LeafProbabilities::new();
            for family in [KernelFamily::Gaussian, KernelFamily::Laplace] {
                let k = KernelSpec::new(family, rng.random_range(0.05..2.0)).unwrap();
                for _ in 0..50 {
                    let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
                    let direct = k.region_probabilities(t.leaves(), &x).unwrap();
                    let fast = buf.compute(&t, &k, &x);
                    for (a, b) in direct.iter().zip(fast) {
                        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
                    }
                    assert!((fast.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn prediction_within_leaf_range_and_calibration_linear() {
        let t = random_tree(3, 2);
        let lo = t
            .leaves()
            .iter()
            .map(|l| l.constant)
            .fold(f64::INFINITY, f64::min);
        let hi = t
            .leaves()
            .iter()
            .map(|l| l.constant)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut rng = seed::rng(7);
        for _ in 0..200 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
            let base = gauss(rng.random_range(0.01..3.0));
            let y = TreeSmoother::new(&t, base).smoothed_predict(&x);
            assert!(y >= lo - 1e-12 && y <= hi + 1e-12);
            let cal = SmoothingParams {
                beta0: -1.5,
                beta1: 2.25,
                ..base
            };
            let s = TreeSmoother::new(&t, cal);
            assert_eq!(s.smoothed_predict(&x), 2.25 * y + -1.5);
            let v0 = TreeSmoother::new(&t, base).smoothed_variance(&x);
            assert!((s.smoothed_variance(&x) - 2.25 * 2.25 * v0).abs() <= 1e-12 * (1.0 + v0));
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = seed::rng(99);
        for case in 0..50 {
            let t = random_tree(case, 2);
            let lambda = rng.random_range(0.1..1.5);
            let s = TreeSmoother::new(&t, gauss(lambda));
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
            let j = case as usize % 2;
            let h = 1e-5;
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[j] += h;
            xm[j] -= h;
            let fd = (s.smoothed_predict(&xp) - s.smoothed_predict(&xm)) / (2.0 * h);
            let an = s.smoothed_derivative(&x, j).unwrap();
            assert!((an - fd).abs() <= 1e-4 * an.abs().max(1e-3), "{an} vs {fd}");
        }
    }

    #[test]
    fn tiny_bandwidth_recovers_raw_tree() {
        let t = random_tree(5, 2);
        let s = TreeSmoother::new(&t, gauss(1e-10));
        let mut rng = seed::rng(1);
        let mut checked = 0;
        while checked < 200 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-2.5..2.5)).collect();
            let leaf = &t.leaves()[t.leaf_index(&x)];
            let margin = (0..2)
                .map(|j| (x[j] - leaf.lower[j]).min(leaf.upper[j] - x[j]))
                .fold(f64::INFINITY, f64::min);
            if margin < 0.01 {
                continue;
            }
            assert!((s.smoothed_predict(&x) - t.predict_raw(&x)).abs() < 1e-9);
            checked += 1;
        }
    }
}
