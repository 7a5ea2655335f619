//! Forests of CART trees, the smoothed-forest predictor and its three-term
//! predictive variance.
//!
//! The smoothed forest averages calibrated smoothed tree predictions. Its
//! predictive variance adds three non-negative parts:
//!
//! - *intra*: the mean over trees of each tree's kernel variance;
//! - *inter*: the population variance (divide by `T`) of the per-tree smoothed
//!   predictions around the forest mean;
//! - *noise*: the mean squared residual of the smoothed forest on its training
//!   rows, fixed at fit time.

mod file;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use file::{load_model, read_model, save_model, write_model, FORMAT_NAME, FORMAT_VERSION};

use crate::calibrate::{self, CalibrationMode, CalibrationResult, LambdaSearchSpec};
use crate::data::{BootstrapSplit, Dataset};
use crate::kernel::KernelFamily;
use crate::seed;
use crate::smooth::{LeafProbabilities, SmoothingParams, TreeSmoother};
use crate::tree::{fit_tree, FittedTree, TreeParams};
use crate::{Error, Result};

/// Fits `n_trees` trees, each on its own bootstrap sample of `dataset`.
///
/// Tree `t` draws its bootstrap and feature subsets from
/// `seed::derive(seed, t)`, so the forest does not depend on scheduling. A
/// bootstrap that happens to leave no row out is redrawn (when `n ≥ 2`), so
/// every tree has at least one OOB row. `params.seed` is ignored.
pub fn fit_forest(
    dataset: &Dataset,
    n_trees: usize,
    params: &TreeParams,
    seed: u64,
) -> Result<Vec<FittedTree>> {
    if n_trees == 0 {
        return Err(Error::InvalidArgument(
            "a forest needs at least one tree".into(),
        ));
    }
    let n = dataset.n_rows();
    (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let tree_seed = seed::derive(seed, t as u64);
            let mut rng = seed::rng(tree_seed);
            let mut split = BootstrapSplit::draw(n, n, &mut rng);
            while split.oob.is_empty() && n >= 2 {
                split = BootstrapSplit::draw(n, n, &mut rng);
            }
            let tree_params = TreeParams {
                seed: seed::derive(tree_seed, u64::MAX),
                ..*params
            };
            fit_tree(dataset, &split.in_bag, &tree_params)
        })
        .collect()
}

/// Unsmoothed forest mean and inter-tree variance `(1/T) Σ_t (ŷ_t − ŷ)²`.
pub fn rf_baseline_predict(trees: &[FittedTree], x0: &[f64]) -> (f64, f64) {
    let preds: Vec<f64> = trees.iter().map(|t| t.predict_raw(x0)).collect();
    mean_and_population_variance(&preds)
}

/// In-sample mean squared residual of the unsmoothed forest mean.
pub fn rf_noise_variance(trees: &[FittedTree], data: &Dataset) -> f64 {
    let sq: Vec<f64> = (0..data.n_rows())
        .into_par_iter()
        .map(|i| (rf_baseline_predict(trees, data.row(i)).0 - data.target(i)).powi(2))
        .collect();
    sq.iter().sum::<f64>() / data.n_rows() as f64
}

fn mean_and_population_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Predictive mean and variance with its decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveDistribution {
    pub mean: f64,
    /// Always `intra + inter + noise`.
    pub variance: f64,
    pub intra: f64,
    pub inter: f64,
    pub noise: f64,
}

impl PredictiveDistribution {
    pub fn from_parts(mean: f64, intra: f64, inter: f64, noise: f64) -> Self {
        Self {
            mean,
            variance: intra + inter + noise,
            intra,
            inter,
            noise,
        }
    }
}

/// How the noise term of the predictive variance is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseEstimate {
    /// Residuals of the smoothed forest on all training rows.
    #[default]
    InSample,
    /// Residuals at each row of the trees for which that row is out-of-bag.
    OutOfBag,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub tree: TreeParams,
    pub seed: u64,
    pub calibration: CalibrationMode,
    pub family: KernelFamily,
    /// `None` derives the range from the training features.
    pub search: Option<LambdaSearchSpec>,
    pub noise: NoiseEstimate,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            tree: TreeParams::default(),
            seed: 0,
            calibration: CalibrationMode::Local,
            family: KernelFamily::Gaussian,
            search: None,
            noise: NoiseEstimate::InSample,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub n_features: usize,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub n_training_rows: usize,
    pub tree_params: TreeParams,
    pub seed: u64,
    pub calibration: CalibrationMode,
    pub family: KernelFamily,
    pub noise: NoiseEstimate,
    pub oob_rss: f64,
}

/// A forest with per-tree smoothing and calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedForestModel {
    trees: Vec<FittedTree>,
    smoothing: Vec<SmoothingParams>,
    noise_variance: f64,
    metadata: ModelMetadata,
}

impl SmoothedForestModel {
    /// Fits the forest, calibrates it on OOB rows and estimates the noise term.
    pub fn fit(data: &Dataset, config: &ForestConfig) -> Result<Self> {
        let trees = fit_forest(data, config.n_trees, &config.tree, config.seed)?;
        let search = config
            .search
            .unwrap_or_else(|| LambdaSearchSpec::for_dataset(data));
        let cal = calibrate::calibrate(config.calibration, &trees, data, &search, config.family)?;
        Self::from_calibration(trees, data, &cal, config.noise, config.tree, config.seed)
    }

    /// Wraps an already fitted and calibrated forest.
    pub fn from_calibration(
        trees: Vec<FittedTree>,
        data: &Dataset,
        calibration: &CalibrationResult,
        noise: NoiseEstimate,
        tree_params: TreeParams,
        seed: u64,
    ) -> Result<Self> {
        if calibration.per_tree.len() != trees.len() {
            return Err(Error::InvalidArgument(format!(
                "{} calibrations for {} trees",
                calibration.per_tree.len(),
                trees.len()
            )));
        }
        let smoothing = calibration
            .per_tree
            .iter()
            .map(|c| c.smoothing(calibration.family))
            .collect();
        let metadata = ModelMetadata {
            n_features: data.n_features(),
            feature_names: data.feature_names().to_vec(),
            target_name: data.target_name().to_owned(),
            n_training_rows: data.n_rows(),
            tree_params,
            seed,
            calibration: calibration.mode,
            family: calibration.family,
            noise,
            oob_rss: calibration.oob_rss,
        };
        let mut model = Self::new(trees, smoothing, 0.0, metadata)?;
        model.noise_variance = match noise {
            NoiseEstimate::InSample => model.in_sample_noise(data),
            NoiseEstimate::OutOfBag => model.oob_noise(data)?,
        };
        Ok(model)
    }

    pub fn new(
        trees: Vec<FittedTree>,
        smoothing: Vec<SmoothingParams>,
        noise_variance: f64,
        metadata: ModelMetadata,
    ) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::InvalidArgument(
                "model needs at least one tree".into(),
            ));
        }
        if trees.len() != smoothing.len() {
            return Err(Error::InvalidArgument(format!(
                "{} smoothing entries for {} trees",
                smoothing.len(),
                trees.len()
            )));
        }
        if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be finite and >= 0, got {noise_variance}"
            )));
        }
        if let Some(t) = trees.iter().find(|t| t.n_features() != metadata.n_features) {
            return Err(Error::InvalidArgument(format!(
                "tree has {} features, model has {}",
                t.n_features(),
                metadata.n_features
            )));
        }
        for s in &smoothing {
            s.validate()?;
        }
        Ok(Self {
            trees,
            smoothing,
            noise_variance,
            metadata,
        })
    }

    pub fn trees(&self) -> &[FittedTree] {
        &self.trees
    }

    pub fn smoothing(&self) -> &[SmoothingParams] {
        &self.smoothing
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn metadata(&self) -> &ModelMetadata {
        &self.metadata
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn smoothers(&self) -> impl Iterator<Item = TreeSmoother<'_>> + '_ {
        self.trees
            .iter()
            .zip(&self.smoothing)
            .map(|(t, s)| TreeSmoother::new(t, *s))
    }

    /// Calibrated smoothed `(mean, variance)` of every tree at `x0`.
    pub fn per_tree(&self, x0: &[f64]) -> Vec<(f64, f64)> {
        let mut buf = LeafProbabilities::new();
        self.smoothers()
            .map(|s| s.predict_with_variance(x0, &mut buf))
            .collect()
    }

    /// Smoothed forest prediction: the mean of the calibrated tree predictions.
    pub fn predict(&self, x0: &[f64]) -> f64 {
        let per_tree = self.per_tree(x0);
        per_tree.iter().map(|p| p.0).sum::<f64>() / per_tree.len() as f64
    }

    /// Mean and three-term variance at `x0`.
    pub fn uncertainty(&self, x0: &[f64]) -> PredictiveDistribution {
        let per_tree = self.per_tree(x0);
        let t = per_tree.len() as f64;
        let mean = per_tree.iter().map(|p| p.0).sum::<f64>() / t;
        let intra = per_tree.iter().map(|p| p.1).sum::<f64>() / t;
        let inter = per_tree.iter().map(|p| (p.0 - mean).powi(2)).sum::<f64>() / t;
        PredictiveDistribution::from_parts(mean, intra, inter, self.noise_variance)
    }

    /// [`uncertainty`](Self::uncertainty) over many rows, in input order.
    pub fn uncertainty_batch(&self, data: &Dataset) -> Vec<PredictiveDistribution> {
        (0..data.n_rows())
            .into_par_iter()
            .map(|i| self.uncertainty(data.row(i)))
            .collect()
    }

    fn in_sample_noise(&self, data: &Dataset) -> f64 {
        let sq: Vec<f64> = (0..data.n_rows())
            .into_par_iter()
            .map(|i| (self.predict(data.row(i)) - data.target(i)).powi(2))
            .collect();
        sq.iter().sum::<f64>() / data.n_rows() as f64
    }

    fn oob_noise(&self, data: &Dataset) -> Result<f64> {
        let n = data.n_rows();
        let mut sums = vec![0.0; n];
        let mut counts = vec![0usize; n];
        let mut buf = LeafProbabilities::new();
        for s in self.smoothers() {
            for &i in s.tree.oob() {
                sums[i] += s.predict_with_variance(data.row(i), &mut buf).0;
                counts[i] += 1;
            }
        }
        let (mut total, mut rows) = (0.0, 0usize);
        for i in 0..n {
            if counts[i] > 0 {
                total += (sums[i] / counts[i] as f64 - data.target(i)).powi(2);
                rows += 1;
            }
        }
        if rows == 0 {
            return Err(Error::Config("no row is out-of-bag for any tree".into()));
        }
        Ok(total / rows as f64)
    }
}
