//! Random forest regression with post-hoc kernel smoothing.
//!
//! A fitted regression tree is a piecewise-constant function over axis-parallel
//! boxes. Convolving it with a spherical kernel centred at the query point gives
//! a differentiable prediction whose weights are the kernel probabilities of
//! each leaf box, plus a variance that measures how much the prediction moves
//! when the leaf boundaries are perturbed. Averaging smoothed trees gives the
//! smoothed forest, whose bandwidth and affine calibration are chosen by
//! minimising out-of-bag squared error.
//!
//! Modules, bottom-up:
//!
//! - [`data`]: datasets, CSV ingestion, bootstrap splits, synthetic generators.
//! - [`tree`]: CART regression trees and their leaf boxes.
//! - [`kernel`]: Gaussian / Laplace kernels and box probabilities.
//! - [`smooth`]: per-tree smoothed prediction, variance and gradient.
//! - [`calibrate`]: out-of-bag bandwidth search and OLS calibration.
//! - [`ensemble`]: forests, smoothed-forest prediction and the three-term
//!   predictive variance, plus the model file format.
//! - [`metrics`]: MSE, Gaussian log-loss, percentage improvement of risk.
//! - [`theory`]: decision-stump split-point simulation.
//! - [`bench`]: the repeated-bootstrap experiment harness.

pub mod bench;
pub mod calibrate;
pub mod data;
pub mod ensemble;
mod error;
pub mod kernel;
pub mod metrics;
pub mod seed;
pub mod smooth;
pub mod theory;
pub mod tree;

pub use error::{Error, Result};

pub use calibrate::{CalibrationMode, CalibrationResult, LambdaSearchSpec};
pub use data::{BootstrapSplit, Dataset};
pub use ensemble::{ForestConfig, PredictiveDistribution, SmoothedForestModel};
pub use kernel::{KernelFamily, KernelSpec};
pub use smooth::{SmoothingParams, TreeSmoother};
pub use tree::{FittedTree, LeafRegion, TreeParams};
