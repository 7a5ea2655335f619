//! Spherical kernels and the probability of a kernel draw landing in a box.
//!
//! With independent kernel components, the probability of an axis-parallel
//! box factorises into one-dimensional interval masses, each a difference of
//! CDFs. Infinite box sides are handled by explicit checks, so `±∞` maps to
//! exactly 0 or 1.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::tree::LeafRegion;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
    Laplace,
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(KernelFamily::Gaussian),
            "laplace" => Ok(KernelFamily::Laplace),
            other => Err(Error::InvalidArgument(format!(
                "unknown kernel family '{other}'"
            ))),
        }
    }
}

/// A kernel family with scale `lambda` (the standard deviation for the
/// Gaussian, the scale parameter for the Laplace).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub lambda: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kernel scale must be finite and > 0, got {lambda}"
            )));
        }
        Ok(Self { family, lambda })
    }

    pub fn gaussian(lambda: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, lambda)
    }

    pub fn laplace(lambda: f64) -> Result<Self> {
        Self::new(KernelFamily::Laplace, lambda)
    }

    /// `P(z ≤ value)` for `z` drawn from the kernel centred at `center`.
    pub fn cdf(&self, value: f64, center: f64) -> f64 {
        if value == f64::INFINITY {
            return 1.0;
        }
        if value == f64::NEG_INFINITY {
            return 0.0;
        }
        let d = (value - center) / self.lambda;
        match self.family {
            KernelFamily::Gaussian => 0.5 * libm::erfc(-d * FRAC_1_SQRT_2),
            KernelFamily::Laplace => {
                if d < 0.0 {
                    0.5 * d.exp()
                } else {
                    1.0 - 0.5 * (-d).exp()
                }
            }
        }
    }

    /// `P(z > value)`, evaluated directly in the upper tail.
    pub fn sf(&self, value: f64, center: f64) -> f64 {
        if value == f64::INFINITY {
            return 0.0;
        }
        if value == f64::NEG_INFINITY {
            return 1.0;
        }
        let d = (value - center) / self.lambda;
        match self.family {
            KernelFamily::Gaussian => 0.5 * libm::erfc(d * FRAC_1_SQRT_2),
            KernelFamily::Laplace => {
                if d > 0.0 {
                    0.5 * (-d).exp()
                } else {
                    1.0 - 0.5 * d.exp()
                }
            }
        }
    }

    /// Kernel density at `value`; zero at infinity.
    pub fn pdf(&self, value: f64, center: f64) -> f64 {
        if value.is_infinite() {
            return 0.0;
        }
        let d = (value - center) / self.lambda;
        match self.family {
            KernelFamily::Gaussian => (-0.5 * d * d).exp() / (self.lambda * (2.0 * PI).sqrt()),
            KernelFamily::Laplace => 0.5 * (-d.abs()).exp() / self.lambda,
        }
    }

    /// `P(lower ≤ z < upper)`.
    ///
    /// Intervals lying entirely above the centre are computed from upper-tail
    /// probabilities so that far-tail masses do not cancel to zero.
    pub fn interval_mass(&self, lower: f64, upper: f64, center: f64) -> f64 {
        let mass = if lower >= center {
            self.sf(lower, center) - self.sf(upper, center)
        } else {
            self.cdf(upper, center) - self.cdf(lower, center)
        };
        mass.max(0.0)
    }

    /// Probability that a kernel draw centred at `x0` lands in `region`.
    pub fn region_probability(&self, region: &LeafRegion, x0: &[f64]) -> f64 {
        region
            .lower
            .iter()
            .zip(&region.upper)
            .zip(x0)
            .map(|((&lo, &hi), &c)| {
                if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
                    1.0
                } else {
                    self.interval_mass(lo, hi, c)
                }
            })
            .product()
    }

    /// Probabilities of every region. The regions must partition the input
    /// space; a sum deviating from one by more than `1e-6` is reported as an
    /// integrity error.
    pub fn region_probabilities(&self, regions: &[LeafRegion], x0: &[f64]) -> Result<Vec<f64>> {
        let probs: Vec<f64> = regions
            .iter()
            .map(|r| self.region_probability(r, x0))
            .collect();
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::NotAPartition { sum });
        }
        Ok(probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region(lower: &[f64], upper: &[f64]) -> LeafRegion {
        LeafRegion {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            constant: 0.0,
        }
    }

    /// Composite Simpson integration of the standard normal density.
    fn simpson_normal_cdf(x: f64) -> f64 {
        let a = -12.0;
        let m = 200_000;
        let h = (x - a) / m as f64;
        let f = |t: f64| (-0.5 * t * t).exp() / (2.0 * PI).sqrt();
        let mut s = f(a) + f(x);
        for i in 1..m {
            let t = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 * f(t) } else { 2.0 * f(t) };
        }
        s * h / 3.0
    }

    #[test]
    fn gaussian_cdf_values() {
        for &(c, l) in &[(0.0, 1.0), (3.5, 0.01), (-2.0, 7.0)] {
            let k = KernelSpec::gaussian(l).unwrap();
            assert_eq!(k.cdf(c, c), 0.5);
            assert_eq!(k.cdf(f64::INFINITY, c), 1.0);
            assert_eq!(k.cdf(f64::NEG_INFINITY, c), 0.0);
        }
        let k = KernelSpec::gaussian(1.0).unwrap();
        let oracle = simpson_normal_cdf(1.96);
        assert!((oracle - 0.97500).abs() < 1e-5);
        assert!((k.cdf(1.96, 0.0) - oracle).abs() < 1e-9);
        assert!((k.cdf(1.96, 0.0) - 0.97500).abs() < 1e-5);
    }

    #[test]
    fn cdf_monotone_and_complementary() {
        for k in [
            KernelSpec::gaussian(0.7).unwrap(),
            KernelSpec::laplace(0.7).unwrap(),
        ] {
            let mut prev = 0.0;
            for i in -400..=400 {
                let x = i as f64 / 40.0;
                let c = k.cdf(x, 0.3);
                assert!(c >= prev);
                assert!((c + k.sf(x, 0.3) - 1.0).abs() < 1e-15);
                prev = c;
            }
        }
    }

    #[test]
    fn laplace_closed_form() {
        let k = KernelSpec::laplace(2.0).unwrap();
        assert_eq!(k.cdf(1.0, 1.0), 0.5);
        assert!((k.cdf(3.0, 1.0) - (1.0 - 0.5 * (-1.0f64).exp())).abs() < 1e-15);
        assert!((k.cdf(-1.0, 1.0) - 0.5 * (-1.0f64).exp()).abs() < 1e-15);
        assert!((k.pdf(1.0, 1.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn box_probabilities() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let inf = f64::INFINITY;
        assert_eq!(
            k.region_probability(&region(&[-inf, -inf], &[inf, inf]), &[3.0, 4.0]),
            1.0
        );
        assert_eq!(k.region_probability(&region(&[0.0], &[inf]), &[0.0]), 0.5);
        assert_eq!(
            k.region_probability(&region(&[0.0, 0.0], &[inf, inf]), &[0.0, 0.0]),
            0.25
        );
    }

    #[test]
    fn far_tail_interval_keeps_precision() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let m = k.interval_mass(10.0, 11.0, 0.0);
        let expected = 0.5 * (libm::erfc(10.0 * FRAC_1_SQRT_2) - libm::erfc(11.0 * FRAC_1_SQRT_2));
        assert!(m > 0.0);
        assert!(((m - expected) / expected).abs() < 1e-12);
    }

    #[test]
    fn non_partition_is_rejected() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let inf = f64::INFINITY;
        let regions = vec![region(&[-inf], &[0.0]), region(&[0.5], &[inf])];
        assert!(matches!(
            k.region_probabilities(&regions, &[0.25]),
            Err(Error::NotAPartition { .. })
        ));
        let ok = vec![region(&[-inf], &[0.0]), region(&[0.0], &[inf])];
        let p = k.region_probabilities(&ok, &[0.25]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_lambda() {
        assert!(KernelSpec::gaussian(0.0).is_err());
        assert!(KernelSpec::gaussian(f64::NAN).is_err());
        assert!(KernelSpec::laplace(f64::INFINITY).is_err());
        assert!("gaussian".parse::<KernelFamily>().is_ok());
        assert!("cauchy".parse::<KernelFamily>().is_err());
    }

    #[test]
    fn enlarging_box_never_decreases_probability() {
        let k = KernelSpec::gaussian(0.8).unwrap();
        let x0 = [0.1, -0.4];
        let mut lo = [-0.2, -0.3];
        let mut hi = [0.3, 0.1];
        let mut prev = k.region_probability(&region(&lo, &hi), &x0);
        for step in 0..50 {
            let j = step % 2;
            lo[j] -= 0.05;
            hi[1 - j] += 0.07;
            let p = k.region_probability(&region(&lo, &hi), &x0);
            assert!(p >= prev);
            prev = p;
        }
    }
}
