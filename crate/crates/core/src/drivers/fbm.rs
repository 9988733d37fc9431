use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{lift_piecewise_linear, uniform_grid, SampledRoughPath};
use crate::error::{Error, Result};

/// Largest grid for which the dense increment covariance is factorized.
pub const MAX_FBM_GRID: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianDriverSpec {
    pub hurst: f64,
    pub dim: usize,
    /// Number of grid cells.
    pub n: usize,
    pub horizon: f64,
    pub seed: u64,
}

impl GaussianDriverSpec {
    pub fn new(hurst: f64, dim: usize, n: usize, horizon: f64, seed: u64) -> Result<Self> {
        let spec = GaussianDriverSpec {
            hurst,
            dim,
            n,
            horizon,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hurst > 1.0 / 3.0 && self.hurst <= 1.0) {
            return Err(Error::domain(format!(
                "hurst = {} must lie in (1/3, 1] for a step-2 lift",
                self.hurst
            )));
        }
        if self.dim == 0 {
            return Err(Error::domain("driver dimension must be >= 1"));
        }
        if self.n == 0 || self.n > MAX_FBM_GRID {
            return Err(Error::domain(format!(
                "grid size n = {} must lie in [1, {MAX_FBM_GRID}]",
                self.n
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::domain("horizon must be positive"));
        }
        Ok(())
    }

    /// `ρ = 1/(2H)`.
    pub fn rho(&self) -> f64 {
        1.0 / (2.0 * self.hurst)
    }

    /// A variation exponent strictly above `1/H` and below 3.
    pub fn p_hint(&self) -> f64 {
        let inv = 1.0 / self.hurst;
        (inv + 0.2).min(0.5 * (inv + 3.0))
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        GaussianDriverSpec {
            seed,
            ..self.clone()
        }
    }
}

/// Exact fBm sampler on a uniform grid: Cholesky factor of the increment
/// (fractional Gaussian noise) covariance, computed once and reused.
#[derive(Debug, Clone)]
pub struct FbmSampler {
    spec: GaussianDriverSpec,
    chol: DMatrix<f64>,
}

impl FbmSampler {
    pub fn new(spec: &GaussianDriverSpec) -> Result<Self> {
        if !(spec.hurst > 0.0 && spec.hurst <= 1.0) {
            return Err(Error::domain("hurst must lie in (0, 1]"));
        }
        if spec.n == 0 || spec.n > MAX_FBM_GRID || spec.dim == 0 || !(spec.horizon > 0.0) {
            return Err(Error::domain("invalid fBm grid specification"));
        }
        let n = spec.n;
        let dt = spec.horizon / n as f64;
        let h2 = 2.0 * spec.hurst;
        let scale = 0.5 * dt.powf(h2);
        let autocov = |k: usize| {
            let k = k as f64;
            scale * ((k + 1.0).powf(h2) + (k - 1.0).abs().powf(h2) - 2.0 * k.powf(h2))
        };
        let gamma: Vec<f64> = (0..n).map(autocov).collect();
        let cov = DMatrix::from_fn(n, n, |i, j| gamma[i.abs_diff(j)]);
        let chol = match cov.clone().cholesky() {
            Some(c) => c,
            None => {
                let jitter = 1e-12 * gamma[0];
                let mut c = cov;
                for i in 0..n {
                    c[(i, i)] += jitter;
                }
                c.cholesky().ok_or_else(|| {
                    Error::Numerical(
                        "fBm increment covariance is not positive definite after jitter".into(),
                    )
                })?
            }
        };
        Ok(FbmSampler {
            spec: spec.clone(),
            chol: chol.l(),
        })
    }

    pub fn spec(&self) -> &GaussianDriverSpec {
        &self.spec
    }

    pub fn times(&self) -> Vec<f64> {
        uniform_grid(self.spec.n, self.spec.horizon)
    }

    /// `n + 1` points in `R^d` starting at the origin, deterministic in `seed`.
    pub fn sample(&self, seed: u64) -> Vec<Vec<f64>> {
        let n = self.spec.n;
        let d = self.spec.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = vec![vec![0.0; d]; n + 1];
        for coord in 0..d {
            let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let incr = &self.chol * z;
            let mut acc = 0.0;
            for i in 0..n {
                acc += incr[i];
                points[i + 1][coord] = acc;
            }
        }
        points
    }

    /// Piecewise-linear step-2 lift of a sample, tagged with `p_hint`.
    pub fn sample_path(&self, seed: u64) -> Result<SampledRoughPath> {
        let pts = self.sample(seed);
        lift_piecewise_linear(&pts, &self.times())?.with_p(self.spec.p_hint())
    }
}

/// One fBm sample for `spec` (factorizes the covariance each call; use
/// [`FbmSampler`] for Monte-Carlo loops).
pub fn sample_fbm(spec: &GaussianDriverSpec) -> Result<Vec<Vec<f64>>> {
    Ok(FbmSampler::new(spec)?.sample(spec.seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        assert!(GaussianDriverSpec::new(0.3, 1, 10, 1.0, 0).is_err());
        assert!(GaussianDriverSpec::new(0.5, 0, 10, 1.0, 0).is_err());
        assert!(GaussianDriverSpec::new(0.5, 1, 5000, 1.0, 0).is_err());
        let s = GaussianDriverSpec::new(0.4, 2, 10, 1.0, 0).unwrap();
        assert!((s.rho() - 1.25).abs() < 1e-15);
        assert!(s.p_hint() > 2.5 && s.p_hint() < 3.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = GaussianDriverSpec::new(0.4, 2, 64, 1.0, 7).unwrap();
        let a = sample_fbm(&spec).unwrap();
        let b = sample_fbm(&spec).unwrap();
        assert_eq!(a, b);
        let c = sample_fbm(&spec.with_seed(8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn brownian_increments_uncorrelated() {
        let n = 2048;
        let spec = GaussianDriverSpec::new(0.5, 1, n, 1.0, 3).unwrap();
        let pts = sample_fbm(&spec).unwrap();
        let inc: Vec<f64> = pts.windows(2).map(|w| w[1][0] - w[0][0]).collect();
        let mean = inc.iter().sum::<f64>() / n as f64;
        let var = inc.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let cov1 = inc
            .windows(2)
            .map(|w| (w[0] - mean) * (w[1] - mean))
            .sum::<f64>()
            / (n - 1) as f64;
        assert!((cov1 / var).abs() < 3.0 / (n as f64).sqrt());
        assert!((var * n as f64 - 1.0).abs() < 0.15);
    }

    #[test]
    fn hurst_one_is_a_line() {
        let spec = GaussianDriverSpec::new(1.0, 1, 16, 1.0, 1).unwrap();
        let pts = sample_fbm(&spec).unwrap();
        let slope = pts[16][0];
        for (i, p) in pts.iter().enumerate() {
            assert!((p[0] - slope * i as f64 / 16.0).abs() < 1e-4 * (1.0 + slope.abs()));
        }
    }
}
