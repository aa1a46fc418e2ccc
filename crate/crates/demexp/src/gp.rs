//! Closed-form conjugate Gaussian-process regression with a known noise
//! scale, a fractional-posterior exponent, and the posterior of the linear
//! projection parameter `b* = (X'X)^{-1} X' mu`.
//!
//! Raising a Gaussian likelihood to the power `alpha` is the same likelihood
//! with noise variance `sigma^2 / alpha`, so the fractional posterior is
//! handled exactly by rescaling the effective noise variance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::linalg;

/// Finite-dimensional Gaussian distribution.
#[derive(Debug, Clone)]
pub struct GaussianLaw {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl GaussianLaw {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "mean has length {d} but covariance is {}x{}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        let scale = linalg::max_abs(&covariance).max(1e-300);
        let asym = linalg::max_abs(&(&covariance - covariance.transpose()));
        if asym > 1e-8 * scale {
            return Err(Error::InvalidParameter(format!(
                "covariance is not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        let mut covariance = covariance;
        linalg::symmetrize(&mut covariance);
        Ok(Self { mean, covariance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Marginal standard deviation of one coordinate (negative variances from
    /// rounding are clamped to zero).
    pub fn marginal_sd(&self, index: usize) -> Result<f64> {
        if index >= self.dim() {
            return Err(Error::InvalidParameter(format!(
                "index {index} out of range for dimension {}",
                self.dim()
            )));
        }
        Ok(self.covariance[(index, index)].max(0.0).sqrt())
    }

    /// Central credible interval `mean +- z_{(1+level)/2} * sd` for one coordinate.
    pub fn credible_interval(&self, index: usize, level: f64) -> Result<(f64, f64)> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "credible level must lie in (0,1), got {level}"
            )));
        }
        let sd = self.marginal_sd(index)?;
        let z = linalg::normal_quantile(0.5 * (1.0 + level));
        let m = self.mean[index];
        Ok((m - z * sd, m + z * sd))
    }

    /// Draw one vector from the law (jitter-retry factorization policy).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        linalg::sample_mvn(&self.mean, &self.covariance, rng)
    }
}

/// Credible interval as a free operation over a [`GaussianLaw`].
pub fn credible_interval(law: &GaussianLaw, index: usize, level: f64) -> Result<(f64, f64)> {
    law.credible_interval(index, level)
}

/// A conjugate GP regression problem: kernel, design, targets, known noise
/// scale, and fractional exponent.
#[derive(Debug, Clone)]
pub struct GpFit {
    kernel: KernelSpec,
    design: DMatrix<f64>,
    targets: DVector<f64>,
    noise_sd: f64,
    alpha: f64,
}

impl GpFit {
    pub fn new(
        kernel: KernelSpec,
        design: DMatrix<f64>,
        targets: DVector<f64>,
        noise_sd: f64,
        alpha: f64,
    ) -> Result<Self> {
        if design.nrows() == 0 {
            return Err(Error::EmptyInput("GP fit needs at least one observation".into()));
        }
        if design.nrows() != targets.len() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows but targets has {} entries",
                design.nrows(),
                targets.len()
            )));
        }
        if !(noise_sd.is_finite() && noise_sd > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise_sd must be positive, got {noise_sd}"
            )));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0,1], got {alpha}"
            )));
        }
        Ok(Self {
            kernel,
            design,
            targets,
            noise_sd,
            alpha,
        })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    /// Effective noise variance `sigma^2 / alpha` of the tempered likelihood.
    pub fn effective_noise_variance(&self) -> f64 {
        self.noise_sd * self.noise_sd / self.alpha
    }

    fn gram_and_factor(&self) -> Result<(DMatrix<f64>, nalgebra::linalg::Cholesky<f64, nalgebra::Dyn>)> {
        let k = self.kernel.gram(&self.design)?;
        let v = self.effective_noise_variance();
        let mut kv = k.clone();
        for i in 0..kv.nrows() {
            kv[(i, i)] += v;
        }
        let chol = linalg::cholesky_with_jitter(&kv)?;
        Ok((k, chol))
    }

    /// Posterior of `mu = (mu(X_1), ..., mu(X_N))`: mean `K (K + vI)^{-1} Y`,
    /// covariance `v K (K + vI)^{-1}`.
    pub fn posterior_at_design(&self) -> Result<GaussianLaw> {
        let n = self.design.nrows();
        let v = self.effective_noise_variance();
        let (_, chol) = self.gram_and_factor()?;
        let s = chol.solve(&self.targets);
        let mean = &self.targets - v * s;
        // v K (K+vI)^{-1} = v [I - v (K+vI)^{-1}]
        let mut cov = chol.inverse();
        cov *= -v * v;
        for i in 0..n {
            cov[(i, i)] += v;
        }
        linalg::symmetrize(&mut cov);
        GaussianLaw::new(mean, cov)
    }

    /// Posterior of the projection parameter
    /// `b* = (X'X)^{-1} X' mu = B mu`: mean `B K (K + vI)^{-1} Y`, covariance
    /// `B [v K (K + vI)^{-1}] B'`.
    pub fn posterior_projection(&self) -> Result<GaussianLaw> {
        let x = &self.design;
        if !linalg::has_full_column_rank(x) {
            return Err(Error::RankDeficient(
                "projection design does not have full column rank".into(),
            ));
        }
        let v = self.effective_noise_variance();
        let (_, chol) = self.gram_and_factor()?;
        let gram_x = x.transpose() * x;
        let g_inv = linalg::invert_spd(&gram_x, "X'X")?;

        let s = chol.solve(&self.targets);
        let mean = &g_inv * (x.transpose() * (&self.targets - v * &s));

        // B [v(I - v (K+vI)^{-1})] B' = v [G^{-1} - v G^{-1} X'(K+vI)^{-1}X G^{-1}]
        let c = chol.solve(x);
        let xtc = x.transpose() * c;
        let mut cov = v * (&g_inv - v * &g_inv * xtc * &g_inv);
        linalg::symmetrize(&mut cov);
        GaussianLaw::new(mean, cov)
    }

    /// Predictive posterior of `mu` at new rows.
    pub fn predict(&self, x_new: &DMatrix<f64>) -> Result<GaussianLaw> {
        if x_new.ncols() != self.design.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "query design has {} columns but training design has {}",
                x_new.ncols(),
                self.design.ncols()
            )));
        }
        let m = x_new.nrows();
        if m == 0 {
            return GaussianLaw::new(DVector::zeros(0), DMatrix::zeros(0, 0));
        }
        let (_, chol) = self.gram_and_factor()?;
        let c = self.kernel.cross_gram(&self.design, x_new)?;
        let s = chol.solve(&self.targets);
        let mean = &c * s;
        let k_new = self.kernel.gram(x_new)?;
        let mut cov = k_new - &c * chol.solve(&c.transpose());
        linalg::symmetrize(&mut cov);
        GaussianLaw::new(mean, cov)
    }
}
