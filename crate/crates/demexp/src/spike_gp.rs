//! Spike-and-GP MCMC for the anchored regression model
//! `Y = X b + r(X) + eps` with
//! `r | sigma_mu^2 ~ GP(0, sigma_mu^2 k_rho)` and
//! `sigma_mu^2 ~ p0 d_0 + (1 - p0) InvGamma(a, b)`.
//!
//! The GP is always integrated out analytically: given the hyperparameters,
//! `Y | b ~ Normal(X b, sigma_mu^2 K + sigma^2 I)`, and the chain moves on
//! `(included, sigma_mu^2, rho, b, sigma^2)` with a prior-proposal
//! reversible jump for the inclusion indicator. The likelihood is tempered
//! by the fractional exponent `alpha`.

use nalgebra::linalg::Cholesky;
use nalgebra::{DMatrix, DVector, Dyn};
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainDraw, McmcChain};
use crate::dist::{inv_gamma_logpdf, inv_gamma_sample};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::linalg;
use crate::summaries::LinearProjector;

/// Noise-variance prior (the paper's hyperpriors are all InvGamma(1,1); the
/// noise prior mirrors them).
const NOISE_PRIOR_SHAPE: f64 = 1.0;
const NOISE_PRIOR_SCALE: f64 = 1.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpikeGpConfig {
    /// Prior mass on the spike `r = 0`. The edges are meaningful: `p0 = 0`
    /// is the pure scale-mixture GP, `p0 = 1` never activates the GP.
    pub p0: f64,
    pub a_sigma_mu: f64,
    pub b_sigma_mu: f64,
    pub a_rho: f64,
    pub b_rho: f64,
    /// Fractional-posterior exponent in (0, 1].
    pub alpha: f64,
    pub iterations: usize,
    pub burn_in: usize,
    /// Log-scale random-walk step for the within-slab moves.
    pub proposal_sd: f64,
    /// Replace the slab kernel by its orthogonalized version so GP draws are
    /// orthogonal to the design in-sample.
    pub orthogonalize: bool,
    /// Store per-draw in-sample evaluations of `mu` (draws `r` conditionally;
    /// costly for large N).
    pub store_function_draws: bool,
}

impl Default for SpikeGpConfig {
    fn default() -> Self {
        Self {
            p0: 0.5,
            a_sigma_mu: 1.0,
            b_sigma_mu: 1.0,
            a_rho: 1.0,
            b_rho: 1.0,
            alpha: 1.0,
            iterations: 4000,
            burn_in: 1000,
            proposal_sd: 0.5,
            orthogonalize: true,
            store_function_draws: false,
        }
    }
}

impl SpikeGpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p0) {
            return Err(Error::InvalidParameter(format!("p0 must lie in [0,1], got {}", self.p0)));
        }
        for (name, v) in [
            ("a_sigma_mu", self.a_sigma_mu),
            ("b_sigma_mu", self.b_sigma_mu),
            ("a_rho", self.a_rho),
            ("b_rho", self.b_rho),
            ("proposal_sd", self.proposal_sd),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0,1], got {}",
                self.alpha
            )));
        }
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return Err(Error::InvalidParameter(format!(
                "need burn_in < iterations (got {} / {})",
                self.burn_in, self.iterations
            )));
        }
        Ok(())
    }
}

/// Current sampler state.
#[derive(Debug, Clone)]
pub struct SpikeGpState {
    pub included: bool,
    /// GP scale; exactly 0 when excluded.
    pub sigma_mu_sq: f64,
    pub rho: f64,
    pub beta: DVector<f64>,
    pub sigma_sq: f64,
}

/// Tempered marginal log-likelihood `alpha * log Normal(Y; X b, S)` with
/// `S = sigma_mu^2 K_rho + sigma^2 I` (excluded: `S = sigma^2 I`).
pub fn marginal_log_likelihood(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    state: &SpikeGpState,
    alpha: f64,
    orthogonalize: bool,
) -> Result<f64> {
    let n = y.len();
    if n == 0 {
        return Ok(0.0);
    }
    let resid = residual(x, y, &state.beta);
    if state.included {
        let k = slab_gram(x, state.rho, orthogonalize)?;
        let chol = scaled_covariance_chol(&k, state.sigma_mu_sq, state.sigma_sq)?;
        Ok(alpha * linalg::gaussian_logpdf(&chol, &resid))
    } else {
        Ok(alpha * iid_log_density(&resid, state.sigma_sq))
    }
}

fn residual(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> DVector<f64> {
    if beta.len() == 0 {
        y.clone()
    } else {
        y - x * beta
    }
}

fn iid_log_density(resid: &DVector<f64>, sigma_sq: f64) -> f64 {
    let n = resid.len() as f64;
    -0.5 * n * (2.0 * std::f64::consts::PI * sigma_sq).ln() - 0.5 * resid.norm_squared() / sigma_sq
}

/// Slab Gram matrix for a given inverse lengthscale, orthogonalized on demand.
fn slab_gram(x: &DMatrix<f64>, rho: f64, orthogonalize: bool) -> Result<DMatrix<f64>> {
    let k = KernelSpec::squared_exponential(rho)?.gram(x)?;
    if !orthogonalize || x.ncols() == 0 {
        return Ok(k);
    }
    let kx = &k * x;
    let xkx = x.transpose() * &kx;
    let w = linalg::invert_spd(&xkx, "X'KX")?;
    let mut k_star = k - &kx * w * kx.transpose();
    linalg::symmetrize(&mut k_star);
    Ok(k_star)
}

fn scaled_covariance_chol(
    k: &DMatrix<f64>,
    sigma_mu_sq: f64,
    sigma_sq: f64,
) -> Result<Cholesky<f64, Dyn>> {
    let n = k.nrows();
    let mut m = k * sigma_mu_sq;
    for i in 0..n {
        m[(i, i)] += sigma_sq;
    }
    linalg::cholesky_with_jitter(&m)
}

/// Posterior inclusion probability `Pi(r != 0 | data)` from a chain.
pub fn inclusion_probability(chain: &McmcChain) -> Result<f64> {
    chain.inclusion_probability()
}

pub struct SpikeGpSampler {
    x: DMatrix<f64>,
    y: DVector<f64>,
    config: SpikeGpConfig,
    state: SpikeGpState,
    n: usize,
    p: usize,
    xtx_chol: Option<Cholesky<f64, Dyn>>,
    /// Slab Gram for the current rho (kept while included).
    k_star: Option<DMatrix<f64>>,
    /// Factorization of the current marginal covariance (included only).
    cov_chol: Option<Cholesky<f64, Dyn>>,
    /// Tempered marginal log-likelihood at the current state.
    log_lik: f64,
}

impl SpikeGpSampler {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, config: SpikeGpConfig) -> Result<Self> {
        config.validate()?;
        let n = y.len();
        if x.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows but targets has {n} entries",
                x.nrows()
            )));
        }
        let p = if n == 0 { 0 } else { x.ncols() };
        let (beta, sigma_sq, xtx_chol) = if n > 0 && p > 0 {
            let beta = linalg::least_squares(&x, &y)?;
            let ssr = (&y - &x * &beta).norm_squared();
            let dof = (n.saturating_sub(p)).max(1) as f64;
            let xtx = x.transpose() * &x;
            let chol = Cholesky::new(xtx)
                .ok_or_else(|| Error::RankDeficient("X'X is singular".into()))?;
            (beta, (ssr / dof).max(1e-12), Some(chol))
        } else if n > 0 {
            (DVector::zeros(0), (y.norm_squared() / n as f64).max(1e-12), None)
        } else {
            (DVector::zeros(0), 1.0, None)
        };
        let state = SpikeGpState {
            included: false,
            sigma_mu_sq: 0.0,
            rho: 1.0,
            beta,
            sigma_sq,
        };
        let log_lik = config.alpha * iid_log_density(&residual(&x, &y, &state.beta), state.sigma_sq);
        Ok(Self {
            x,
            y,
            config,
            state,
            n,
            p,
            xtx_chol,
            k_star: None,
            cov_chol: None,
            log_lik,
        })
    }

    pub fn state(&self) -> &SpikeGpState {
        &self.state
    }

    fn ll_included(&self, chol: &Cholesky<f64, Dyn>, beta: &DVector<f64>) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.config.alpha * linalg::gaussian_logpdf(chol, &residual(&self.x, &self.y, beta))
    }

    fn ll_excluded(&self, beta: &DVector<f64>, sigma_sq: f64) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.config.alpha * iid_log_density(&residual(&self.x, &self.y, beta), sigma_sq)
    }

    fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
        // NaN ratios compare false and are rejected.
        rng.random::<f64>().ln() < log_ratio
    }

    /// One full sweep: inclusion jump, within-slab walks, conjugate beta,
    /// noise update. Each move holds detailed balance against the tempered
    /// posterior.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        self.jump_move(rng)?;
        if self.state.included {
            self.sigma_mu_move(rng)?;
            self.rho_move(rng)?;
        }
        self.beta_move(rng)?;
        self.sigma_move(rng)?;
        Ok(())
    }

    /// Prior-proposal reversible jump on the inclusion indicator: the slab
    /// proposal density cancels the slab prior, leaving the prior odds times
    /// the tempered likelihood ratio.
    fn jump_move<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let cfg = &self.config;
        if !self.state.included {
            if cfg.p0 >= 1.0 {
                return Ok(());
            }
            let sigma_mu_sq = inv_gamma_sample(cfg.a_sigma_mu, cfg.b_sigma_mu, rng)?;
            let rho = inv_gamma_sample(cfg.a_rho, cfg.b_rho, rng)?;
            let (k_star, chol, ll) = if self.n > 0 {
                let k_star = match slab_gram(&self.x, rho, cfg.orthogonalize) {
                    Ok(k) => k,
                    Err(e) => {
                        log::warn!("slab proposal rejected (rho={rho:.3e}): {e}");
                        return Ok(());
                    }
                };
                let chol = match scaled_covariance_chol(&k_star, sigma_mu_sq, self.state.sigma_sq) {
                    Ok(c) => c,
                    Err(e) => {
                        log::warn!("slab proposal rejected: {e}");
                        return Ok(());
                    }
                };
                let ll = self.ll_included(&chol, &self.state.beta);
                (Some(k_star), Some(chol), ll)
            } else {
                (None, None, 0.0)
            };
            let log_ratio = ((1.0 - cfg.p0) / cfg.p0).ln() + ll - self.log_lik;
            if Self::accept(log_ratio, rng) {
                self.state.included = true;
                self.state.sigma_mu_sq = sigma_mu_sq;
                self.state.rho = rho;
                self.k_star = k_star;
                self.cov_chol = chol;
                self.log_lik = ll;
            }
        } else {
            let ll = self.ll_excluded(&self.state.beta, self.state.sigma_sq);
            let log_ratio = (cfg.p0 / (1.0 - cfg.p0)).ln() + ll - self.log_lik;
            if Self::accept(log_ratio, rng) {
                self.state.included = false;
                self.state.sigma_mu_sq = 0.0;
                self.k_star = None;
                self.cov_chol = None;
                self.log_lik = ll;
            }
        }
        Ok(())
    }

    fn sigma_mu_move<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let cfg = &self.config;
        let cur = self.state.sigma_mu_sq;
        let proposal = cur * (cfg.proposal_sd * rng.sample::<f64, _>(StandardNormal)).exp();
        let (chol, ll) = if self.n > 0 {
            let k = self.k_star.as_ref().expect("slab gram cached while included");
            let chol = match scaled_covariance_chol(k, proposal, self.state.sigma_sq) {
                Ok(c) => c,
                Err(e) => {
                    log::warn!("sigma_mu proposal rejected: {e}");
                    return Ok(());
                }
            };
            let ll = self.ll_included(&chol, &self.state.beta);
            (Some(chol), ll)
        } else {
            (None, 0.0)
        };
        let log_ratio = ll - self.log_lik
            + inv_gamma_logpdf(proposal, cfg.a_sigma_mu, cfg.b_sigma_mu)
            - inv_gamma_logpdf(cur, cfg.a_sigma_mu, cfg.b_sigma_mu)
            + proposal.ln()
            - cur.ln();
        if Self::accept(log_ratio, rng) {
            self.state.sigma_mu_sq = proposal;
            if chol.is_some() {
                self.cov_chol = chol;
            }
            self.log_lik = ll;
        }
        Ok(())
    }

    fn rho_move<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let cfg = &self.config;
        let cur = self.state.rho;
        let proposal = cur * (cfg.proposal_sd * rng.sample::<f64, _>(StandardNormal)).exp();
        let (k_star, chol, ll) = if self.n > 0 {
            let k_star = match slab_gram(&self.x, proposal, cfg.orthogonalize) {
                Ok(k) => k,
                Err(e) => {
                    log::warn!("rho proposal rejected (rho={proposal:.3e}): {e}");
                    return Ok(());
                }
            };
            let chol = match scaled_covariance_chol(&k_star, self.state.sigma_mu_sq, self.state.sigma_sq)
            {
                Ok(c) => c,
                Err(e) => {
                    log::warn!("rho proposal rejected: {e}");
                    return Ok(());
                }
            };
            let ll = self.ll_included(&chol, &self.state.beta);
            (Some(k_star), Some(chol), ll)
        } else {
            (None, None, 0.0)
        };
        let log_ratio = ll - self.log_lik + inv_gamma_logpdf(proposal, cfg.a_rho, cfg.b_rho)
            - inv_gamma_logpdf(cur, cfg.a_rho, cfg.b_rho)
            + proposal.ln()
            - cur.ln();
        if Self::accept(log_ratio, rng) {
            self.state.rho = proposal;
            if k_star.is_some() {
                self.k_star = k_star;
                self.cov_chol = chol;
            }
            self.log_lik = ll;
        }
        Ok(())
    }

    /// Conjugate draw of beta under the marginal covariance with a flat
    /// prior; the tempered precision is `alpha X' S^{-1} X`.
    fn beta_move<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        if self.p == 0 || self.n == 0 {
            return Ok(());
        }
        let alpha = self.config.alpha;
        if self.state.included {
            let chol = self.cov_chol.as_ref().expect("covariance cached while included");
            let s = chol.solve(&self.x);
            let mut a = self.x.transpose() * s;
            linalg::symmetrize(&mut a);
            let a_chol = Cholesky::new(a).ok_or_else(|| {
                Error::RankDeficient("X'S^{-1}X is singular in the beta update".into())
            })?;
            let z = chol.solve(&self.y);
            let mean = a_chol.solve(&(self.x.transpose() * z));
            let mut cov = a_chol.inverse() / alpha;
            linalg::symmetrize(&mut cov);
            self.state.beta = linalg::sample_mvn(&mean, &cov, rng)?;
            let chol = self.cov_chol.as_ref().expect("covariance cached");
            self.log_lik = self.ll_included(chol, &self.state.beta);
        } else {
            let xtx_chol = self.xtx_chol.as_ref().expect("X'X cached when p > 0");
            let mean = xtx_chol.solve(&(self.x.transpose() * &self.y));
            let mut cov = xtx_chol.inverse() * (self.state.sigma_sq / alpha);
            linalg::symmetrize(&mut cov);
            self.state.beta = linalg::sample_mvn(&mean, &cov, rng)?;
            self.log_lik = self.ll_excluded(&self.state.beta, self.state.sigma_sq);
        }
        Ok(())
    }

    /// Noise update: conjugate InvGamma when the GP is excluded (the tempered
    /// iid likelihood stays conjugate), random-walk Metropolis inside the
    /// slab where sigma^2 enters the dense covariance.
    fn sigma_move<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let alpha = self.config.alpha;
        if !self.state.included {
            let ssr = if self.n > 0 {
                residual(&self.x, &self.y, &self.state.beta).norm_squared()
            } else {
                0.0
            };
            let shape = NOISE_PRIOR_SHAPE + 0.5 * alpha * self.n as f64;
            let scale = NOISE_PRIOR_SCALE + 0.5 * alpha * ssr;
            self.state.sigma_sq = inv_gamma_sample(shape, scale, rng)?;
            self.log_lik = self.ll_excluded(&self.state.beta, self.state.sigma_sq);
            return Ok(());
        }
        let cur = self.state.sigma_sq;
        let proposal = cur * (self.config.proposal_sd * rng.sample::<f64, _>(StandardNormal)).exp();
        let (chol, ll) = if self.n > 0 {
            let k = self.k_star.as_ref().expect("slab gram cached while included");
            let chol = match scaled_covariance_chol(k, self.state.sigma_mu_sq, proposal) {
                Ok(c) => c,
                Err(e) => {
                    log::warn!("sigma proposal rejected: {e}");
                    return Ok(());
                }
            };
            let ll = self.ll_included(&chol, &self.state.beta);
            (Some(chol), ll)
        } else {
            (None, 0.0)
        };
        let log_ratio = ll - self.log_lik
            + inv_gamma_logpdf(proposal, NOISE_PRIOR_SHAPE, NOISE_PRIOR_SCALE)
            - inv_gamma_logpdf(cur, NOISE_PRIOR_SHAPE, NOISE_PRIOR_SCALE)
            + proposal.ln()
            - cur.ln();
        if Self::accept(log_ratio, rng) {
            self.state.sigma_sq = proposal;
            if chol.is_some() {
                self.cov_chol = chol;
            }
            self.log_lik = ll;
        }
        Ok(())
    }

    /// Draw `r` at the design points from its Gaussian conditional given the
    /// data and the current state.
    fn conditional_r_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        if !self.state.included || self.n == 0 {
            return Ok(DVector::zeros(self.n));
        }
        let k = self.k_star.as_ref().expect("slab gram cached while included");
        let chol = self.cov_chol.as_ref().expect("covariance cached while included");
        let m = k * self.state.sigma_mu_sq;
        let resid = residual(&self.x, &self.y, &self.state.beta);
        let mean = &m * chol.solve(&resid);
        let mut cov = &m - &m * chol.solve(&m);
        linalg::symmetrize(&mut cov);
        linalg::sample_mvn(&mean, &cov, rng)
    }

    /// Run the configured number of sweeps and collect retained draws.
    pub fn run<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<McmcChain> {
        let cfg = self.config.clone();
        let projector = if cfg.store_function_draws && self.n > self.p && self.p > 0 {
            LinearProjector::new(&self.x).ok()
        } else {
            None
        };
        let mut chain = McmcChain::default();
        let mut mu_sum = DVector::zeros(self.n);
        let mut mu_draws = Vec::new();
        for it in 0..cfg.iterations {
            self.step(rng)?;
            if it < cfg.burn_in {
                continue;
            }
            let mut r_squared = None;
            if cfg.store_function_draws {
                let r = self.conditional_r_draw(rng)?;
                let mu = if self.p > 0 {
                    &self.x * &self.state.beta + &r
                } else {
                    r
                };
                if let Some(proj) = &projector {
                    r_squared = proj.project(&mu).ok().map(|s| s.r_squared);
                }
                mu_sum += &mu;
                mu_draws.push(mu);
            }
            chain.draws.push(ChainDraw {
                beta: self.state.beta.clone(),
                sigma: self.state.sigma_sq.sqrt(),
                included: self.state.included,
                all_empty: !self.state.included,
                sigma_mu_sq: Some(self.state.sigma_mu_sq),
                rho: Some(self.state.rho),
                r_squared,
            });
        }
        if cfg.store_function_draws && !chain.draws.is_empty() {
            chain.mu_mean = Some(mu_sum / chain.draws.len() as f64);
            chain.mu_draws = Some(mu_draws);
        }
        Ok(chain)
    }
}

/// Convenience wrapper: build the sampler and run one chain.
pub fn run_chain<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    config: &SpikeGpConfig,
    rng: &mut R,
) -> Result<McmcChain> {
    SpikeGpSampler::new(x.clone(), y.clone(), config.clone())?.run(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::derive_rng;

    fn small_data(n: usize, p: usize, label: &str) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = derive_rng(13, &["spike", label]);
        let x = DMatrix::from_fn(n, p, |_, j| {
            if j == 0 {
                1.0
            } else {
                rng.sample::<f64, _>(StandardNormal)
            }
        });
        let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        (x, y)
    }

    #[test]
    fn excluded_likelihood_is_iid_normal() {
        let (x, y) = small_data(12, 2, "iid");
        let state = SpikeGpState {
            included: false,
            sigma_mu_sq: 0.0,
            rho: 1.0,
            beta: DVector::zeros(2),
            sigma_sq: 1.0,
        };
        let alpha = 0.6;
        let ll = marginal_log_likelihood(&x, &y, &state, alpha, true).unwrap();
        let direct: f64 = y
            .iter()
            .map(|v| -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * v * v)
            .sum();
        assert!((ll - alpha * direct).abs() < 1e-10);
    }

    #[test]
    fn zero_slab_scale_matches_excluded_value() {
        let (x, y) = small_data(10, 2, "spike-continuity");
        let beta = DVector::from_vec(vec![0.3, -0.2]);
        let on = SpikeGpState {
            included: true,
            sigma_mu_sq: 0.0,
            rho: 1.3,
            beta: beta.clone(),
            sigma_sq: 0.8,
        };
        let off = SpikeGpState {
            included: false,
            sigma_mu_sq: 0.0,
            rho: 1.3,
            beta,
            sigma_sq: 0.8,
        };
        let a = marginal_log_likelihood(&x, &y, &on, 1.0, false).unwrap();
        let b = marginal_log_likelihood(&x, &y, &off, 1.0, false).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn marginal_likelihood_matches_dense_oracle() {
        let (x, y) = small_data(8, 2, "oracle");
        for orthogonalize in [false, true] {
            let state = SpikeGpState {
                included: true,
                sigma_mu_sq: 0.7,
                rho: 0.9,
                beta: DVector::from_vec(vec![0.1, 0.4]),
                sigma_sq: 1.2,
            };
            let alpha = 0.8;
            let ll = marginal_log_likelihood(&x, &y, &state, alpha, orthogonalize).unwrap();

            // Dense oracle: explicit inverse and determinant.
            let k = slab_gram(&x, state.rho, orthogonalize).unwrap();
            let n = y.len();
            let cov = &k * state.sigma_mu_sq + DMatrix::<f64>::identity(n, n) * state.sigma_sq;
            let inv = cov.clone().try_inverse().unwrap();
            let det = cov.determinant();
            let resid = &y - &x * &state.beta;
            let direct = -0.5 * (n as f64) * (2.0 * std::f64::consts::PI).ln()
                - 0.5 * det.ln()
                - 0.5 * (resid.transpose() * inv * &resid)[(0, 0)];
            assert!(
                (ll - alpha * direct).abs() < 1e-8,
                "orthogonalize={orthogonalize}: {ll} vs {}",
                alpha * direct
            );
        }
    }

    #[test]
    fn full_spike_mass_never_includes() {
        let (x, y) = small_data(20, 2, "p0-one");
        let config = SpikeGpConfig {
            p0: 1.0,
            iterations: 200,
            burn_in: 10,
            ..Default::default()
        };
        let mut rng = derive_rng(2, &["spike", "p0-one-run"]);
        let chain = run_chain(&x, &y, &config, &mut rng).unwrap();
        assert_eq!(chain.inclusion_probability().unwrap(), 0.0);
    }

    #[test]
    fn single_retained_draw_when_burnin_is_all_but_one() {
        let (x, y) = small_data(10, 2, "one-draw");
        let config = SpikeGpConfig {
            iterations: 21,
            burn_in: 20,
            ..Default::default()
        };
        let mut rng = derive_rng(3, &["spike", "one-draw-run"]);
        let chain = run_chain(&x, &y, &config, &mut rng).unwrap();
        assert_eq!(chain.len(), 1);
    }

    #[test]
    fn fixed_seed_reproduces_chain_exactly() {
        let (x, y) = small_data(15, 2, "determinism");
        let config = SpikeGpConfig {
            iterations: 120,
            burn_in: 20,
            ..Default::default()
        };
        let run = || {
            let mut rng = derive_rng(9, &["spike", "determinism-run"]);
            run_chain(&x, &y, &config, &mut rng).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.len(), b.len());
        for (da, db) in a.draws.iter().zip(&b.draws) {
            assert_eq!(da.beta, db.beta);
            assert_eq!(da.sigma, db.sigma);
            assert_eq!(da.included, db.included);
            assert_eq!(da.sigma_mu_sq, db.sigma_mu_sq);
            assert_eq!(da.rho, db.rho);
        }
    }

    /// With no data the chain must target the prior exactly.
    #[test]
    fn prior_recovery_without_data() {
        let x = DMatrix::<f64>::zeros(0, 0);
        let y = DVector::<f64>::zeros(0);
        let config = SpikeGpConfig {
            iterations: 11000,
            burn_in: 1000,
            ..Default::default()
        };
        let mut rng = derive_rng(4, &["spike", "prior-recovery"]);
        let chain = run_chain(&x, &y, &config, &mut rng).unwrap();
        assert_eq!(chain.len(), 10000);

        // Inclusion frequency ~ Binomial(1 - p0) within 3 SEs.
        let freq = chain.inclusion_probability().unwrap();
        let se = (0.5 * 0.5 / 10000.0f64).sqrt();
        assert!((freq - 0.5).abs() < 3.0 * se + 0.01, "inclusion frequency {freq}");

        // Conditional on inclusion, sigma_mu^2 and rho follow InvGamma(1,1).
        let ks = |values: &mut Vec<f64>| -> f64 {
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = values.len() as f64;
            values
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let f = crate::dist::inv_gamma_cdf(v, 1.0, 1.0);
                    let lo = (i as f64 / n - f).abs();
                    let hi = ((i + 1) as f64 / n - f).abs();
                    lo.max(hi)
                })
                .fold(0.0, f64::max)
        };
        let mut sigma_mu: Vec<f64> = chain
            .draws
            .iter()
            .filter(|d| d.included)
            .filter_map(|d| d.sigma_mu_sq)
            .collect();
        let mut rho: Vec<f64> = chain
            .draws
            .iter()
            .filter(|d| d.included)
            .filter_map(|d| d.rho)
            .collect();
        assert!(sigma_mu.len() > 3000);
        let d1 = ks(&mut sigma_mu);
        let d2 = ks(&mut rho);
        assert!(d1 < 0.05, "sigma_mu^2 KS distance {d1}");
        assert!(d2 < 0.05, "rho KS distance {d2}");

        // The noise variance is refreshed from its InvGamma(1,1) prior too.
        let mut sigma_sq: Vec<f64> = chain.draws.iter().map(|d| d.sigma * d.sigma).collect();
        let d3 = ks(&mut sigma_sq);
        assert!(d3 < 0.05, "sigma^2 KS distance {d3}");
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let bad = |f: fn(&mut SpikeGpConfig)| {
            let mut c = SpikeGpConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.p0 = -0.1));
        assert!(bad(|c| c.p0 = 1.5));
        assert!(bad(|c| c.alpha = 0.0));
        assert!(bad(|c| c.alpha = 1.2));
        assert!(bad(|c| c.burn_in = c.iterations));
        assert!(bad(|c| c.a_rho = 0.0));
        assert!(SpikeGpConfig::default().validate().is_ok());
    }

    #[test]
    fn function_draws_respect_orthogonality() {
        // With the orthogonalized slab, conditional r draws satisfy X'r ~ 0.
        let (x, y) = small_data(25, 2, "orth-draws");
        let config = SpikeGpConfig {
            p0: 0.0,
            iterations: 40,
            burn_in: 20,
            store_function_draws: true,
            ..Default::default()
        };
        let mut rng = derive_rng(6, &["spike", "orth-draw-run"]);
        let chain = run_chain(&x, &y, &config, &mut rng).unwrap();
        let mu_draws = chain.mu_draws.as_ref().unwrap();
        assert_eq!(mu_draws.len(), chain.len());
        for (draw, mu) in chain.draws.iter().zip(mu_draws) {
            let r = mu - &x * &draw.beta;
            let s = (x.transpose() * r).amax();
            assert!(s < 1e-4, "X'r = {s}");
        }
    }
}
