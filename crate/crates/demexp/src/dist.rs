//! Inverse-gamma helpers and quantile functions used by the samplers.
//!
//! `InvGamma(shape a, scale b)` has density proportional to
//! `x^{-a-1} exp(-b/x)`; equivalently `b / Gamma(a, scale=1)`.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::distribution::ContinuousCDF;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

pub fn inv_gamma_sample<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && scale > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "inverse-gamma parameters must be positive (shape={shape}, scale={scale})"
        )));
    }
    let g = Gamma::new(shape, 1.0)
        .map_err(|e| Error::InvalidParameter(format!("gamma sampler: {e}")))?;
    let mut draw = g.sample(rng);
    // Guard against underflow to 0 for tiny shapes.
    while draw <= 0.0 {
        draw = g.sample(rng);
    }
    Ok(scale / draw)
}

pub fn inv_gamma_logpdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

pub fn inv_gamma_cdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let g = statrs::distribution::Gamma::new(shape, scale).expect("gamma cdf params");
    1.0 - g.cdf(1.0 / x)
}

pub fn chi_squared_quantile(p: f64, df: f64) -> f64 {
    statrs::distribution::ChiSquared::new(df)
        .expect("chi-squared df")
        .inverse_cdf(p)
}
