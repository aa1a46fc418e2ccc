//! Ordered posterior draws with per-draw scalars and optional in-sample
//! function evaluations.

use std::io::Write;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// One retained posterior draw.
#[derive(Debug, Clone)]
pub struct ChainDraw {
    /// Linear coefficients (original target scale); may be empty.
    pub beta: DVector<f64>,
    /// Noise standard deviation (original target scale).
    pub sigma: f64,
    /// Whether the nonparametric component is active in this draw.
    pub included: bool,
    /// Whether every tree in the ensemble is a bare leaf (always `!included`
    /// for the GP sampler).
    pub all_empty: bool,
    /// Spike-and-GP hyperparameters, when applicable.
    pub sigma_mu_sq: Option<f64>,
    pub rho: Option<f64>,
    /// Summary R-squared of the in-sample fit projected onto the design.
    pub r_squared: Option<f64>,
}

/// Retained draws plus optional in-sample evaluations of the regression
/// function.
#[derive(Debug, Clone, Default)]
pub struct McmcChain {
    pub draws: Vec<ChainDraw>,
    /// Mean of the in-sample regression function over retained draws.
    pub mu_mean: Option<DVector<f64>>,
    /// Per-draw in-sample evaluations (opt-in; can be large).
    pub mu_draws: Option<Vec<DVector<f64>>>,
}

impl McmcChain {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Fraction of retained draws with the nonparametric component active.
    pub fn inclusion_probability(&self) -> Result<f64> {
        if self.draws.is_empty() {
            return Err(Error::EmptyInput("chain has no retained draws".into()));
        }
        let k = self.draws.iter().filter(|d| d.included).count();
        Ok(k as f64 / self.draws.len() as f64)
    }

    /// Fraction of retained draws on the all-empty-forest event.
    pub fn all_empty_probability(&self) -> Result<f64> {
        if self.draws.is_empty() {
            return Err(Error::EmptyInput("chain has no retained draws".into()));
        }
        let k = self.draws.iter().filter(|d| d.all_empty).count();
        Ok(k as f64 / self.draws.len() as f64)
    }

    /// Per-coordinate mean of the beta draws.
    pub fn beta_mean(&self) -> Option<DVector<f64>> {
        let first = self.draws.first()?;
        let p = first.beta.len();
        let mut acc = DVector::zeros(p);
        for d in &self.draws {
            acc += &d.beta;
        }
        Some(acc / self.draws.len() as f64)
    }

    /// Chain CSV for the spike-and-GP sampler:
    /// `draw,included,sigma_mu_sq,rho,beta_*,sigma,r2`.
    pub fn write_spike_csv<W: Write>(&self, out: W) -> Result<()> {
        let p = self.draws.first().map_or(0, |d| d.beta.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["draw".to_string(), "included".into(), "sigma_mu_sq".into(), "rho".into()];
        header.extend((0..p).map(|j| format!("beta_{j}")));
        header.push("sigma".into());
        header.push("r2".into());
        w.write_record(&header)?;
        for (i, d) in self.draws.iter().enumerate() {
            let mut rec = vec![
                i.to_string(),
                (d.included as u8).to_string(),
                fmt_opt(d.sigma_mu_sq),
                fmt_opt(d.rho),
            ];
            rec.extend(d.beta.iter().map(|b| fmt(*b)));
            rec.push(fmt(d.sigma));
            rec.push(fmt_opt(d.r_squared));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Chain CSV for the tree-ensemble sampler:
    /// `draw,beta_*,sigma,all_empty,r2`.
    pub fn write_gbart_csv<W: Write>(&self, out: W) -> Result<()> {
        let p = self.draws.first().map_or(0, |d| d.beta.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["draw".to_string()];
        header.extend((0..p).map(|j| format!("beta_{j}")));
        header.push("sigma".into());
        header.push("all_empty".into());
        header.push("r2".into());
        w.write_record(&header)?;
        for (i, d) in self.draws.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(d.beta.iter().map(|b| fmt(*b)));
            rec.push(fmt(d.sigma));
            rec.push((d.all_empty as u8).to_string());
            rec.push(fmt_opt(d.r_squared));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Flat CSV of per-draw in-sample evaluations: header `mu_0..mu_{N-1}`,
    /// one row per retained draw.
    pub fn write_mu_csv<W: Write>(&self, out: W) -> Result<()> {
        let mu_draws = self.mu_draws.as_ref().ok_or_else(|| {
            Error::EmptyInput("chain did not store per-draw function evaluations".into())
        })?;
        let n = mu_draws.first().map_or(0, |m| m.len());
        let mut w = csv::Writer::from_writer(out);
        w.write_record((0..n).map(|i| format!("mu_{i}")))?;
        for m in mu_draws {
            w.write_record(m.iter().map(|v| fmt(*v)))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fmt(v: f64) -> String {
    // Round-trippable float formatting.
    format!("{v:?}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}
