//! Covariance kernels, Gram matrices, and the orthogonalized (projected) kernel.
//!
//! The projected kernel replaces `k(x, x')` with
//! `k*(x, x') = k(x, x') - k_x' X (X'KX)^{-1} X' k_x'`, which makes every GP
//! draw orthogonal to the columns of the anchor design in-sample
//! (`sum_i r(X_i) X_i = 0`), so the nonparametric part cannot drift into the
//! span of the linear predictors.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::linalg;

/// Declarative covariance-kernel description.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// `sigma_beta_sq * x' y`
    Linear { sigma_beta_sq: f64 },
    /// `exp(-rho * ||x - y||^2)`
    SquaredExponential { rho: f64 },
    /// `exp(-||x - y||)` (Euclidean norm, no lengthscale)
    Laplace,
    /// `amplitude * base(x, y)`
    Scaled { amplitude: f64, base: Box<KernelSpec> },
    /// Sum over children; an empty sum is the zero kernel.
    Sum(Vec<KernelSpec>),
    /// Orthogonalized kernel anchored at a fixed design.
    Projected(ProjectedKernel),
}

/// A base kernel together with the anchor design and the cached projection
/// factors. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedKernel {
    base: Box<KernelSpec>,
    anchor: DMatrix<f64>,
    /// `K X` at the anchor design (N x P).
    kx: DMatrix<f64>,
    /// `(X' K X)^{-1}` (P x P).
    xkx_inv: DMatrix<f64>,
}

impl ProjectedKernel {
    pub fn base(&self) -> &KernelSpec {
        &self.base
    }

    pub fn anchor(&self) -> &DMatrix<f64> {
        &self.anchor
    }
}

fn check_positive(value: f64, name: &str) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be a positive finite real, got {value}"
        )))
    }
}

impl KernelSpec {
    pub fn linear(sigma_beta_sq: f64) -> Result<Self> {
        Ok(Self::Linear {
            sigma_beta_sq: check_positive(sigma_beta_sq, "sigma_beta_sq")?,
        })
    }

    pub fn squared_exponential(rho: f64) -> Result<Self> {
        Ok(Self::SquaredExponential {
            rho: check_positive(rho, "rho")?,
        })
    }

    pub fn laplace() -> Self {
        Self::Laplace
    }

    pub fn scaled(amplitude: f64, base: KernelSpec) -> Result<Self> {
        Ok(Self::Scaled {
            amplitude: check_positive(amplitude, "amplitude")?,
            base: Box::new(base),
        })
    }

    pub fn sum(children: Vec<KernelSpec>) -> Self {
        Self::Sum(children)
    }

    /// The zero kernel (empty sum).
    pub fn zero() -> Self {
        Self::Sum(Vec::new())
    }

    /// Kernel value at a pair of points.
    pub fn eval(&self, x: &DVector<f64>, x_prime: &DVector<f64>) -> Result<f64> {
        if x.len() != x_prime.len() {
            return Err(Error::DimensionMismatch(format!(
                "kernel arguments have lengths {} and {}",
                x.len(),
                x_prime.len()
            )));
        }
        Ok(self.eval_unchecked(x.as_slice(), x_prime.as_slice()))
    }

    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Self::Linear { sigma_beta_sq } => {
                sigma_beta_sq * x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>()
            }
            Self::SquaredExponential { rho } => (-rho * squared_distance(x, y)).exp(),
            Self::Laplace => (-squared_distance(x, y).sqrt()).exp(),
            Self::Scaled { amplitude, base } => amplitude * base.eval_unchecked(x, y),
            Self::Sum(children) => children.iter().map(|c| c.eval_unchecked(x, y)).sum(),
            Self::Projected(p) => {
                let kx_vec = p.base.kernel_vector(&p.anchor, x);
                let ky_vec = p.base.kernel_vector(&p.anchor, y);
                let u = p.anchor.transpose() * kx_vec;
                let v = p.anchor.transpose() * ky_vec;
                p.base.eval_unchecked(x, y) - (u.transpose() * &p.xkx_inv * v)[(0, 0)]
            }
        }
    }

    /// `(k(x, X_1), ..., k(x, X_N))'` against the rows of `design`.
    fn kernel_vector(&self, design: &DMatrix<f64>, x: &[f64]) -> DVector<f64> {
        let rows = Rows::new(design);
        DVector::from_fn(design.nrows(), |i, _| self.eval_unchecked(rows.get(i), x))
    }

    /// Symmetric PSD Gram matrix over the rows of `x`.
    pub fn gram(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::EmptyInput("gram requires at least one design row".into()));
        }
        if let Self::Projected(p) = self {
            return p.projected_gram(x);
        }
        let mut k = DMatrix::zeros(n, n);
        let rows = Rows::new(x);
        for i in 0..n {
            for j in i..n {
                let v = self.eval_unchecked(rows.get(i), rows.get(j));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        linalg::symmetrize(&mut k);
        Ok(k)
    }

    /// Cross-Gram between training rows `x` and query rows `x_new`
    /// (entry `(m, n)` is `k(x_new_m, x_n)`).
    pub fn cross_gram(&self, x: &DMatrix<f64>, x_new: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != x_new.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "training design has {} columns but query design has {}",
                x.ncols(),
                x_new.ncols()
            )));
        }
        if let Self::Projected(p) = self {
            return p.projected_cross_gram(x, x_new);
        }
        let train = Rows::new(x);
        let query = Rows::new(x_new);
        Ok(DMatrix::from_fn(x_new.nrows(), x.nrows(), |m, n| {
            self.eval_unchecked(query.get(m), train.get(n))
        }))
    }

    /// Draw `r ~ Normal(0, gram(x))`.
    ///
    /// For a projected kernel sampled at its own anchor, the draw is taken
    /// from the base kernel and projected afterwards, which keeps
    /// `X' r` at numerical zero even when the base factorization needs jitter.
    pub fn sample_at<R: Rng + ?Sized>(&self, x: &DMatrix<f64>, rng: &mut R) -> Result<DVector<f64>> {
        if let Self::Projected(p) = self {
            if p.anchor == *x {
                let k = p.base.gram(x)?;
                let chol = linalg::cholesky_with_jitter(&k)?;
                let r = chol.l() * linalg::standard_normal_vector(x.nrows(), rng);
                let xtr = p.anchor.transpose() * &r;
                return Ok(&r - &p.kx * (&p.xkx_inv * xtr));
            }
        }
        let k = self.gram(x)?;
        linalg::sample_mvn(&DVector::zeros(x.nrows()), &k, rng)
    }

    /// Build the orthogonalized kernel anchored at `x`.
    pub fn project(&self, x: &DMatrix<f64>) -> Result<KernelSpec> {
        if !linalg::has_full_column_rank(x) {
            return Err(Error::RankDeficient(
                "projection anchor design does not have full column rank".into(),
            ));
        }
        let k = self.gram(x)?;
        let kx = &k * x;
        let xkx = x.transpose() * &kx;
        let xkx_inv = linalg::invert_spd(&xkx, "X'KX")?;
        Ok(KernelSpec::Projected(ProjectedKernel {
            base: Box::new(self.clone()),
            anchor: x.clone(),
            kx,
            xkx_inv,
        }))
    }

    /// Parse a kernel description from config JSON, e.g.
    /// `{"kind":"sum","children":[{"kind":"linear","sigma_beta_sq":100.0},
    /// {"kind":"se","rho":1.0,"amplitude":1.0}]}`.
    pub fn from_config_json(value: &Value) -> Result<KernelSpec> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Config("kernel spec must be a JSON object".into()))?;
        let kind = obj
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Config("kernel spec needs a string field 'kind'".into()))?;
        let num = |key: &str| -> Result<f64> {
            obj.get(key)
                .and_then(Value::as_f64)
                .ok_or_else(|| Error::Config(format!("kernel '{kind}' needs numeric field '{key}'")))
        };
        match kind {
            "linear" => KernelSpec::linear(num("sigma_beta_sq")?),
            "se" => {
                let se = KernelSpec::squared_exponential(num("rho")?)?;
                match obj.get("amplitude").and_then(Value::as_f64) {
                    None => Ok(se),
                    Some(a) if a == 1.0 => Ok(se),
                    Some(a) => KernelSpec::scaled(a, se),
                }
            }
            "laplace" => Ok(KernelSpec::laplace()),
            "scaled" => {
                let child = obj
                    .get("child")
                    .ok_or_else(|| Error::Config("scaled kernel needs a 'child'".into()))?;
                KernelSpec::scaled(num("amplitude")?, Self::from_config_json(child)?)
            }
            "sum" => {
                let children = obj
                    .get("children")
                    .and_then(Value::as_array)
                    .ok_or_else(|| Error::Config("sum kernel needs an array 'children'".into()))?;
                Ok(KernelSpec::sum(
                    children
                        .iter()
                        .map(Self::from_config_json)
                        .collect::<Result<Vec<_>>>()?,
                ))
            }
            other => Err(Error::Config(format!("unknown kernel kind '{other}'"))),
        }
    }

    /// Render back to config JSON. Projected kernels are data-bound and have
    /// no config form.
    pub fn to_config_json(&self) -> Result<Value> {
        Ok(match self {
            Self::Linear { sigma_beta_sq } => {
                serde_json::json!({"kind": "linear", "sigma_beta_sq": sigma_beta_sq})
            }
            Self::SquaredExponential { rho } => serde_json::json!({"kind": "se", "rho": rho}),
            Self::Laplace => serde_json::json!({"kind": "laplace"}),
            Self::Scaled { amplitude, base } => {
                if let Self::SquaredExponential { rho } = base.as_ref() {
                    serde_json::json!({"kind": "se", "rho": rho, "amplitude": amplitude})
                } else {
                    serde_json::json!({"kind": "scaled", "amplitude": amplitude,
                                       "child": base.to_config_json()?})
                }
            }
            Self::Sum(children) => {
                let vals = children
                    .iter()
                    .map(|c| c.to_config_json())
                    .collect::<Result<Vec<_>>>()?;
                serde_json::json!({"kind": "sum", "children": vals})
            }
            Self::Projected(_) => {
                return Err(Error::Config(
                    "projected kernels are bound to a design matrix and cannot be serialized"
                        .into(),
                ))
            }
        })
    }
}

impl ProjectedKernel {
    /// `K*_Z = K_Z - U W U'` with `U = C X` and `C` the base cross-Gram of the
    /// query against the anchor. In-sample this gives `X' K* = 0`.
    fn projected_gram(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let k = self.base.gram(x)?;
        let c = self.base.cross_gram(&self.anchor, x)?;
        let u = c * &self.anchor;
        let mut out = k - &u * &self.xkx_inv * u.transpose();
        linalg::symmetrize(&mut out);
        Ok(out)
    }

    fn projected_cross_gram(&self, x: &DMatrix<f64>, x_new: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let k = self.base.cross_gram(x, x_new)?;
        let c_new = self.base.cross_gram(&self.anchor, x_new)?;
        let c_train = self.base.cross_gram(&self.anchor, x)?;
        let u_new = c_new * &self.anchor;
        let u_train = c_train * &self.anchor;
        Ok(k - u_new * &self.xkx_inv * u_train.transpose())
    }
}

fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Row access with contiguous storage (nalgebra matrices are column-major,
/// so rows are materialized once through the transpose).
struct Rows {
    t: DMatrix<f64>,
}

impl Rows {
    fn new(x: &DMatrix<f64>) -> Self {
        Self { t: x.transpose() }
    }

    fn get(&self, i: usize) -> &[f64] {
        let p = self.t.nrows();
        &self.t.as_slice()[i * p..(i + 1) * p]
    }
}
