//! Dense linear-algebra helpers shared by the model modules.

use nalgebra::linalg::Cholesky;
use nalgebra::{DMatrix, DVector, Dyn};
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Relative eigenvalue tolerance used when checking positive semi-definiteness.
pub const PSD_TOL: f64 = 1e-8;

/// Replace `m` with its symmetric part `(m + m')/2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Cholesky factorization with a single jitter retry.
///
/// On failure a ridge of `1e-10 * trace(K)/n` is added to the diagonal and the
/// event is logged; a second failure is a hard error.
pub fn cholesky_with_jitter(k: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let n = k.nrows();
    if n != k.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "cholesky requires a square matrix, got {}x{}",
            n,
            k.ncols()
        )));
    }
    if let Some(c) = Cholesky::new(k.clone()) {
        return Ok(c);
    }
    let jitter = 1e-10 * k.trace() / (n.max(1) as f64);
    log::warn!("cholesky failed; retrying with jitter {jitter:.3e} on the diagonal");
    let mut kj = k.clone();
    for i in 0..n {
        kj[(i, i)] += jitter;
    }
    Cholesky::new(kj).ok_or_else(|| {
        Error::Factorization(format!(
            "cholesky failed on a {n}x{n} matrix even after jitter {jitter:.3e}"
        ))
    })
}

/// Log-density of `Normal(0, K)` at `resid`, given a factorization of `K`.
pub fn gaussian_logpdf(chol: &Cholesky<f64, Dyn>, resid: &DVector<f64>) -> f64 {
    let n = resid.len() as f64;
    let half_log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    let z = chol.solve(resid);
    -0.5 * n * (2.0 * std::f64::consts::PI).ln() - half_log_det - 0.5 * resid.dot(&z)
}

/// Draw `mean + L z` with `L L' = cov`, applying the jitter-retry policy.
pub fn sample_mvn<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let n = mean.len();
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    let chol = cholesky_with_jitter(cov)?;
    let z = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
    Ok(mean + chol.l_dirty().lower_triangle() * z)
}

/// Draw a vector of iid standard normals.
pub fn standard_normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `true` when `x` has full column rank (singular values above a relative tolerance).
pub fn has_full_column_rank(x: &DMatrix<f64>) -> bool {
    let p = x.ncols();
    if x.nrows() < p {
        return false;
    }
    if p == 0 {
        return true;
    }
    let svd = x.clone().svd(false, false);
    let sv_max = svd.singular_values.max();
    svd.rank(1e-10 * sv_max.max(1.0)) == p
}

/// Invert a small symmetric positive-definite matrix (direct inversion is
/// acceptable only for P-by-P Gram blocks).
pub fn invert_spd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = Cholesky::new(m.clone())
        .ok_or_else(|| Error::RankDeficient(format!("{what} is singular or not positive definite")))?;
    Ok(chol.inverse())
}

/// Ordinary least squares `argmin ||y - X b||` via the normal equations.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows but target has {} entries",
            x.nrows(),
            y.len()
        )));
    }
    if !has_full_column_rank(x) {
        return Err(Error::RankDeficient(
            "design matrix does not have full column rank".into(),
        ));
    }
    let xtx = x.transpose() * x;
    let chol = Cholesky::new(xtx).ok_or_else(|| {
        Error::RankDeficient("normal equations are singular (rank-deficient design)".into())
    })?;
    Ok(chol.solve(&(x.transpose() * y)))
}

/// Standard-normal quantile, used for credible intervals.
pub fn normal_quantile(p: f64) -> f64 {
    use statrs::distribution::ContinuousCDF;
    statrs::distribution::Normal::new(0.0, 1.0)
        .expect("unit normal")
        .inverse_cdf(p)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let eig = nalgebra::linalg::SymmetricEigen::new(m.clone());
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Spectral norm (largest absolute eigenvalue) of a symmetric matrix.
pub fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let eig = nalgebra::linalg::SymmetricEigen::new(m.clone());
    eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
}

/// Max absolute entry of a matrix, 0 for empty.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
}
