//! Posterior projection and misfit-diagnosis tools: linear projection with
//! summary R-squared, KL projection for probability fits, and a greedy CART
//! fit to residuals.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::tree::TreeNode;

/// Result of projecting a fitted function onto the linear predictors.
#[derive(Debug, Clone)]
pub struct ProjectionSummary {
    pub beta_star: DVector<f64>,
    pub r_squared: f64,
    pub sse: f64,
}

/// Precomputed projector `B = (X'X)^{-1} X'` for repeated per-draw use.
#[derive(Debug, Clone)]
pub struct LinearProjector {
    x: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl LinearProjector {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        let n = x.nrows();
        let p = x.ncols();
        if n <= p {
            return Err(Error::InvalidParameter(format!(
                "projection needs more rows than columns (N={n}, P={p})"
            )));
        }
        if !linalg::has_full_column_rank(x) {
            return Err(Error::RankDeficient(
                "projection design does not have full column rank".into(),
            ));
        }
        let g_inv = linalg::invert_spd(&(x.transpose() * x), "X'X")?;
        Ok(Self {
            x: x.clone(),
            b: g_inv * x.transpose(),
        })
    }

    pub fn project(&self, mu: &DVector<f64>) -> Result<ProjectionSummary> {
        if mu.len() != self.x.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "fitted values have length {} but design has {} rows",
                mu.len(),
                self.x.nrows()
            )));
        }
        let mu_bar = mu.mean();
        let total_ss: f64 = mu.iter().map(|v| (v - mu_bar) * (v - mu_bar)).sum();
        if total_ss <= 0.0 {
            return Err(Error::Degenerate(
                "fitted function is constant; summary R-squared is undefined".into(),
            ));
        }
        let beta_star = &self.b * mu;
        let resid = mu - &self.x * &beta_star;
        let sse = resid.norm_squared();
        Ok(ProjectionSummary {
            beta_star,
            r_squared: 1.0 - sse / total_ss,
            sse,
        })
    }
}

/// Least-squares projection of `mu` onto the columns of `x`, with the
/// summary R-squared `1 - SSE / sum_i (mu_i - mean(mu))^2`.
pub fn linear_projection(mu: &DVector<f64>, x: &DMatrix<f64>) -> Result<ProjectionSummary> {
    LinearProjector::new(x)?.project(mu)
}

/// Apply the projection to every posterior draw.
pub fn project_draws(mu_draws: &[DVector<f64>], x: &DMatrix<f64>) -> Result<Vec<ProjectionSummary>> {
    let projector = LinearProjector::new(x)?;
    mu_draws.iter().map(|m| projector.project(m)).collect()
}

/// CSV of per-draw projection summaries: `draw,beta_*,r_squared,sse`.
pub fn write_projection_csv<W: Write>(summaries: &[ProjectionSummary], out: W) -> Result<()> {
    let p = summaries.first().map_or(0, |s| s.beta_star.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["draw".to_string()];
    header.extend((0..p).map(|j| format!("beta_{j}")));
    header.push("r_squared".into());
    header.push("sse".into());
    w.write_record(&header)?;
    for (i, s) in summaries.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(s.beta_star.iter().map(|b| format!("{b:?}")));
        rec.push(format!("{:?}", s.r_squared));
        rec.push(format!("{:?}", s.sse));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

const KL_BETA_BOUND: f64 = 1e6;

/// Minimize the binary KL divergence between soft labels `probabilities` and
/// a logistic regression `logit^{-1}(x' b)` by Newton iteration with step
/// halving. Converged when the gradient max-norm drops below `tol`.
pub fn kl_projection_logistic(
    probabilities: &DVector<f64>,
    x: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<DVector<f64>> {
    let n = x.nrows();
    let p = x.ncols();
    if probabilities.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "probabilities have length {} but design has {n} rows",
            probabilities.len()
        )));
    }
    if probabilities.iter().any(|&m| !(m > 0.0 && m < 1.0)) {
        return Err(Error::InvalidParameter(
            "probabilities must lie strictly inside (0,1)".into(),
        ));
    }
    if !linalg::has_full_column_rank(x) {
        return Err(Error::RankDeficient(
            "KL projection design does not have full column rank".into(),
        ));
    }

    // Cross-entropy objective; equals the KL divergence up to a constant.
    let objective = |beta: &DVector<f64>| -> f64 {
        let eta = x * beta;
        (0..n)
            .map(|i| {
                let e = eta[i];
                let mu = probabilities[i];
                // -mu*log(p) - (1-mu)*log(1-p) with p = logistic(e),
                // written in the overflow-safe form log(1+exp(e)) - mu*e.
                softplus(e) - mu * e
            })
            .sum()
    };

    let mut beta = DVector::zeros(p);
    let mut f_cur = objective(&beta);
    for _ in 0..max_iter {
        let eta = x * &beta;
        let fitted = eta.map(logistic);
        let grad = x.transpose() * (&fitted - probabilities);
        if grad.amax() < tol {
            return Ok(beta);
        }
        let mut hess = DMatrix::zeros(p, p);
        for i in 0..n {
            let w = fitted[i] * (1.0 - fitted[i]);
            let row = x.row(i);
            for a in 0..p {
                for b in 0..p {
                    hess[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        let chol = nalgebra::linalg::Cholesky::new(hess).ok_or_else(|| {
            Error::RankDeficient("KL projection Hessian is singular".into())
        })?;
        let step = chol.solve(&grad);
        let mut t = 1.0;
        loop {
            let candidate = &beta - t * &step;
            let f_new = objective(&candidate);
            if f_new <= f_cur {
                beta = candidate;
                f_cur = f_new;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                break;
            }
        }
        if beta.amax() > KL_BETA_BOUND {
            return Err(Error::NonConvergence {
                message: format!(
                    "KL projection coefficients exceeded {KL_BETA_BOUND:e} (separation-like divergence)"
                ),
                last: beta.iter().copied().collect(),
            });
        }
    }
    let eta = x * &beta;
    let grad = x.transpose() * (&eta.map(logistic) - probabilities);
    if grad.amax() < tol {
        Ok(beta)
    } else {
        Err(Error::NonConvergence {
            message: format!(
                "KL projection gradient norm {:.3e} above tol {tol:.3e} after {max_iter} iterations",
                grad.amax()
            ),
            last: beta.iter().copied().collect(),
        })
    }
}

pub fn logistic(e: f64) -> f64 {
    1.0 / (1.0 + (-e).exp())
}

fn softplus(e: f64) -> f64 {
    if e > 30.0 {
        e
    } else {
        (1.0 + e.exp()).ln()
    }
}

/// A CART fit to residuals: leaf values are mean residuals of the routed rows.
#[derive(Debug, Clone)]
pub struct CartSummary {
    pub root: TreeNode,
    pub depth_limit: usize,
    pub min_leaf: usize,
}

/// Greedy binary splitting maximizing squared-error reduction, exhaustive
/// over midpoints of sorted unique predictor values. Stops at `depth_limit`,
/// `min_leaf`, or when no split achieves a positive reduction.
pub fn cart_residual_fit(
    residuals: &DVector<f64>,
    x: &DMatrix<f64>,
    depth_limit: usize,
    min_leaf: usize,
) -> Result<CartSummary> {
    let n = x.nrows();
    if residuals.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "residuals have length {} but design has {n} rows",
            residuals.len()
        )));
    }
    if min_leaf == 0 {
        return Err(Error::InvalidParameter("min_leaf must be at least 1".into()));
    }
    if n < 2 * min_leaf {
        return Err(Error::InvalidParameter(format!(
            "need N >= 2*min_leaf (N={n}, min_leaf={min_leaf})"
        )));
    }
    let idx: Vec<usize> = (0..n).collect();
    let root = grow_cart(residuals, x, &idx, 0, depth_limit, min_leaf);
    Ok(CartSummary {
        root,
        depth_limit,
        min_leaf,
    })
}

struct SplitChoice {
    var: usize,
    cutpoint: f64,
    reduction: f64,
}

fn node_stats(residuals: &DVector<f64>, idx: &[usize]) -> (f64, f64) {
    let s: f64 = idx.iter().map(|&i| residuals[i]).sum();
    let ssq: f64 = idx.iter().map(|&i| residuals[i] * residuals[i]).sum();
    (s, ssq)
}

/// Exhaustive best split of one node; `None` when no admissible split has a
/// positive reduction.
pub(crate) fn best_split(
    residuals: &DVector<f64>,
    x: &DMatrix<f64>,
    idx: &[usize],
    min_leaf: usize,
) -> Option<(usize, f64, f64)> {
    let n = idx.len();
    if n < 2 * min_leaf {
        return None;
    }
    let (s, ssq) = node_stats(residuals, idx);
    let node_sse = ssq - s * s / n as f64;
    // Rounding guard: a reduction is real only if it clears the noise floor
    // of the node's own sum of squares.
    let floor = 1e-12 * ssq;
    let mut best: Option<SplitChoice> = None;
    for var in 0..x.ncols() {
        let mut order: Vec<usize> = idx.to_vec();
        order.sort_by(|&a, &b| x[(a, var)].partial_cmp(&x[(b, var)]).unwrap());
        let mut s_left = 0.0;
        let mut ssq_left = 0.0;
        for k in 1..n {
            let i = order[k - 1];
            s_left += residuals[i];
            ssq_left += residuals[i] * residuals[i];
            let v_prev = x[(order[k - 1], var)];
            let v_next = x[(order[k], var)];
            if v_prev == v_next || k < min_leaf || n - k < min_leaf {
                continue;
            }
            let nl = k as f64;
            let nr = (n - k) as f64;
            let s_right = s - s_left;
            let ssq_right = ssq - ssq_left;
            let sse_children =
                (ssq_left - s_left * s_left / nl) + (ssq_right - s_right * s_right / nr);
            let reduction = node_sse - sse_children;
            if reduction > floor && best.as_ref().map_or(true, |b| reduction > b.reduction) {
                best = Some(SplitChoice {
                    var,
                    cutpoint: 0.5 * (v_prev + v_next),
                    reduction,
                });
            }
        }
    }
    best.map(|b| (b.var, b.cutpoint, b.reduction))
}

fn grow_cart(
    residuals: &DVector<f64>,
    x: &DMatrix<f64>,
    idx: &[usize],
    depth: usize,
    depth_limit: usize,
    min_leaf: usize,
) -> TreeNode {
    let (s, _) = node_stats(residuals, idx);
    let mean = s / idx.len() as f64;
    if depth >= depth_limit {
        return TreeNode::leaf(mean);
    }
    match best_split(residuals, x, idx, min_leaf) {
        None => TreeNode::leaf(mean),
        Some((var, cutpoint, _)) => {
            let (left, right): (Vec<usize>, Vec<usize>) =
                idx.iter().partition(|&&i| x[(i, var)] < cutpoint);
            TreeNode::branch(
                var,
                cutpoint,
                grow_cart(residuals, x, &left, depth + 1, depth_limit, min_leaf),
                grow_cart(residuals, x, &right, depth + 1, depth_limit, min_leaf),
            )
        }
    }
}
