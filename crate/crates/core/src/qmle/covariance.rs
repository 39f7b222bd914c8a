//! Sandwich covariance of the segment QMLE and the coefficient-nullity test.

use nalgebra::DMatrix;

use super::{SegmentFit, SegmentRange};
use crate::error::{domain, Error, Result};
use crate::models::MeanFamily;

/// Largest condition number of `Ĵ` accepted before declaring the fit
/// non-identified.
pub const MAX_CONDITION: f64 = 1e10;

/// `Σ̂ = Ĵ⁻¹ Î Ĵ⁻¹` with
/// `Ĵ = n⁻¹ Σ λ̂_t⁻¹ ∂λ̂_t ∂λ̂_t'` and `Î = n⁻¹ Σ (Y_t/λ̂_t − 1)² ∂λ̂_t ∂λ̂_t'`
/// summed over the segment.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub j_hat: DMatrix<f64>,
    pub i_hat: DMatrix<f64>,
    pub sigma_hat: DMatrix<f64>,
    /// `sqrt(Σ̂_ii / n_seg)`.
    pub std_errors: Vec<f64>,
    /// Average Hessian of the quasi-log-likelihood, `n⁻¹ Σ ∂²ℓ̂_t/∂θ∂θ'`.
    pub h_hat: DMatrix<f64>,
    pub n_seg: usize,
}

impl CovarianceEstimate {
    /// Standard errors from `Ĵ⁻¹` alone, valid only when the conditional
    /// law really is Poisson.
    pub fn naive_std_errors(&self) -> Vec<f64> {
        let inv = self
            .j_hat
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .unwrap_or_else(|| {
                DMatrix::from_element(self.j_hat.nrows(), self.j_hat.ncols(), f64::NAN)
            });
        (0..inv.nrows())
            .map(|i| (inv[(i, i)] / self.n_seg as f64).sqrt())
            .collect()
    }
}

pub fn sandwich_covariance(
    y: &[u64],
    range: SegmentRange,
    fit: &SegmentFit,
    family: &MeanFamily,
) -> Result<CovarianceEstimate> {
    range.validate(y.len())?;
    if !fit.converged {
        return Err(domain("covariance requires a converged fit"));
    }
    let d = family.dim();
    if range.len() <= d {
        return Err(domain(format!(
            "segment of length {} is too short for {d} parameters",
            range.len()
        )));
    }
    let seg = range.slice(y);
    let lambda = family.truncated_mean_path(&fit.theta_hat, seg)?;
    let grad = family.mean_gradient_path(&fit.theta_hat, seg)?;
    let hess = family.mean_hessian_path(&fit.theta_hat, seg)?;
    assemble(seg, &lambda, &grad, &hess)
}

pub(crate) fn assemble(
    y: &[u64],
    lambda: &[f64],
    grad: &DMatrix<f64>,
    hess: &[DMatrix<f64>],
) -> Result<CovarianceEstimate> {
    let n = y.len();
    let d = grad.ncols();
    let mut j = DMatrix::zeros(d, d);
    let mut i_mat = DMatrix::zeros(d, d);
    let mut h = DMatrix::zeros(d, d);
    for t in 0..n {
        let g = grad.row(t).transpose();
        let outer = &g * g.transpose();
        let lam = lambda[t];
        let ratio = y[t] as f64 / lam;
        j += &outer / lam;
        i_mat += &outer * (ratio - 1.0).powi(2);
        h += &outer * (-ratio / lam) + &hess[t] * (ratio - 1.0);
    }
    let scale = 1.0 / n as f64;
    j *= scale;
    i_mat *= scale;
    h *= scale;

    let eig = j.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Singular { condition });
    }
    let j_inv = j
        .clone()
        .cholesky()
        .ok_or(Error::Singular { condition })?
        .inverse();
    let sigma = &j_inv * &i_mat * &j_inv;
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    let std_errors = (0..d)
        .map(|k| (sigma[(k, k)].max(0.0) * scale).sqrt())
        .collect();
    Ok(CovarianceEstimate {
        j_hat: j,
        i_hat: i_mat,
        sigma_hat: sigma,
        std_errors,
        h_hat: h,
        n_seg: n,
    })
}

/// Two-sided Wald test of `θ_i = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaldTest {
    pub z: f64,
    pub p_value: f64,
}

/// Test of nullity of one coefficient: `z = θ̂_i / se_i` against a standard
/// normal.
pub fn wald_tnoc(fit: &SegmentFit, cov: &CovarianceEstimate, coord: usize) -> Result<WaldTest> {
    let (Some(&theta), Some(&se)) = (fit.theta_hat.get(coord), cov.std_errors.get(coord)) else {
        return Err(domain(format!("coordinate {coord} out of range")));
    };
    if !(se > 0.0 && se.is_finite()) {
        return Err(domain(format!(
            "standard error of coordinate {coord} is not positive"
        )));
    }
    let z = theta / se;
    let p_value = libm::erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
    Ok(WaldTest { z, p_value })
}
