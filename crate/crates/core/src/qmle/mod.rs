//! Poisson quasi-maximum likelihood on a single segment.
//!
//! Ranges are 1-based and inclusive, `(i, l)` covering `Y_i, …, Y_l`.
//! The mean recursion restarts at `i` with a zero-padded history, so every
//! segment's likelihood is self-contained.

mod covariance;
mod objective;
mod optimizer;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::models::{FamilyKind, MeanFamily};

pub use covariance::{sandwich_covariance, wald_tnoc, CovarianceEstimate, WaldTest};
pub(crate) use objective::SegmentObjective;

/// Inclusive 1-based index range `(start, end)` of a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SegmentRange {
    pub start: usize,
    pub end: usize,
}

impl SegmentRange {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Check `1 ≤ start ≤ end ≤ n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.start == 0 || self.start > self.end || self.end > n {
            return Err(domain(format!(
                "invalid segment ({}, {}) for a series of length {n}",
                self.start, self.end
            )));
        }
        Ok(())
    }

    /// The observations of the segment.
    pub fn slice<'a>(&self, y: &'a [u64]) -> &'a [u64] {
        &y[self.start - 1..self.end]
    }
}

/// Optimizer settings for [`fit_segment`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Stop once the projected gradient's infinity norm is at most this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Also start from the box center and a moment-based seed, keeping the
    /// best local optimum. When false only the warm start (or the moment
    /// seed, without one) is used.
    pub multi_start: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 200,
            multi_start: true,
        }
    }
}

/// Result of maximizing the quasi-likelihood on one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentFit {
    pub range: SegmentRange,
    pub theta_hat: Vec<f64>,
    /// `L̂(T, θ̂)`, equal to [`quasi_log_likelihood`] at `theta_hat`.
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// `L̂(T, θ) = Σ_{t∈T} (Y_t log λ̂_t(θ) − λ̂_t(θ))` with the history truncated at
/// the segment start.
///
/// Not additive across a split of `T`: each call restarts the recursion.
pub fn quasi_log_likelihood(
    y: &[u64],
    range: SegmentRange,
    theta: &[f64],
    family: &MeanFamily,
) -> Result<f64> {
    range.validate(y.len())?;
    family.check_theta(theta)?;
    let gamma = decay_for(family, range.len());
    Ok(SegmentObjective::new(family, y, range.start - 1, range.end, &gamma).value(theta))
}

/// Value and analytic gradient of [`quasi_log_likelihood`].
pub fn quasi_log_likelihood_gradient(
    y: &[u64],
    range: SegmentRange,
    theta: &[f64],
    family: &MeanFamily,
) -> Result<(f64, Vec<f64>)> {
    range.validate(y.len())?;
    family.check_theta(theta)?;
    let gamma = decay_for(family, range.len());
    let obj = SegmentObjective::new(family, y, range.start - 1, range.end, &gamma);
    let mut grad = vec![0.0; family.dim()];
    let value = obj.value_grad(theta, &mut grad);
    Ok((value, grad))
}

/// The same quantities computed term by term from
/// [`MeanFamily::truncated_mean_path`] and
/// [`MeanFamily::mean_gradient_path`] (chain rule).
pub fn quasi_log_likelihood_from_paths(
    y: &[u64],
    range: SegmentRange,
    theta: &[f64],
    family: &MeanFamily,
) -> Result<(f64, Vec<f64>)> {
    range.validate(y.len())?;
    let seg = range.slice(y);
    let lambda = family.truncated_mean_path(theta, seg)?;
    let dl = family.mean_gradient_path(theta, seg)?;
    let mut value = 0.0;
    let mut grad = vec![0.0; family.dim()];
    for (t, (&obs, lam)) in seg.iter().zip(&lambda).enumerate() {
        let v = obs as f64;
        value += v * lam.ln() - lam;
        let w = v / lam - 1.0;
        for (k, g) in grad.iter_mut().enumerate() {
            *g += w * dl[(t, k)];
        }
    }
    Ok((value, grad))
}

/// Poisson QMLE on `range`: maximizes [`quasi_log_likelihood`] over the
/// family's parameter box.
///
/// Non-convergence is reported through [`SegmentFit::converged`], never as
/// an error.
pub fn fit_segment(
    y: &[u64],
    range: SegmentRange,
    family: &MeanFamily,
    opts: &FitOptions,
    warm_start: Option<&[f64]>,
) -> Result<SegmentFit> {
    range.validate(y.len())?;
    if let Some(w) = warm_start {
        if w.len() != family.dim() {
            return Err(domain("warm start has the wrong dimension"));
        }
    }
    let gamma = decay_for(family, range.len());
    let obj = SegmentObjective::new(family, y, range.start - 1, range.end, &gamma);
    Ok(fit_objective(&obj, family, opts, warm_start, range))
}

pub(crate) fn decay_for(family: &MeanFamily, len: usize) -> Vec<f64> {
    match family.decay() {
        Some(decay) if family.kind() == FamilyKind::InarchInf => decay.coefficients(len),
        _ => Vec::new(),
    }
}

struct Bound<'o, 'a> {
    obj: &'o SegmentObjective<'a>,
    dim: usize,
}

impl optimizer::Smooth for Bound<'_, '_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.obj.value_grad(x, grad)
    }

    fn curvature(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(self.obj.information(x))
    }
}

/// Method-of-moments starting point.
fn moment_seed(obj: &SegmentObjective<'_>, family: &MeanFamily) -> Vec<f64> {
    let mean = obj.total() as f64 / obj.len() as f64;
    let seed = match family.kind() {
        FamilyKind::Inarch1 | FamilyKind::BinInarch1 => vec![mean * (1.0 - 0.3), 0.3],
        FamilyKind::Ingarch11 => vec![mean * (1.0 - 0.3 - 0.2), 0.3, 0.2],
        FamilyKind::InarchInf => vec![mean - obj.mean_history()],
    };
    family.space().clamp(&seed)
}

pub(crate) fn fit_objective(
    obj: &SegmentObjective<'_>,
    family: &MeanFamily,
    opts: &FitOptions,
    warm_start: Option<&[f64]>,
    range: SegmentRange,
) -> SegmentFit {
    let space = family.space();
    if obj.all_zero() {
        // L̂ = -Σ λ̂_t, and λ̂_t is nondecreasing in every coordinate.
        let theta = space.lower().to_vec();
        let loglik = obj.value(&theta);
        return SegmentFit {
            range,
            theta_hat: theta,
            loglik,
            converged: true,
            iterations: 0,
        };
    }

    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(3);
    if let Some(w) = warm_start {
        starts.push(space.clamp(w));
    }
    if opts.multi_start || starts.is_empty() {
        starts.push(moment_seed(obj, family));
    }
    if opts.multi_start {
        starts.push(space.center());
    }

    let settings = optimizer::Settings {
        tolerance: opts.tolerance,
        max_iterations: opts.max_iterations,
    };
    let target = Bound {
        obj,
        dim: family.dim(),
    };
    // λ̂ is affine in θ for every family but INGARCH, so L̂ is concave and a
    // converged warm start is already the global maximum.
    let concave = family.kind() != FamilyKind::Ingarch11;
    let mut best: Option<optimizer::Outcome> = None;
    let mut iterations = 0;
    for (k, start) in starts.iter().enumerate() {
        if k > 0 && concave && warm_start.is_some() && best.as_ref().is_some_and(|b| b.converged) {
            break;
        }
        let out = optimizer::maximize(&target, space.lower(), space.upper(), start, settings);
        iterations += out.iterations;
        let better = match &best {
            None => out.value.is_finite(),
            Some(b) => out.value > b.value,
        };
        if better {
            best = Some(out);
        }
    }
    let best = best.unwrap_or_else(|| optimizer::Outcome {
        x: starts[0].clone(),
        value: f64::NEG_INFINITY,
        converged: false,
        iterations: 0,
    });
    let loglik = obj.value(&best.x);
    SegmentFit {
        range,
        theta_hat: best.x,
        loglik,
        converged: best.converged,
        iterations,
    }
}
