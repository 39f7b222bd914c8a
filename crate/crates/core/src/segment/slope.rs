use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

use super::config::PenaltySpec;

/// Least-squares line through the tail of `K ↦ −min QLIK(K)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    /// `2 · slope`.
    pub kappa: f64,
    pub slope: f64,
    pub intercept: f64,
    /// Inclusive range of `K` used in the fit.
    pub window: (usize, usize),
}

/// Default window `⌈K_max/2⌉+1 ..= K_max`.
pub fn default_window(k_max: usize) -> (usize, usize) {
    (k_max.div_ceil(2) + 1, k_max)
}

/// Default window for a given curve: [`default_window`] of the `K` at which
/// `min QLIK` is smallest. Past that point the minimum segment length, not
/// the data, drives the curve.
pub fn default_window_for(min_contrast: &[f64]) -> Result<(usize, usize)> {
    if min_contrast.len() < 4 {
        return Err(Error::Calibration(format!(
            "the slope heuristic needs k_max ≥ 4, got {}; raise k_max",
            min_contrast.len()
        )));
    }
    let k_top = super::dp::argmin_k(min_contrast).unwrap_or(0);
    if k_top < 4 {
        return Err(Error::Calibration(format!(
            "the contrast stops decreasing at K = {k_top}; lower u_min or pass an explicit window"
        )));
    }
    Ok(default_window(k_top))
}

/// Slope heuristic on the unpenalized contrast `min QLIK(K)`, `K = 1..`,
/// fitted over [`default_window_for`].
pub fn slope_heuristic(min_contrast: &[f64]) -> Result<SlopeFit> {
    slope_heuristic_window(min_contrast, default_window_for(min_contrast)?)
}

/// Slope heuristic over an explicit inclusive window of `K` values.
pub fn slope_heuristic_window(min_contrast: &[f64], window: (usize, usize)) -> Result<SlopeFit> {
    let (lo, hi) = window;
    if lo < 1 || hi > min_contrast.len() || hi <= lo {
        return Err(Error::Calibration(format!(
            "slope window {lo}..={hi} needs at least two points inside 1..={}",
            min_contrast.len()
        )));
    }
    let points: Vec<(f64, f64)> = (lo..=hi)
        .map(|k| (k as f64, -min_contrast[k - 1]))
        .collect();
    if points.iter().any(|(_, v)| !v.is_finite()) {
        return Err(Error::Calibration(
            "contrast is infinite inside the slope window; lower k_max or u_min".into(),
        ));
    }
    let m = points.len() as f64;
    let kx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let vy = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = points.iter().map(|(x, y)| (x - kx) * (y - vy)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - kx) * (x - kx)).sum();
    let slope = sxy / sxx;
    if !(slope > 0.0) {
        return Err(Error::Calibration(format!(
            "fitted slope {slope} is not positive; raise k_max or check the data"
        )));
    }
    Ok(SlopeFit {
        kappa: 2.0 * slope,
        slope,
        intercept: vy - slope * kx,
        window,
    })
}

/// Evaluate `κ_n`. The slope rule needs the unpenalized contrast
/// `min QLIK(K)`, `K = 1..=k_max`, and fits the default window.
pub fn penalty_value(spec: &PenaltySpec, n: usize, slope_input: Option<&[f64]>) -> Result<f64> {
    if n < 2 {
        return Err(domain("penalty needs n ≥ 2"));
    }
    let nf = n as f64;
    let kappa = match spec {
        PenaltySpec::LogN => nf.ln(),
        PenaltySpec::CubeRoot => nf.cbrt(),
        PenaltySpec::Fixed { kappa } => *kappa,
        PenaltySpec::Slope => {
            slope_heuristic(
                slope_input.ok_or_else(|| domain("slope penalty requires the contrast curve"))?,
            )?
            .kappa
        }
    };
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(domain(format!("penalty {kappa} must be positive")));
    }
    if kappa > nf {
        return Err(domain(format!("penalty {kappa} exceeds n = {n}")));
    }
    Ok(kappa)
}
