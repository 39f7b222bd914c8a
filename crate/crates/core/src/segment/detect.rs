use std::fmt::Write as _;

use crate::error::Result;
use crate::models::MeanFamily;
use crate::qmle::{sandwich_covariance, CovarianceEstimate, SegmentFit};

use super::config::{DetectionConfig, PenaltySpec};
use super::dp::{backtrack, dp_solve, segmentation_cost, select_k};
use super::matrix::{build_ml_matrix, LikelihoodMatrix};
use super::slope::{penalty_value, slope_heuristic, slope_heuristic_window, SlopeFit};

/// An estimated segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub k_hat: usize,
    /// Last index of each segment but the final one (1-based).
    pub breaks: Vec<usize>,
    /// `breaks / n`.
    pub tau_hat: Vec<f64>,
    pub theta_hats: Vec<Vec<f64>>,
    pub per_segment: Vec<SegmentFit>,
    /// `None` where the fit did not converge or `Ĵ` is singular.
    pub covariances: Vec<Option<CovarianceEstimate>>,
    /// `Σ (−2 ML) + κ K̂`.
    pub total_contrast: f64,
}

/// Output of [`detect`]: the segmentation with the curves behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub segmentation: Segmentation,
    pub kappa: f64,
    pub penalty: PenaltySpec,
    /// `min QLIK(K)` for `K = 1..=k_max` (`+∞` when no admissible segmentation).
    pub min_contrast: Vec<f64>,
    /// `min penQLIK(K) = C_{K,n}` at the selected `κ`.
    pub min_penalized: Vec<f64>,
    /// Present for the slope penalty.
    pub slope: Option<SlopeFit>,
}

impl Detection {
    /// Two-column CSV `K,neg_min_qlik`.
    pub fn contrast_curve_csv(&self) -> String {
        curve_csv("neg_min_qlik", self.min_contrast.iter().map(|v| -v))
    }

    /// Two-column CSV `K,min_pen_qlik`.
    pub fn penalized_curve_csv(&self) -> String {
        curve_csv("min_pen_qlik", self.min_penalized.iter().copied())
    }
}

fn curve_csv(name: &str, values: impl Iterator<Item = f64>) -> String {
    let mut out = format!("K,{name}\n");
    for (k, v) in values.enumerate() {
        let _ = writeln!(out, "{},{}", k + 1, v);
    }
    out
}

/// The full pipeline: likelihood matrix, unpenalized contrast curve,
/// penalty, penalized dynamic program, selection and backtracking.
pub fn detect(y: &[u64], family: &MeanFamily, cfg: &DetectionConfig) -> Result<Detection> {
    let ml = build_ml_matrix(y, family, cfg)?;
    detect_with_matrix(&ml, y, family, cfg)
}

/// [`detect`] on a precomputed matrix, so several penalties can share it.
pub fn detect_with_matrix(
    ml: &LikelihoodMatrix,
    y: &[u64],
    family: &MeanFamily,
    cfg: &DetectionConfig,
) -> Result<Detection> {
    let n = y.len();
    cfg.validate(n, family.dim())?;
    let unpenalized = dp_solve(ml, 0.0, cfg.k_max)?;
    let min_contrast = unpenalized.final_costs();
    let slope = match cfg.penalty {
        PenaltySpec::Slope => Some(match cfg.slope_window {
            Some(window) => slope_heuristic_window(&min_contrast, window)?,
            None => slope_heuristic(&min_contrast)?,
        }),
        _ => None,
    };
    let kappa = match &slope {
        Some(fit) => penalty_value(&PenaltySpec::Fixed { kappa: fit.kappa }, n, None)?,
        None => penalty_value(&cfg.penalty, n, None)?,
    };
    let tables = dp_solve(ml, kappa, cfg.k_max)?;
    let k_hat = select_k(&tables)?;
    let breaks = backtrack(&tables, k_hat)?;
    let total_contrast = tables.cost(k_hat, n).expect("n is a boundary");
    debug_assert_eq!(segmentation_cost(ml, &breaks, kappa), Some(total_contrast));

    let mut per_segment = Vec::with_capacity(k_hat);
    let mut covariances = Vec::with_capacity(k_hat);
    let mut start = 1;
    for &end in breaks.iter().chain(std::iter::once(&n)) {
        let fit = ml.fit(start, end).expect("selected segments are stored");
        let cov = if cfg.covariances && fit.converged {
            sandwich_covariance(y, fit.range, &fit, family).ok()
        } else {
            None
        };
        per_segment.push(fit);
        covariances.push(cov);
        start = end + 1;
    }
    let segmentation = Segmentation {
        k_hat,
        tau_hat: breaks.iter().map(|&b| b as f64 / n as f64).collect(),
        breaks,
        theta_hats: per_segment.iter().map(|f| f.theta_hat.clone()).collect(),
        per_segment,
        covariances,
        total_contrast,
    };
    Ok(Detection {
        segmentation,
        kappa,
        penalty: cfg.penalty,
        min_contrast,
        min_penalized: tables.final_costs(),
        slope,
    })
}
