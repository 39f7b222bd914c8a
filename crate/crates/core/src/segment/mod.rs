//! Segmentation by penalized dynamic programming.
//!
//! Segments are 1-based inclusive ranges and breaks are the last index of
//! each segment. `QLIK(K) = −2 Σ ML` over the `K` segments and
//! `penQLIK(K) = QLIK(K) + κ K`.

mod config;
mod detect;
mod dp;
mod matrix;
mod slope;

pub use config::{default_k_max, default_u_min, DetectionConfig, PenaltySpec, DEFAULT_K_MAX};
pub use detect::{detect, detect_with_matrix, Detection, Segmentation};
pub use dp::{argmin_k, backtrack, dp_solve, segmentation_cost, select_k, DpTables};
pub use matrix::{build_ml_matrix, LikelihoodMatrix};
pub use slope::{
    default_window, default_window_for, penalty_value, slope_heuristic, slope_heuristic_window,
    SlopeFit,
};
