//! Multiple change-point detection for integer-valued time series.
//!
//! The conditional mean of the series follows a known recursion (INARCH(1),
//! INGARCH(1,1), binary INARCH(1) or INARCH(∞)) whose parameter is piecewise
//! constant. Breaks are located by minimizing a penalized Poisson
//! quasi-likelihood contrast over all segmentations with a dynamic program;
//! the penalty can be calibrated from the data with the slope heuristic.
//!
//! ```
//! use countbreaks::{detect, scenario_library, simulate_piecewise, DetectionConfig, PenaltySpec};
//!
//! let scenario = scenario_library()["IA1"].clone().with_n(200).with_seed(3);
//! let y = simulate_piecewise(&scenario).unwrap();
//! let cfg = DetectionConfig::for_length(y.len(), PenaltySpec::CubeRoot).unwrap();
//! let found = detect(&y, &scenario.family, &cfg).unwrap();
//! assert!(found.segmentation.k_hat >= 1);
//! ```

pub mod error;
pub mod experiments;
pub mod models;
pub mod qmle;
pub mod segment;
pub mod series;
pub mod simulate;

mod par;

pub use error::{Error, Result};
pub use experiments::{
    normality_check, run_replications, run_replications_with_progress, CoverageReport,
    FrequencyReport,
};
pub use models::{FamilyKind, MeanFamily, ParamSpace};
pub use qmle::{
    fit_segment, quasi_log_likelihood, quasi_log_likelihood_from_paths,
    quasi_log_likelihood_gradient, sandwich_covariance, wald_tnoc, CovarianceEstimate, FitOptions,
    SegmentFit, SegmentRange, WaldTest,
};
pub use segment::{
    backtrack, build_ml_matrix, detect, detect_with_matrix, dp_solve, penalty_value, select_k,
    slope_heuristic, Detection, DetectionConfig, DpTables, LikelihoodMatrix, PenaltySpec,
    Segmentation, SlopeFit,
};
pub use series::parse_counts;
pub use simulate::{
    parse_scenario, scenario_library, simulate_piecewise, simulate_replication, Emission,
    ScenarioConfig,
};
