use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::qmle::FitOptions;

/// Largest number of segments considered by default.
pub const DEFAULT_K_MAX: usize = 15;

/// Rule producing the per-segment penalty `κ_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum PenaltySpec {
    /// Calibrated from the data with the slope heuristic.
    Slope,
    /// `κ_n = ln n`.
    LogN,
    /// `κ_n = n^{1/3}`.
    CubeRoot,
    Fixed {
        kappa: f64,
    },
}

impl PenaltySpec {
    pub fn name(&self) -> String {
        match self {
            PenaltySpec::Slope => "slope".into(),
            PenaltySpec::LogN => "logn".into(),
            PenaltySpec::CubeRoot => "cuberoot".into(),
            PenaltySpec::Fixed { kappa } => format!("fixed={kappa}"),
        }
    }
}

impl fmt::Display for PenaltySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for PenaltySpec {
    type Err = Error;

    /// `slope`, `logn`, `cuberoot` or `fixed=<value>`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "slope" => Ok(PenaltySpec::Slope),
            "logn" => Ok(PenaltySpec::LogN),
            "cuberoot" => Ok(PenaltySpec::CubeRoot),
            other => {
                let value = other.strip_prefix("fixed=").ok_or_else(|| {
                    config(format!(
                        "unknown penalty '{s}' (slope, logn, cuberoot, fixed=<v>)"
                    ))
                })?;
                let kappa: f64 = value
                    .parse()
                    .map_err(|_| config(format!("invalid fixed penalty value '{value}'")))?;
                if !(kappa > 0.0 && kappa.is_finite()) {
                    return Err(config("fixed penalty must be positive"));
                }
                Ok(PenaltySpec::Fixed { kappa })
            }
        }
    }
}

/// Settings of the segmentation search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub k_max: usize,
    /// Minimum segment length `u_n`.
    pub u_min: usize,
    pub penalty: PenaltySpec,
    /// Candidate boundaries are multiples of `grid_step` (plus `n`).
    pub grid_step: usize,
    pub fit: FitOptions,
    /// Inclusive range of `K` used by the slope fit; defaults to the upper
    /// half of `1..=k_max`.
    pub slope_window: Option<(usize, usize)>,
    /// Compute sandwich covariances of the selected segments.
    pub covariances: bool,
}

/// `⌊(ln n)²⌋`.
pub fn default_u_min(n: usize) -> usize {
    let l = (n.max(1) as f64).ln();
    (l * l).floor() as usize
}

/// Largest `K ≤ 15` with `K · u_min < n`, and at least 1.
pub fn default_k_max(n: usize, u_min: usize) -> usize {
    let mut k = DEFAULT_K_MAX;
    while k > 1 && k * u_min >= n {
        k -= 1;
    }
    k
}

impl DetectionConfig {
    /// Defaults for a series of length `n`: `u_min = max(⌊(ln n)²⌋, 2)`, the
    /// largest `k_max ≤ 15` below `n / u_min`, unit grid.
    pub fn for_length(n: usize, penalty: PenaltySpec) -> Result<Self> {
        if n < 2 {
            return Err(config(format!("series of length {n} is too short")));
        }
        let u_min = default_u_min(n).max(2).min(n);
        Ok(Self {
            k_max: default_k_max(n, u_min),
            u_min,
            penalty,
            grid_step: 1,
            fit: FitOptions::default(),
            slope_window: None,
            covariances: true,
        })
    }

    pub fn with_k_max(mut self, k_max: usize) -> Self {
        self.k_max = k_max;
        self
    }

    pub fn with_u_min(mut self, u_min: usize) -> Self {
        self.u_min = u_min;
        self
    }

    pub fn with_grid_step(mut self, grid_step: usize) -> Self {
        self.grid_step = grid_step;
        self
    }

    pub fn with_penalty(mut self, penalty: PenaltySpec) -> Self {
        self.penalty = penalty;
        self
    }

    /// Check the settings against a series of length `n` and a family with
    /// `d` parameters.
    pub fn validate(&self, n: usize, d: usize) -> Result<()> {
        if self.grid_step == 0 {
            return Err(config("grid step must be at least 1"));
        }
        if self.k_max == 0 {
            return Err(config("k_max must be at least 1"));
        }
        let floor = 2.max(d + 1);
        if self.u_min < floor {
            return Err(config(format!(
                "u_min = {} is below the minimum {floor} for {d} parameters",
                self.u_min
            )));
        }
        if n < self.u_min {
            return Err(config(format!(
                "series of length {n} is shorter than u_min = {}",
                self.u_min
            )));
        }
        if self.k_max > 1 && self.k_max * self.u_min >= n {
            return Err(config(format!(
                "k_max = {} needs k_max · u_min < n (u_min = {}, n = {n}); lower k_max or u_min",
                self.k_max, self.u_min
            )));
        }
        if let Some((lo, hi)) = self.slope_window {
            if lo < 1 || lo >= hi || hi > self.k_max {
                return Err(config(format!(
                    "slope window {lo}..={hi} must lie inside 1..={}",
                    self.k_max
                )));
            }
        }
        Ok(())
    }
}
