//! Conditional-mean families and their truncated mean paths.
//!
//! Every family evaluates `λ̂_t(θ) = f(Y_{t-1}, …, Y_1, 0, 0, …; θ)`: the
//! history before the first observation of the series passed in is treated
//! as zero. Segment-local quantities are obtained by passing the segment
//! slice, which zero-pads everything before the segment start.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{domain, Error, Result};

/// Default lower bound `c̲` on every conditional mean.
pub const DEFAULT_MEAN_FLOOR: f64 = 0.01;
/// Default upper bound on the INGARCH feedback coefficient β.
pub const DEFAULT_BETA_MAX: f64 = 0.95;
/// Distance kept between the autoregressive bounds and the unit boundary.
pub const BOUNDARY_MARGIN: f64 = 1e-3;
/// Default upper bound on the intercept α₀ for unbounded-count families.
pub const DEFAULT_INTERCEPT_MAX: f64 = 100.0;

/// Which conditional-mean recursion is in use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    /// `λ_t = α₀ + α Y_{t-1}`.
    Inarch1,
    /// `λ_t = α₀ + α Y_{t-1} + β λ_{t-1}`.
    Ingarch11,
    /// `p_t = α₀ + α Y_{t-1}`, for binary series.
    BinInarch1,
    /// `λ_t = α₀ + Σ_k γ_k Y_{t-k}` with fixed, summable γ.
    InarchInf,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 4] = [
        FamilyKind::Inarch1,
        FamilyKind::Ingarch11,
        FamilyKind::BinInarch1,
        FamilyKind::InarchInf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Inarch1 => "inarch1",
            FamilyKind::Ingarch11 => "ingarch11",
            FamilyKind::BinInarch1 => "bininarch1",
            FamilyKind::InarchInf => "inarchinf",
        }
    }

    /// Number of free parameters.
    pub fn dim(self) -> usize {
        match self {
            FamilyKind::Inarch1 | FamilyKind::BinInarch1 => 2,
            FamilyKind::Ingarch11 => 3,
            FamilyKind::InarchInf => 1,
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FamilyKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                domain(format!(
                    "unknown family '{s}' (expected one of inarch1, ingarch11, bininarch1, inarchinf)"
                ))
            })
    }
}

/// A rectangular parameter set together with the mean floor it guarantees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    lower: Vec<f64>,
    upper: Vec<f64>,
    mean_floor: f64,
}

impl ParamSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, mean_floor: f64) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(domain(
                "parameter bounds must be non-empty and of equal length",
            ));
        }
        if !(mean_floor > 0.0 && mean_floor.is_finite()) {
            return Err(domain("mean floor must be positive"));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(domain(format!(
                    "bounds for coordinate {i} are empty: [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self {
            lower,
            upper,
            mean_floor,
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn mean_floor(&self) -> f64 {
        self.mean_floor
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| *lo <= *x && *x <= *hi)
    }

    /// Euclidean projection onto the box.
    pub fn clamp(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (lo, hi))| x.clamp(*lo, *hi))
            .collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(domain(format!(
                "parameter has {} coordinates, expected {}",
                theta.len(),
                self.dim()
            )));
        }
        if !self.contains(theta) {
            return Err(domain(format!(
                "parameter {theta:?} lies outside the parameter box"
            )));
        }
        Ok(())
    }
}

/// Power-law lag weights `γ_k = scale · k^(-exponent)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decay {
    pub scale: f64,
    pub exponent: f64,
}

impl Decay {
    /// `γ_k = k^(-1.7) / 2.2`, whose sum stays below one.
    pub const RIEMANN: Decay = Decay {
        scale: 1.0 / 2.2,
        exponent: 1.7,
    };

    pub fn coefficient(&self, lag: usize) -> f64 {
        self.scale * (lag as f64).powf(-self.exponent)
    }

    /// `γ_1, …, γ_len` (index 0 holds γ_1).
    pub fn coefficients(&self, len: usize) -> Vec<f64> {
        (1..=len).map(|k| self.coefficient(k)).collect()
    }
}

/// A conditional-mean recursion with its parameter box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFamily {
    kind: FamilyKind,
    space: ParamSpace,
    decay: Option<Decay>,
}

impl MeanFamily {
    /// Family with its default parameter box.
    pub fn new(kind: FamilyKind) -> Self {
        let c = DEFAULT_MEAN_FLOOR;
        let a_max = 1.0 - BOUNDARY_MARGIN;
        let (lower, upper) = match kind {
            FamilyKind::Inarch1 => (vec![c, 0.0], vec![DEFAULT_INTERCEPT_MAX, a_max]),
            FamilyKind::Ingarch11 => (
                vec![c, 0.0, 0.0],
                vec![DEFAULT_INTERCEPT_MAX, a_max, DEFAULT_BETA_MAX],
            ),
            FamilyKind::BinInarch1 => (vec![c, 0.0], vec![1.0 - c, 1.0 - c]),
            FamilyKind::InarchInf => (vec![c], vec![DEFAULT_INTERCEPT_MAX]),
        };
        let space = ParamSpace::new(lower, upper, c).expect("default boxes are valid");
        let decay = (kind == FamilyKind::InarchInf).then_some(Decay::RIEMANN);
        Self { kind, space, decay }
    }

    pub fn inarch1() -> Self {
        Self::new(FamilyKind::Inarch1)
    }

    pub fn ingarch11() -> Self {
        Self::new(FamilyKind::Ingarch11)
    }

    pub fn bin_inarch1() -> Self {
        Self::new(FamilyKind::BinInarch1)
    }

    pub fn inarch_inf() -> Self {
        Self::new(FamilyKind::InarchInf)
    }

    /// Replace the parameter box. The intercept lower bound must not fall
    /// below the mean floor, otherwise `λ̂_t ≥ c̲` could fail.
    pub fn with_space(mut self, space: ParamSpace) -> Result<Self> {
        if space.dim() != self.kind.dim() {
            return Err(domain(format!(
                "{} expects {} parameters, box has {}",
                self.kind,
                self.kind.dim(),
                space.dim()
            )));
        }
        if space.lower()[0] < space.mean_floor() {
            return Err(domain(
                "intercept lower bound must be at least the mean floor",
            ));
        }
        if space.lower().iter().skip(1).any(|&lo| lo < 0.0) {
            return Err(domain("autoregressive coefficients must be nonnegative"));
        }
        if self.kind == FamilyKind::Ingarch11 && space.upper()[2] >= 1.0 {
            return Err(domain("INGARCH feedback bound must stay below one"));
        }
        self.space = space;
        Ok(self)
    }

    /// Replace the InarchInf lag weights.
    pub fn with_decay(mut self, decay: Decay) -> Result<Self> {
        if self.kind != FamilyKind::InarchInf {
            return Err(domain("lag weights only apply to the inarchinf family"));
        }
        if !(decay.scale >= 0.0 && decay.exponent > 1.0) {
            return Err(domain("lag weights must be nonnegative and summable"));
        }
        self.decay = Some(decay);
        Ok(self)
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn space(&self) -> &ParamSpace {
        &self.space
    }

    pub fn decay(&self) -> Option<Decay> {
        self.decay
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    pub(crate) fn check_theta(&self, theta: &[f64]) -> Result<()> {
        self.space.check(theta)
    }

    /// Check the stationarity-type restrictions that the box alone does not
    /// express. Used for ground-truth parameters.
    pub fn check_stationary(&self, theta: &[f64]) -> Result<()> {
        self.check_theta(theta)?;
        match self.kind {
            FamilyKind::Ingarch11 if theta[1] + theta[2] >= 1.0 => Err(domain(format!(
                "α + β = {} must be below one",
                theta[1] + theta[2]
            ))),
            FamilyKind::BinInarch1 if theta[0] + theta[1] > 1.0 - self.space.mean_floor() => Err(
                domain("α₀ + α must keep the success probability inside (0, 1)"),
            ),
            _ => Ok(()),
        }
    }

    /// `λ̂_1, …, λ̂_n` computed from a zero-padded history.
    pub fn truncated_mean_path(&self, theta: &[f64], y: &[u64]) -> Result<Vec<f64>> {
        self.check_inputs(theta, y)?;
        let n = y.len();
        let mut lambda = Vec::with_capacity(n);
        match self.kind {
            FamilyKind::Inarch1 | FamilyKind::BinInarch1 => {
                let (a0, a) = (theta[0], theta[1]);
                lambda.push(a0);
                lambda.extend(y[..n - 1].iter().map(|&prev| a0 + a * prev as f64));
            }
            FamilyKind::Ingarch11 => {
                let (a0, a, b) = (theta[0], theta[1], theta[2]);
                let mut lam = a0 / (1.0 - b);
                lambda.push(lam);
                for &prev in &y[..n - 1] {
                    lam = a0 + a * prev as f64 + b * lam;
                    lambda.push(lam);
                }
            }
            FamilyKind::InarchInf => {
                let history = self.history_path(y);
                lambda.extend(history.iter().map(|h| theta[0] + h));
            }
        }
        Ok(lambda)
    }

    /// `∂λ̂_t/∂θ` as an `n × d` matrix.
    pub fn mean_gradient_path(&self, theta: &[f64], y: &[u64]) -> Result<DMatrix<f64>> {
        self.check_inputs(theta, y)?;
        let n = y.len();
        let d = self.dim();
        let mut grad = DMatrix::zeros(n, d);
        match self.kind {
            FamilyKind::Inarch1 | FamilyKind::BinInarch1 => {
                for t in 0..n {
                    grad[(t, 0)] = 1.0;
                    grad[(t, 1)] = if t == 0 { 0.0 } else { y[t - 1] as f64 };
                }
            }
            FamilyKind::Ingarch11 => {
                let (a0, a, b) = (theta[0], theta[1], theta[2]);
                let inv = 1.0 / (1.0 - b);
                let mut lam = a0 * inv;
                let mut g = [inv, 0.0, a0 * inv * inv];
                for t in 0..n {
                    for k in 0..3 {
                        grad[(t, k)] = g[k];
                    }
                    let prev = y[t] as f64;
                    g = [1.0 + b * g[0], prev + b * g[1], lam + b * g[2]];
                    lam = a0 + a * prev + b * lam;
                }
            }
            FamilyKind::InarchInf => grad.fill(1.0),
        }
        Ok(grad)
    }

    /// `∂²λ̂_t/∂θ∂θ'` for each `t`. Identically zero for the families that
    /// are affine in θ.
    pub fn mean_hessian_path(&self, theta: &[f64], y: &[u64]) -> Result<Vec<DMatrix<f64>>> {
        self.check_inputs(theta, y)?;
        let d = self.dim();
        let n = y.len();
        if self.kind != FamilyKind::Ingarch11 {
            return Ok(vec![DMatrix::zeros(d, d); n]);
        }
        let (a0, a, b) = (theta[0], theta[1], theta[2]);
        let inv = 1.0 / (1.0 - b);
        let mut lam = a0 * inv;
        let mut g = [inv, 0.0, a0 * inv * inv];
        let mut h = DMatrix::zeros(3, 3);
        h[(0, 2)] = inv * inv;
        h[(2, 0)] = inv * inv;
        h[(2, 2)] = 2.0 * a0 * inv * inv * inv;
        let mut out = Vec::with_capacity(n);
        for &obs in y {
            out.push(h.clone());
            // H_t = β H_{t-1} + e_β g_{t-1}' + g_{t-1} e_β'
            let mut next = &h * b;
            for k in 0..3 {
                next[(2, k)] += g[k];
                next[(k, 2)] += g[k];
            }
            let prev = obs as f64;
            g = [1.0 + b * g[0], prev + b * g[1], lam + b * g[2]];
            lam = a0 + a * prev + b * lam;
            h = next;
        }
        Ok(out)
    }

    /// `Σ_{k=1}^{t-1} γ_k Y_{t-k}` for every `t` (InarchInf only).
    pub(crate) fn history_path(&self, y: &[u64]) -> Vec<f64> {
        let gamma = self.decay.unwrap_or(Decay::RIEMANN).coefficients(y.len());
        (0..y.len()).map(|t| lagged_sum(&gamma, &y[..t])).collect()
    }

    fn check_inputs(&self, theta: &[f64], y: &[u64]) -> Result<()> {
        if y.is_empty() {
            return Err(domain("count series is empty"));
        }
        self.check_theta(theta)
    }
}

/// `Σ_k γ_k past[len-k]`, summed from the most recent lag outwards.
pub(crate) fn lagged_sum(gamma: &[f64], past: &[u64]) -> f64 {
    past.iter()
        .rev()
        .zip(gamma)
        .map(|(&v, g)| g * v as f64)
        .sum()
}
