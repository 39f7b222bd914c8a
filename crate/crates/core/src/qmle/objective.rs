//! Segment-local Poisson quasi-log-likelihood evaluators.
//!
//! An evaluator is built by appending observations one at a time, so a
//! segment `(i, l)` grown from `(i, l-1)` holds exactly the same state as
//! one built from scratch. That keeps matrix entries bit-identical to
//! [`quasi_log_likelihood`](super::quasi_log_likelihood).

use crate::models::{lagged_sum, FamilyKind, MeanFamily};

/// Pair counts for families whose mean only looks one step back:
/// `(previous value, number of occurrences, sum of following values)`.
#[derive(Debug, Clone, Default)]
struct LagOneCell {
    prev: u64,
    count: u64,
    sum: u64,
}

#[derive(Debug, Clone)]
enum State<'a> {
    /// INARCH(1) and binary INARCH(1): grouped by the lagged value.
    LagOne { cells: Vec<LagOneCell> },
    /// INGARCH(1,1): full recursion over the segment.
    Recursive,
    /// INARCH(∞) with fixed weights: the lagged part of the mean is
    /// parameter free and cached.
    Decay { gamma: &'a [f64], history: Vec<f64> },
}

#[derive(Debug, Clone)]
pub(crate) struct SegmentObjective<'a> {
    y: &'a [u64],
    start: usize,
    end: usize,
    state: State<'a>,
}

impl<'a> SegmentObjective<'a> {
    /// Empty evaluator for a segment starting at 0-based index `start`.
    /// `gamma` must cover the longest segment for InarchInf.
    pub(crate) fn empty(family: &MeanFamily, y: &'a [u64], start: usize, gamma: &'a [f64]) -> Self {
        let state = match family.kind() {
            FamilyKind::Inarch1 | FamilyKind::BinInarch1 => State::LagOne { cells: Vec::new() },
            FamilyKind::Ingarch11 => State::Recursive,
            FamilyKind::InarchInf => State::Decay {
                gamma,
                history: Vec::new(),
            },
        };
        Self {
            y,
            start,
            end: start,
            state,
        }
    }

    /// Evaluator for the 0-based half-open range `start..end`.
    pub(crate) fn new(
        family: &MeanFamily,
        y: &'a [u64],
        start: usize,
        end: usize,
        gamma: &'a [f64],
    ) -> Self {
        let mut obj = Self::empty(family, y, start, gamma);
        while obj.end < end {
            obj.push();
        }
        obj
    }

    /// Append the next observation of the series to the segment.
    pub(crate) fn push(&mut self) {
        let t = self.end;
        debug_assert!(t < self.y.len());
        match &mut self.state {
            State::LagOne { cells } => {
                let prev = if t == self.start { 0 } else { self.y[t - 1] };
                let cell = match cells.binary_search_by_key(&prev, |c| c.prev) {
                    Ok(k) => &mut cells[k],
                    Err(k) => {
                        cells.insert(
                            k,
                            LagOneCell {
                                prev,
                                ..Default::default()
                            },
                        );
                        &mut cells[k]
                    }
                };
                cell.count += 1;
                cell.sum += self.y[t];
            }
            State::Recursive => {}
            State::Decay { gamma, history } => {
                history.push(lagged_sum(gamma, &self.y[self.start..t]));
            }
        }
        self.end += 1;
    }

    pub(crate) fn len(&self) -> usize {
        self.end - self.start
    }

    pub(crate) fn end(&self) -> usize {
        self.end
    }

    fn obs(&self) -> &'a [u64] {
        &self.y[self.start..self.end]
    }

    pub(crate) fn total(&self) -> u64 {
        self.obs().iter().sum()
    }

    pub(crate) fn all_zero(&self) -> bool {
        self.obs().iter().all(|&v| v == 0)
    }

    /// Average of the lagged part of the InarchInf mean.
    pub(crate) fn mean_history(&self) -> f64 {
        match &self.state {
            State::Decay { history, .. } if !history.is_empty() => {
                history.iter().sum::<f64>() / history.len() as f64
            }
            _ => 0.0,
        }
    }

    /// `L̂(T, θ) = Σ_{t∈T} (Y_t log λ̂_t − λ̂_t)`.
    pub(crate) fn value(&self, theta: &[f64]) -> f64 {
        match &self.state {
            State::LagOne { cells } => {
                let (a0, a) = (theta[0], theta[1]);
                let mut ll = 0.0;
                for c in cells {
                    let lam = a0 + a * c.prev as f64;
                    ll += c.sum as f64 * lam.ln() - c.count as f64 * lam;
                }
                ll
            }
            State::Recursive => {
                let (a0, a, b) = (theta[0], theta[1], theta[2]);
                let mut lam = a0 / (1.0 - b);
                let mut ll = 0.0;
                for &obs in self.obs() {
                    let v = obs as f64;
                    ll += v * lam.ln() - lam;
                    lam = a0 + a * v + b * lam;
                }
                ll
            }
            State::Decay { history, .. } => {
                let mut ll = 0.0;
                for (&obs, h) in self.obs().iter().zip(history) {
                    let lam = theta[0] + h;
                    ll += obs as f64 * lam.ln() - lam;
                }
                ll
            }
        }
    }

    /// Value and gradient `∂L̂/∂θ = Σ (Y_t/λ̂_t − 1) ∂λ̂_t/∂θ`.
    pub(crate) fn value_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        match &self.state {
            State::LagOne { cells } => {
                let (a0, a) = (theta[0], theta[1]);
                let mut ll = 0.0;
                for c in cells {
                    let prev = c.prev as f64;
                    let lam = a0 + a * prev;
                    let (s, n) = (c.sum as f64, c.count as f64);
                    ll += s * lam.ln() - n * lam;
                    let w = s / lam - n;
                    grad[0] += w;
                    grad[1] += w * prev;
                }
                ll
            }
            State::Recursive => {
                let (a0, a, b) = (theta[0], theta[1], theta[2]);
                let inv = 1.0 / (1.0 - b);
                let mut lam = a0 * inv;
                let mut d = [inv, 0.0, a0 * inv * inv];
                let mut ll = 0.0;
                for &obs in self.obs() {
                    let v = obs as f64;
                    ll += v * lam.ln() - lam;
                    let w = v / lam - 1.0;
                    for k in 0..3 {
                        grad[k] += w * d[k];
                    }
                    d = [1.0 + b * d[0], v + b * d[1], lam + b * d[2]];
                    lam = a0 + a * v + b * lam;
                }
                ll
            }
            State::Decay { history, .. } => {
                let mut ll = 0.0;
                for (&obs, h) in self.obs().iter().zip(history) {
                    let lam = theta[0] + h;
                    let v = obs as f64;
                    ll += v * lam.ln() - lam;
                    grad[0] += v / lam - 1.0;
                }
                ll
            }
        }
    }

    /// `Σ (1/λ̂_t) ∂λ̂_t ∂λ̂_t'` (row-major `d × d`), used to seed the
    /// quasi-Newton curvature.
    pub(crate) fn information(&self, theta: &[f64]) -> Vec<f64> {
        match &self.state {
            State::LagOne { cells } => {
                let (a0, a) = (theta[0], theta[1]);
                let mut m = vec![0.0; 4];
                for c in cells {
                    let prev = c.prev as f64;
                    let w = c.count as f64 / (a0 + a * prev);
                    m[0] += w;
                    m[1] += w * prev;
                    m[3] += w * prev * prev;
                }
                m[2] = m[1];
                m
            }
            State::Recursive => {
                let (a0, a, b) = (theta[0], theta[1], theta[2]);
                let inv = 1.0 / (1.0 - b);
                let mut lam = a0 * inv;
                let mut d = [inv, 0.0, a0 * inv * inv];
                let mut m = vec![0.0; 9];
                for &obs in self.obs() {
                    let v = obs as f64;
                    for r in 0..3 {
                        for c in 0..3 {
                            m[3 * r + c] += d[r] * d[c] / lam;
                        }
                    }
                    d = [1.0 + b * d[0], v + b * d[1], lam + b * d[2]];
                    lam = a0 + a * v + b * lam;
                }
                m
            }
            State::Decay { history, .. } => {
                vec![history.iter().map(|h| 1.0 / (theta[0] + h)).sum()]
            }
        }
    }
}
