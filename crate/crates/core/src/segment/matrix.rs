use crate::error::{domain, Result};
use crate::models::MeanFamily;
use crate::par::map_indexed;
use crate::qmle::{decay_for, fit_objective, SegmentFit, SegmentObjective, SegmentRange};

use super::config::DetectionConfig;

/// Candidate boundaries `0, g, 2g, …` plus `n`.
pub(crate) fn boundaries(n: usize, grid_step: usize) -> Vec<usize> {
    let mut b: Vec<usize> = (0..n).step_by(grid_step).collect();
    b.push(n);
    b
}

#[derive(Debug, Clone)]
struct Row {
    /// Index in the boundary list of the first admissible segment end.
    first: usize,
    values: Vec<f64>,
    /// Flattened `d`-vectors, empty for synthetic matrices.
    thetas: Vec<f64>,
    converged: Vec<bool>,
    iterations: Vec<u32>,
}

/// Maximized segment quasi-likelihoods `ML_{i,l}` for every admissible
/// segment whose endpoints lie on the candidate grid.
#[derive(Debug, Clone)]
pub struct LikelihoodMatrix {
    n: usize,
    u_min: usize,
    grid_step: usize,
    dim: usize,
    bounds: Vec<usize>,
    rows: Vec<Row>,
}

impl LikelihoodMatrix {
    /// Matrix from arbitrary values, without fits. Used for synthetic
    /// instances and tests of the dynamic program.
    pub fn from_fn<F: Fn(usize, usize) -> f64>(
        n: usize,
        u_min: usize,
        grid_step: usize,
        f: F,
    ) -> Result<Self> {
        check_shape(n, u_min, grid_step)?;
        let bounds = boundaries(n, grid_step);
        let rows = (0..bounds.len() - 1)
            .map(|p| {
                let first = first_end(&bounds, p, u_min);
                let values = (first..bounds.len())
                    .map(|q| f(bounds[p] + 1, bounds[q]))
                    .collect();
                Row {
                    first,
                    values,
                    thetas: Vec::new(),
                    converged: Vec::new(),
                    iterations: Vec::new(),
                }
            })
            .collect();
        Ok(Self {
            n,
            u_min,
            grid_step,
            dim: 0,
            bounds,
            rows,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn u_min(&self) -> usize {
        self.u_min
    }

    pub fn grid_step(&self) -> usize {
        self.grid_step
    }

    /// Candidate boundaries (segment ends), starting with 0 and ending with n.
    pub fn boundaries(&self) -> &[usize] {
        &self.bounds
    }

    pub(crate) fn boundary_index(&self, t: usize) -> Option<usize> {
        if t == self.n {
            Some(self.bounds.len() - 1)
        } else if t % self.grid_step == 0 && t < self.n {
            Some(t / self.grid_step)
        } else {
            None
        }
    }

    /// `ML_{p,q}` by boundary indices: the segment `bounds[p]+1 ..= bounds[q]`.
    #[inline]
    pub(crate) fn value_at(&self, p: usize, q: usize) -> Option<f64> {
        let row = &self.rows[p];
        (q >= row.first).then(|| row.values[q - row.first])
    }

    /// First admissible end index for segments starting after boundary `p`.
    #[inline]
    pub(crate) fn first_end(&self, p: usize) -> usize {
        self.rows[p].first
    }

    /// `ML_{i,l}` (1-based, inclusive), if the segment is admissible.
    pub fn get(&self, i: usize, l: usize) -> Option<f64> {
        if i == 0 || l < i {
            return None;
        }
        let p = self.boundary_index(i - 1)?;
        let q = self.boundary_index(l)?;
        if p >= self.rows.len() {
            return None;
        }
        self.value_at(p, q)
    }

    /// The stored fit behind `ML_{i,l}`; `None` for synthetic matrices.
    pub fn fit(&self, i: usize, l: usize) -> Option<SegmentFit> {
        let value = self.get(i, l)?;
        if self.dim == 0 {
            return None;
        }
        let row = &self.rows[self.boundary_index(i - 1)?];
        let k = self.boundary_index(l)? - row.first;
        Some(SegmentFit {
            range: SegmentRange::new(i, l),
            theta_hat: row.thetas[k * self.dim..(k + 1) * self.dim].to_vec(),
            loglik: value,
            converged: row.converged[k],
            iterations: row.iterations[k] as usize,
        })
    }

    /// Number of stored entries.
    pub fn entry_count(&self) -> usize {
        self.rows.iter().map(|r| r.values.len()).sum()
    }

    /// Number of stored fits that did not meet the convergence tolerance.
    pub fn non_converged(&self) -> usize {
        self.rows
            .iter()
            .map(|r| r.converged.iter().filter(|c| !**c).count())
            .sum()
    }
}

fn check_shape(n: usize, u_min: usize, grid_step: usize) -> Result<()> {
    if grid_step == 0 || u_min == 0 {
        return Err(domain("grid step and u_min must be positive"));
    }
    if n < u_min {
        return Err(domain(format!(
            "series of length {n} is shorter than u_min = {u_min}"
        )));
    }
    Ok(())
}

fn first_end(bounds: &[usize], p: usize, u_min: usize) -> usize {
    let start = bounds[p];
    bounds.partition_point(|&b| b < start + u_min)
}

/// Fit every admissible segment. Rows (fixed start) run in parallel; along a
/// row each fit is warm-started from the previous end.
pub fn build_ml_matrix(
    y: &[u64],
    family: &MeanFamily,
    cfg: &DetectionConfig,
) -> Result<LikelihoodMatrix> {
    let n = y.len();
    cfg.validate(n, family.dim())?;
    check_shape(n, cfg.u_min, cfg.grid_step)?;
    let bounds = boundaries(n, cfg.grid_step);
    let gamma = decay_for(family, n);
    let d = family.dim();
    let rows = map_indexed(bounds.len() - 1, |p| {
        let first = first_end(&bounds, p, cfg.u_min);
        let count = bounds.len().saturating_sub(first);
        let mut row = Row {
            first,
            values: Vec::with_capacity(count),
            thetas: Vec::with_capacity(count * d),
            converged: Vec::with_capacity(count),
            iterations: Vec::with_capacity(count),
        };
        let mut obj = SegmentObjective::empty(family, y, bounds[p], &gamma);
        let mut warm: Option<Vec<f64>> = None;
        for &end in &bounds[first.min(bounds.len())..] {
            while obj.end() < end {
                obj.push();
            }
            let range = SegmentRange::new(bounds[p] + 1, end);
            let fit = fit_objective(&obj, family, &cfg.fit, warm.as_deref(), range);
            row.values.push(fit.loglik);
            row.thetas.extend_from_slice(&fit.theta_hat);
            row.converged.push(fit.converged);
            row.iterations
                .push(fit.iterations.min(u32::MAX as usize) as u32);
            warm = Some(fit.theta_hat);
        }
        row
    });
    Ok(LikelihoodMatrix {
        n,
        u_min: cfg.u_min,
        grid_step: cfg.grid_step,
        dim: d,
        bounds,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmle::quasi_log_likelihood;
    use crate::segment::PenaltySpec;

    #[test]
    fn boundary_grid() {
        assert_eq!(boundaries(10, 1), (0..=10).collect::<Vec<_>>());
        assert_eq!(boundaries(10, 4), vec![0, 4, 8, 10]);
        assert_eq!(boundaries(8, 4), vec![0, 4, 8]);
    }

    #[test]
    fn single_entry_when_n_equals_u_min() {
        let y = vec![1u64, 0, 2, 1, 3, 0, 1, 2];
        let cfg = DetectionConfig::for_length(8, PenaltySpec::LogN)
            .unwrap()
            .with_u_min(8)
            .with_k_max(1);
        let ml = build_ml_matrix(&y, &MeanFamily::inarch1(), &cfg).unwrap();
        assert_eq!(ml.entry_count(), 1);
        assert!(ml.get(1, 8).is_some());
    }

    #[test]
    fn entries_match_direct_likelihood() {
        let y: Vec<u64> = (0..60).map(|t| ((t * 13 + 5) % 7 % 4) as u64).collect();
        let fam = MeanFamily::inarch1();
        let cfg = DetectionConfig::for_length(60, PenaltySpec::LogN)
            .unwrap()
            .with_u_min(10)
            .with_k_max(3);
        let ml = build_ml_matrix(&y, &fam, &cfg).unwrap();
        for (i, l) in [(1, 10), (1, 60), (21, 45), (51, 60)] {
            let fit = ml.fit(i, l).unwrap();
            let direct =
                quasi_log_likelihood(&y, SegmentRange::new(i, l), &fit.theta_hat, &fam).unwrap();
            assert_eq!(fit.loglik, direct, "({i}, {l})");
        }
        assert!(ml.get(1, 9).is_none());
        assert!(ml.get(52, 60).is_none());
    }

    #[test]
    fn grid_restricts_endpoints() {
        let ml = LikelihoodMatrix::from_fn(20, 3, 5, |i, l| (i * 100 + l) as f64).unwrap();
        assert_eq!(ml.get(6, 15), Some(615.0));
        assert_eq!(ml.get(6, 14), None);
        assert_eq!(ml.get(16, 20), Some(1620.0));
        assert!(ml.fit(6, 15).is_none());
    }
}
