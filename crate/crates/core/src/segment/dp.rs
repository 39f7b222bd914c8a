use crate::error::{config, domain, Result};

use super::matrix::LikelihoodMatrix;

/// Tables of the penalized dynamic program.
///
/// `cost(K, t)` is the smallest penalized contrast of a `K`-segment
/// segmentation of `Y_1..Y_t`, and `split(K, t)` the end of its
/// `(K-1)`-th segment. Inadmissible cells hold `+∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct DpTables {
    kappa: f64,
    bounds: Vec<usize>,
    /// `c[K-1][q]`, indexed by boundary.
    c: Vec<Vec<f64>>,
    /// `z[K-1][q]` as a boundary index (`usize::MAX` when undefined); row 0 unused.
    z: Vec<Vec<usize>>,
}

const NONE: usize = usize::MAX;

impl DpTables {
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn k_max(&self) -> usize {
        self.c.len()
    }

    pub fn n(&self) -> usize {
        *self.bounds.last().unwrap()
    }

    fn index(&self, t: usize) -> Option<usize> {
        self.bounds.binary_search(&t).ok()
    }

    /// `C_{K,t}`; `None` when `t` is not a candidate boundary or `K` is out of range.
    pub fn cost(&self, k: usize, t: usize) -> Option<f64> {
        let q = self.index(t)?;
        self.c.get(k.checked_sub(1)?).map(|row| row[q])
    }

    /// `Z_{K,t}`: the last index of segment `K-1` in the best `K`-segment
    /// segmentation of `Y_1..Y_t`.
    pub fn split(&self, k: usize, t: usize) -> Option<usize> {
        let q = self.index(t)?;
        let p = *self.z.get(k.checked_sub(1)?)?.get(q)?;
        (p != NONE).then(|| self.bounds[p])
    }

    /// `C_{K,n}` for `K = 1..=k_max`.
    pub fn final_costs(&self) -> Vec<f64> {
        self.c.iter().map(|row| *row.last().unwrap()).collect()
    }
}

/// Run the recursion
/// `C_{1,t} = −2 ML_{1,t} + κ`,
/// `C_{K+1,t} = min_l (C_{K,l} − 2 ML_{l+1,t} + κ)` over admissible `l`,
/// keeping the smallest `l` among ties.
///
/// `kappa = 0` gives the unpenalized contrast.
pub fn dp_solve(ml: &LikelihoodMatrix, kappa: f64, k_max: usize) -> Result<DpTables> {
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(domain(format!(
            "penalty must be finite and nonnegative, got {kappa}"
        )));
    }
    if k_max == 0 {
        return Err(domain("k_max must be at least 1"));
    }
    let bounds = ml.boundaries().to_vec();
    let m = bounds.len();
    let mut c = vec![vec![f64::INFINITY; m]; k_max];
    let mut z = vec![vec![NONE; m]; k_max];
    for q in 1..m {
        if let Some(v) = ml.value_at(0, q) {
            c[0][q] = step(0.0, v, kappa);
        }
    }
    for k in 1..k_max {
        let (done, rest) = c.split_at_mut(k);
        let prev = &done[k - 1];
        let cur = &mut rest[0];
        let zk = &mut z[k];
        for p in 1..m - 1 {
            let base = prev[p];
            if base == f64::INFINITY {
                continue;
            }
            for q in ml.first_end(p)..m {
                let v = step(base, ml.value_at(p, q).unwrap(), kappa);
                // ascending p, strict comparison: ties keep the smallest split
                if v < cur[q] {
                    cur[q] = v;
                    zk[q] = p;
                }
            }
        }
    }
    Ok(DpTables {
        kappa,
        bounds,
        c,
        z,
    })
}

#[inline]
fn step(acc: f64, ml: f64, kappa: f64) -> f64 {
    (acc - 2.0 * ml) + kappa
}

/// `K̂ = argmin_K C_{K,n}`, ties toward the smaller `K`.
pub fn select_k(tables: &DpTables) -> Result<usize> {
    argmin_k(&tables.final_costs())
        .ok_or_else(|| config("no admissible segmentation; u_min is too large for the series"))
}

/// 1-based position of the smallest finite value, first one among ties.
pub fn argmin_k(costs: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, &v) in costs.iter().enumerate() {
        if v.is_finite() && best.is_none_or(|(_, b)| v < b) {
            best = Some((k + 1, v));
        }
    }
    best.map(|(k, _)| k)
}

/// Breaks `t̂_1 < … < t̂_{K-1}` of the best `k`-segment segmentation, each the
/// last index of its segment.
pub fn backtrack(tables: &DpTables, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > tables.k_max() {
        return Err(domain(format!("K = {k} outside 1..={}", tables.k_max())));
    }
    let mut q = tables.bounds.len() - 1;
    if !tables.c[k - 1][q].is_finite() {
        return Err(domain(format!(
            "no admissible segmentation with {k} segments"
        )));
    }
    let mut breaks = Vec::with_capacity(k - 1);
    for kk in (1..k).rev() {
        q = tables.z[kk][q];
        breaks.push(tables.bounds[q]);
    }
    breaks.reverse();
    Ok(breaks)
}

/// Penalized contrast of the segmentation with the given breaks, accumulated
/// in the same order as the dynamic program.
pub fn segmentation_cost(ml: &LikelihoodMatrix, breaks: &[usize], kappa: f64) -> Option<f64> {
    let mut acc = 0.0;
    let mut start = 0;
    for &end in breaks.iter().chain(std::iter::once(&ml.n())) {
        acc = step(acc, ml.get(start + 1, end)?, kappa);
        start = end;
    }
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(n: usize) -> LikelihoodMatrix {
        LikelihoodMatrix::from_fn(n, 2, 1, |i, l| {
            -(((i * 31 + l * 17) % 23) as f64) - (l - i) as f64
        })
        .unwrap()
    }

    #[test]
    fn first_row_is_definition() {
        let ml = synthetic(10);
        let t = dp_solve(&ml, 3.0, 3).unwrap();
        assert_eq!(t.cost(1, 10).unwrap(), -2.0 * ml.get(1, 10).unwrap() + 3.0);
        assert_eq!(t.cost(1, 1).unwrap(), f64::INFINITY);
        assert_eq!(t.cost(3, 5).unwrap(), f64::INFINITY);
        assert!(t.cost(3, 6).unwrap().is_finite());
    }

    #[test]
    fn backtracked_cost_is_exact() {
        let ml = synthetic(14);
        let t = dp_solve(&ml, 2.5, 3).unwrap();
        for k in 1..=3 {
            let b = backtrack(&t, k).unwrap();
            assert_eq!(b.len(), k - 1);
            assert_eq!(
                segmentation_cost(&ml, &b, 2.5).unwrap(),
                t.cost(k, 14).unwrap()
            );
        }
        assert!(backtrack(&t, 4).is_err());
    }

    #[test]
    fn argmin_examples() {
        assert_eq!(argmin_k(&[5.0, 3.0, 4.0]), Some(2));
        assert_eq!(argmin_k(&[3.0, 3.0, 9.0]), Some(1));
        assert_eq!(argmin_k(&[f64::INFINITY, f64::INFINITY]), None);
    }

    #[test]
    fn selection_ties_and_errors() {
        let ml = LikelihoodMatrix::from_fn(4, 2, 1, |_, _| 0.0).unwrap();
        // all segmentations have zero contrast: penalized costs κ, 2κ
        let t = dp_solve(&ml, 1.0, 2).unwrap();
        assert_eq!(select_k(&t).unwrap(), 1);
        let t = dp_solve(&ml, 0.0, 2).unwrap();
        assert_eq!(select_k(&t).unwrap(), 1);
        let ml = LikelihoodMatrix::from_fn(4, 4, 1, |_, _| 0.0).unwrap();
        let t = dp_solve(&ml, 1.0, 3).unwrap();
        assert_eq!(t.final_costs()[1..], [f64::INFINITY, f64::INFINITY]);
        assert!(dp_solve(&ml, -1.0, 2).is_err());
    }
}
