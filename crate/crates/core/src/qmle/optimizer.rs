//! Projected BFGS for smooth objectives on a box.
//!
//! Coordinates sitting on a bound with the gradient pointing outwards are
//! frozen; the quasi-Newton step is taken in the remaining free subspace and
//! the trial point is projected back onto the box before the Armijo test.

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
const ROUNDING: f64 = 1e-13;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Settings {
    pub tolerance: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub x: Vec<f64>,
    /// Value of the maximized function at `x`.
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Something we can maximize.
pub(crate) trait Smooth {
    fn dim(&self) -> usize;
    /// Returns `f(x)` and writes `∇f(x)` into `grad`.
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
    /// Optional positive definite approximation of `-∇²f(x)` (row-major).
    fn curvature(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// Infinity norm of `x - P(x - g)` where `g` is the gradient of the
/// minimized function `-f`.
pub(crate) fn projected_gradient_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((xi, gi), (l, h))| (xi - (xi - gi).clamp(*l, *h)).abs())
        .fold(0.0, f64::max)
}

pub(crate) fn maximize<S: Smooth>(
    f: &S,
    lo: &[f64],
    hi: &[f64],
    start: &[f64],
    settings: Settings,
) -> Outcome {
    let d = f.dim();
    let project = |x: &mut [f64]| {
        for i in 0..d {
            x[i] = x[i].clamp(lo[i], hi[i]);
        }
    };

    let mut x = start.to_vec();
    project(&mut x);
    // Work with φ = -f throughout.
    let mut g = vec![0.0; d];
    let mut phi = -f.value_grad(&x, &mut g);
    g.iter_mut().for_each(|v| *v = -*v);

    let mut b = initial_curvature(f, &x, &g);
    let mut fresh = true;

    let mut trial = vec![0.0; d];
    let mut g_trial = vec![0.0; d];
    let mut dir = vec![0.0; d];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < settings.max_iterations {
        if !phi.is_finite() {
            break;
        }
        if projected_gradient_norm(&x, &g, lo, hi) <= settings.tolerance {
            converged = true;
            break;
        }

        let free: Vec<bool> = (0..d)
            .map(|i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)))
            .collect();
        if !free_direction(&b, &g, &free, &mut dir) || dot(&g, &dir) >= 0.0 {
            b = scaled_identity(d, &g);
            fresh = true;
            free_direction(&b, &g, &free, &mut dir);
        }

        let slope_ok = |x_new: &[f64], phi_new: f64| {
            let decrease: f64 = g
                .iter()
                .zip(x_new.iter().zip(&x))
                .map(|(gi, (a, c))| gi * (a - c))
                .sum();
            if decrease < 0.0 {
                phi_new <= phi + ARMIJO * decrease
            } else {
                phi_new < phi
            }
        };

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            for i in 0..d {
                trial[i] = x[i] + step * dir[i];
            }
            project(&mut trial);
            let phi_new = -f.value_grad(&trial, &mut g_trial);
            // near the optimum φ differences drown in rounding; accept a step
            // that keeps φ level and shrinks the projected gradient
            let level = phi_new <= phi + ROUNDING * (1.0 + phi.abs())
                && projected_gradient_norm(&trial, &neg(&g_trial), lo, hi)
                    < projected_gradient_norm(&x, &g, lo, hi);
            if phi_new.is_finite() && (slope_ok(&trial, phi_new) || level) {
                g_trial.iter_mut().for_each(|v| *v = -*v);
                let s: Vec<f64> = trial.iter().zip(&x).map(|(a, c)| a - c).collect();
                let yv: Vec<f64> = g_trial.iter().zip(&g).map(|(a, c)| a - c).collect();
                bfgs_update(&mut b, &s, &yv, &mut fresh);
                x.copy_from_slice(&trial);
                g.copy_from_slice(&g_trial);
                phi = phi_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if fresh {
                // steepest descent from a reset curvature made no progress either
                break;
            }
            b = scaled_identity(d, &g);
            fresh = true;
            continue;
        }
        iterations += 1;
    }
    if !converged && projected_gradient_norm(&x, &g, lo, hi) <= settings.tolerance {
        converged = true;
    }
    Outcome {
        x,
        value: -phi,
        converged,
        iterations,
    }
}

fn neg(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| -x).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn initial_curvature<S: Smooth>(f: &S, x: &[f64], g: &[f64]) -> Vec<f64> {
    let d = x.len();
    if let Some(m) = f.curvature(x) {
        if m.iter().all(|v| v.is_finite()) && cholesky(&m, d).is_some() {
            return m;
        }
    }
    scaled_identity(d, g)
}

/// Identity scaled so that a full step moves the largest coordinate by 0.1.
fn scaled_identity(d: usize, g: &[f64]) -> Vec<f64> {
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
    let mut b = vec![0.0; d * d];
    for i in 0..d {
        b[i * d + i] = gmax / 0.1;
    }
    b
}

fn bfgs_update(b: &mut [f64], s: &[f64], y: &[f64], fresh: &mut bool) {
    let d = s.len();
    let sy = dot(s, y);
    let norms = dot(s, s).sqrt() * dot(y, y).sqrt();
    if !(sy > 1e-12 * norms) || sy <= 0.0 {
        return;
    }
    let bs: Vec<f64> = (0..d)
        .map(|i| (0..d).map(|j| b[i * d + j] * s[j]).sum())
        .collect();
    let sbs = dot(s, &bs);
    if !(sbs > 0.0) {
        return;
    }
    for i in 0..d {
        for j in 0..d {
            b[i * d + j] += y[i] * y[j] / sy - bs[i] * bs[j] / sbs;
        }
    }
    *fresh = false;
}

/// Solve `B_FF d_F = -g_F` with `d` zero on the frozen coordinates.
fn free_direction(b: &[f64], g: &[f64], free: &[bool], dir: &mut [f64]) -> bool {
    let d = g.len();
    let idx: Vec<usize> = (0..d).filter(|&i| free[i]).collect();
    dir.iter_mut().for_each(|v| *v = 0.0);
    let m = idx.len();
    if m == 0 {
        return true;
    }
    let mut sub = vec![0.0; m * m];
    for (r, &i) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate() {
            sub[r * m + c] = b[i * d + j];
        }
    }
    let Some(l) = cholesky(&sub, m) else {
        return false;
    };
    let rhs: Vec<f64> = idx.iter().map(|&i| -g[i]).collect();
    let sol = cholesky_solve(&l, m, &rhs);
    for (r, &i) in idx.iter().enumerate() {
        dir[i] = sol[r];
    }
    dir.iter().all(|v| v.is_finite())
}

pub(crate) fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum > 0.0) {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[f64], n: usize, rhs: &[f64]) -> Vec<f64> {
    let mut z = rhs.to_vec();
    for i in 0..n {
        for k in 0..i {
            z[i] -= l[i * n + k] * z[k];
        }
        z[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            z[i] -= l[k * n + i] * z[k];
        }
        z[i] /= l[i * n + i];
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic {
        center: Vec<f64>,
        weights: Vec<f64>,
    }

    impl Smooth for Quadratic {
        fn dim(&self) -> usize {
            self.center.len()
        }
        fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            let mut v = 0.0;
            for i in 0..x.len() {
                let r = x[i] - self.center[i];
                v -= self.weights[i] * r * r;
                grad[i] = -2.0 * self.weights[i] * r;
            }
            v
        }
    }

    const SETTINGS: Settings = Settings {
        tolerance: 1e-9,
        max_iterations: 200,
    };

    #[test]
    fn interior_maximum() {
        let q = Quadratic {
            center: vec![0.3, -0.2, 1.5],
            weights: vec![1.0, 40.0, 0.01],
        };
        let out = maximize(&q, &[-5.0; 3], &[5.0; 3], &[2.0, 2.0, 2.0], SETTINGS);
        assert!(out.converged);
        for (a, b) in out.x.iter().zip(&q.center) {
            assert!((a - b).abs() < 1e-6, "{:?}", out.x);
        }
    }

    #[test]
    fn maximum_on_bound() {
        let q = Quadratic {
            center: vec![-1.0, 0.5],
            weights: vec![1.0, 1.0],
        };
        let out = maximize(&q, &[0.0, 0.0], &[1.0, 1.0], &[0.7, 0.9], SETTINGS);
        assert!(out.converged);
        assert_eq!(out.x[0], 0.0);
        assert!((out.x[1] - 0.5).abs() < 1e-7);
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let l = cholesky(&a, 2).unwrap();
        let x = cholesky_solve(&l, 2, &[2.0, 1.0]);
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0).abs() < 1e-12);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0).abs() < 1e-12);
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
    }
}
