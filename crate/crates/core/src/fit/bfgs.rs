//! Minimal BFGS minimizer with a backtracking Armijo line search.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceStatus {
    Converged,
    MaxIterations,
    /// No descent step could be found before the tolerances were met.
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub(crate) struct BfgsOptions {
    pub rel_tol: f64,
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Largest allowed change of any coordinate in one step.
    pub max_step: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct BfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub status: ConvergenceStatus,
    /// Objective after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimize `objective`, which returns `None` where the function is undefined.
pub(crate) fn minimize<F>(objective: F, x0: Vec<f64>, opts: &BfgsOptions) -> Option<BfgsOutcome>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let (mut f, mut g) = objective(&x0)?;
    let mut x = x0;
    let mut trace = vec![f];
    if n == 0 {
        return Some(BfgsOutcome { x, f, grad: g, iterations: 0, status: ConvergenceStatus::Converged, trace });
    }
    // Inverse Hessian approximation, row-major.
    let mut h = identity(n);
    let mut status = ConvergenceStatus::MaxIterations;
    let mut iterations = 0;
    let mut last_rel_change = f64::INFINITY;

    while iterations < opts.max_iter {
        if norm(&g) < opts.grad_tol && last_rel_change < opts.rel_tol {
            status = ConvergenceStatus::Converged;
            break;
        }
        let mut dir = mat_vec(&h, &g, n);
        dir.iter_mut().for_each(|v| *v = -*v);
        let mut slope = dot(&dir, &g);
        if slope >= 0.0 || !slope.is_finite() {
            h = identity(n);
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&dir, &g);
        }
        let biggest = dir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut t = if biggest > opts.max_step { opts.max_step / biggest } else { 1.0 };

        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            if let Some((ft, gt)) = objective(&trial) {
                if ft.is_finite() && ft <= f + 1e-4 * t * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            status = if norm(&g) < opts.grad_tol {
                ConvergenceStatus::Converged
            } else {
                ConvergenceStatus::LineSearchFailed
            };
            break;
        };
        iterations += 1;

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if iterations == 1 {
                let scale = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v *= scale);
            }
            bfgs_update(&mut h, &s, &y, sy, n);
        }
        last_rel_change = (f - f_new).abs() / f.abs().max(1.0);
        x = x_new;
        f = f_new;
        g = g_new;
        trace.push(f);
    }
    if status == ConvergenceStatus::MaxIterations && norm(&g) < opts.grad_tol && last_rel_change < opts.rel_tol {
        status = ConvergenceStatus::Converged;
    }
    Some(BfgsOutcome { x, f, grad: g, iterations, status, trace })
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

fn mat_vec(h: &[f64], v: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|i| dot(&h[i * n..(i + 1) * n], v)).collect()
}

fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, n: usize) {
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y, n);
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> BfgsOptions {
        BfgsOptions { rel_tol: 1e-12, grad_tol: 1e-8, max_iter: 500, max_step: 10.0 }
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            Some((v, g))
        };
        let out = minimize(f, vec![-1.2, 1.0], &opts()).unwrap();
        assert_eq!(out.status, ConvergenceStatus::Converged);
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6);
        assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn quadratic_exact() {
        let f = |x: &[f64]| Some((3.0 * (x[0] - 2.0).powi(2) + 0.5 * x[1] * x[1], vec![6.0 * (x[0] - 2.0), x[1]]));
        let out = minimize(f, vec![0.0, 5.0], &opts()).unwrap();
        assert!((out.x[0] - 2.0).abs() < 1e-8 && out.x[1].abs() < 1e-8);
    }

    #[test]
    fn undefined_start_is_none() {
        let f = |_: &[f64]| None;
        assert!(minimize(f, vec![0.0], &opts()).is_none());
    }
}
