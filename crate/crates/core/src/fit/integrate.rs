//! Per-person marginal likelihood contributions.
//!
//! Everything works on the whitened scale `eta = L u`, `u ~ N(0, I)`, so a
//! singular (even zero) trait covariance needs no special casing. Writing
//! `F(u) = Σ_r log Ber(z_r | (L u)_{d_r} + alpha_{k_r}) - u'u / 2`, a person's
//! marginal log-likelihood is `log ∫ exp(F(u)) (2π)^{-D/2} du`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::numeric::{bernoulli_logpmf, gauss_hermite, logsumexp, sigmoid};

use super::model::Obs;

/// Integration rule for the latent traits.
#[derive(Debug, Clone)]
pub(crate) enum Rule {
    /// Adaptive Gauss–Hermite for a single trait dimension.
    Aghq {
        nodes: Vec<f64>,
        log_weights: Vec<f64>,
    },
    Laplace,
}

impl Rule {
    pub fn aghq(n: usize) -> Self {
        let (x, w) = gauss_hermite(n);
        // ln w_k + x_k^2 folds the Hermite weight back out.
        let log_weights = x.iter().zip(&w).map(|(x, w)| w.ln() + x * x).collect();
        Self::Aghq { nodes: x, log_weights }
    }
}

/// Posterior mode of `u` together with the curvature pieces used downstream.
#[derive(Debug, Clone)]
pub(crate) struct Mode {
    pub u: DVector<f64>,
    pub f: f64,
    /// `s_d = Σ_{r in d} (z_r - p_r)`
    pub s: DVector<f64>,
    /// `W_d = Σ_{r in d} p_r (1 - p_r)`
    pub w: DVector<f64>,
    /// `W'_d = Σ_{r in d} p_r (1 - p_r)(1 - 2 p_r)`
    pub w1: DVector<f64>,
    /// `H = I + L' diag(W) L`
    pub h: DMatrix<f64>,
}

struct Eval {
    f: f64,
    s: DVector<f64>,
    w: DVector<f64>,
    w1: DVector<f64>,
}

fn evaluate(obs: &[Obs], alpha: &[f64], l: &DMatrix<f64>, u: &DVector<f64>) -> Eval {
    let d = l.nrows();
    let eta = l * u;
    let mut f = -0.5 * u.dot(u);
    let mut s = DVector::zeros(d);
    let mut w = DVector::zeros(d);
    let mut w1 = DVector::zeros(d);
    for o in obs {
        let k = o.dim as usize;
        let x = eta[k] + alpha[o.param as usize];
        let p = sigmoid(x);
        f += bernoulli_logpmf(o.z, x);
        s[k] += f64::from(u8::from(o.z)) - p;
        let wr = p * (1.0 - p);
        w[k] += wr;
        w1[k] += wr * (1.0 - 2.0 * p);
    }
    Eval { f, s, w, w1 }
}

fn hessian(l: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let d = l.nrows();
    let mut lw = l.clone();
    for a in 0..d {
        for b in 0..d {
            lw[(a, b)] *= w[a];
        }
    }
    DMatrix::identity(d, d) + l.transpose() * lw
}

/// Newton ascent on the concave log-posterior `F`.
pub(crate) fn find_mode(obs: &[Obs], alpha: &[f64], l: &DMatrix<f64>) -> Mode {
    let d = l.nrows();
    let mut u = DVector::zeros(d);
    let mut cur = evaluate(obs, alpha, l, &u);
    for _ in 0..200 {
        let g = l.transpose() * &cur.s - &u;
        if g.amax() < 1e-11 {
            break;
        }
        let h = hessian(l, &cur.w);
        let step = match h.clone().cholesky() {
            Some(c) => c.solve(&g),
            None => g.clone(),
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &u + &step * t;
            let next = evaluate(obs, alpha, l, &trial);
            if next.f >= cur.f - 1e-14 * cur.f.abs().max(1.0) {
                u = trial;
                cur = next;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || (&step * t).amax() < 1e-14 {
            break;
        }
    }
    let h = hessian(l, &cur.w);
    Mode { u, f: cur.f, s: cur.s, w: cur.w, w1: cur.w1, h }
}

/// Laplace approximation of one person's log-likelihood and its exact gradient.
///
/// `grad` (if given) is laid out as `[alpha..., L entries at positions...]`
/// and receives derivatives with respect to the raw Cholesky entries.
fn laplace(
    obs: &[Obs],
    alpha: &[f64],
    l: &DMatrix<f64>,
    positions: &[(usize, usize)],
    grad: Option<&mut [f64]>,
) -> f64 {
    let m = find_mode(obs, alpha, l);
    let Some(chol) = m.h.clone().cholesky() else {
        return f64::NAN;
    };
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let value = m.f - 0.5 * logdet;
    let Some(grad) = grad else { return value };

    let d = l.nrows();
    let h_inv = chol.inverse();
    let l_hinv = l * &h_inv;
    let mm = &l_hinv * l.transpose();
    let mut wdm = DVector::zeros(d);
    for a in 0..d {
        wdm[a] = m.w1[a] * mm[(a, a)];
    }
    let q = l.transpose() * wdm;
    let v = &h_inv * q;
    let lv = l * &v;
    let eta = l * &m.u;

    let n_alpha = alpha.len();
    for o in obs {
        let k = o.dim as usize;
        let x = eta[k] + alpha[o.param as usize];
        let p = sigmoid(x);
        let wr = p * (1.0 - p);
        let w1r = wr * (1.0 - 2.0 * p);
        let e = f64::from(u8::from(o.z)) - p;
        grad[o.param as usize] += e - 0.5 * w1r * mm[(k, k)] + 0.5 * wr * lv[k];
    }
    for (idx, &(a, b)) in positions.iter().enumerate() {
        let g = m.s[a] * m.u[b]
            - m.w[a] * l_hinv[(a, b)]
            - 0.5 * m.w1[a] * m.u[b] * mm[(a, a)]
            - 0.5 * (v[b] * m.s[a] - m.w[a] * m.u[b] * lv[a]);
        grad[n_alpha + idx] += g;
    }
    value
}

/// Adaptive Gauss–Hermite quadrature for one trait dimension.
///
/// The gradient is the quadrature estimate of the posterior expectation of
/// the complete-data score, holding the adapted nodes fixed.
fn aghq(
    obs: &[Obs],
    alpha: &[f64],
    l: &DMatrix<f64>,
    nodes: &[f64],
    log_weights: &[f64],
    grad: Option<&mut [f64]>,
) -> f64 {
    debug_assert_eq!(l.nrows(), 1);
    let sigma = l[(0, 0)];
    let m = find_mode(obs, alpha, l);
    let u_hat = m.u[0];
    let tau = 1.0 / m.h[(0, 0)].sqrt();
    let scale = std::f64::consts::SQRT_2 * tau;

    let log_post = |u: f64| -> f64 {
        let mut f = -0.5 * u * u;
        for o in obs {
            f += bernoulli_logpmf(o.z, sigma * u + alpha[o.param as usize]);
        }
        f
    };
    let points: Vec<f64> = nodes.iter().map(|x| u_hat + scale * x).collect();
    let terms: Vec<f64> = points.iter().zip(log_weights).map(|(&u, lw)| lw + log_post(u)).collect();
    let lse = logsumexp(&terms);
    let value = scale.ln() + lse - 0.5 * (2.0 * PI).ln();

    if let Some(grad) = grad {
        let n_alpha = alpha.len();
        for (&u, t) in points.iter().zip(&terms) {
            let weight = (t - lse).exp();
            if weight < 1e-300 {
                continue;
            }
            let mut score_eta = 0.0;
            for o in obs {
                let e = f64::from(u8::from(o.z)) - sigmoid(sigma * u + alpha[o.param as usize]);
                grad[o.param as usize] += weight * e;
                score_eta += e;
            }
            // d/dL of log Ber(z | L u + alpha) is e * u.
            grad[n_alpha] += weight * score_eta * u;
        }
    }
    value
}

/// One person's marginal log-likelihood; adds its gradient into `grad`.
pub(crate) fn person_loglik(
    obs: &[Obs],
    alpha: &[f64],
    l: &DMatrix<f64>,
    rule: &Rule,
    positions: &[(usize, usize)],
    grad: Option<&mut [f64]>,
) -> f64 {
    if obs.is_empty() {
        return 0.0;
    }
    match rule {
        Rule::Aghq { nodes, log_weights } if l.nrows() == 1 => aghq(obs, alpha, l, nodes, log_weights, grad),
        _ => laplace(obs, alpha, l, positions, grad),
    }
}
