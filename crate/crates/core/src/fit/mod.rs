//! Marginal maximum likelihood for IRTree models.
//!
//! Node-level pseudo-responses follow a logistic model with linear predictor
//! `eta_{i,d(n)} + alpha_{j,n}`, where the person traits `eta_i` are centred
//! Gaussian with covariance `Σ = L L'`. Traits are integrated out by adaptive
//! Gauss–Hermite quadrature when there is one dimension and by the Laplace
//! approximation otherwise. Item easiness and the log-diagonal Cholesky
//! parameters are maximized jointly with BFGS.

mod bfgs;
mod integrate;
pub mod model;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::order_free_sum;
use crate::tree::BinaryExpansion;

pub use bfgs::ConvergenceStatus;
pub use model::{
    cholesky_from_params, cholesky_positions, params_from_cholesky, psd_cholesky, ItemStructure, ModelSpec,
    TraitStructure,
};

use bfgs::{minimize, BfgsOptions};
use integrate::{find_mode, person_loglik, Rule};
use model::Design;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("no binary observations to fit")]
    EmptyExpansion,
    #[error("invalid model: {0}")]
    BadModel(String),
    #[error("parameter vector has length {found}; expected {expected}")]
    BadParameters { found: usize, expected: usize },
    #[error("marginal likelihood is not finite at the requested parameters")]
    NonFiniteLikelihood,
    #[error("optimizer stopped without converging ({status:?} after {iterations} iterations)", status = .0.convergence.status, iterations = .0.convergence.iterations)]
    NoConvergence(Box<FitResult>),
}

/// How latent traits are integrated out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationMode {
    /// Adaptive Gauss–Hermite for one dimension, Laplace otherwise.
    Auto,
    /// Laplace approximation regardless of dimension.
    Laplace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub quad_nodes: usize,
    pub integration: IntegrationMode,
    pub rel_tol: f64,
    pub grad_tol: f64,
    pub max_iter: usize,
    pub standard_errors: bool,
    /// Easiness assigned to item × node cells whose outcomes are all 0 or all 1.
    pub separation_bound: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            quad_nodes: 15,
            integration: IntegrationMode::Auto,
            rel_tol: 1e-8,
            grad_tol: 1e-4,
            max_iter: 500,
            standard_errors: true,
            separation_bound: 10.0,
        }
    }
}

impl FitOptions {
    fn rule(&self, d: usize) -> Rule {
        match self.integration {
            IntegrationMode::Auto if d == 1 => Rule::aghq(self.quad_nodes.max(1)),
            _ => Rule::Laplace,
        }
    }

    fn describe_rule(&self, d: usize) -> String {
        match self.rule(d) {
            Rule::Aghq { .. } => format!("aghq({})", self.quad_nodes.max(1)),
            Rule::Laplace => "laplace".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaStatus {
    Free,
    /// Every outcome was 1; clamped at `+separation_bound`.
    SeparatedAllOnes,
    /// Every outcome was 0; clamped at `-separation_bound`.
    SeparatedAllZeros,
    /// No observations; fixed at 0.
    NoData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    pub item: usize,
    /// `None` when the easiness is shared across nodes.
    pub node: Option<usize>,
    pub estimate: f64,
    pub se: Option<f64>,
    pub status: AlphaStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaEstimate {
    pub covariance: Vec<Vec<f64>>,
    pub cholesky: Vec<Vec<f64>>,
    /// Log-diagonal Cholesky parameters as optimized.
    pub unconstrained: Vec<f64>,
    pub unconstrained_se: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub status: ConvergenceStatus,
    /// Log-likelihood after each accepted optimizer step.
    #[serde(default)]
    pub loglik_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelSpec,
    pub n_persons: usize,
    pub n_items: usize,
    pub n_nodes: usize,
    pub dimension: usize,
    pub node_to_dimension: Vec<usize>,
    pub integration: String,
    pub alpha: Vec<AlphaEstimate>,
    pub sigma: SigmaEstimate,
    /// Posterior modes, one row per person.
    pub eta_hat: Vec<Vec<f64>>,
    pub loglik: f64,
    pub n_params: usize,
    pub aic: f64,
    pub convergence: Convergence,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn alpha_vector(&self) -> Vec<f64> {
        self.alpha.iter().map(|a| a.estimate).collect()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        matrix_from_rows(&self.sigma.covariance)
    }

    /// Node logits `eta_{i,d(n)} + alpha_{j,n}` for one person × item cell.
    pub fn node_logits(&self, person: usize, item: usize) -> Vec<f64> {
        (0..self.n_nodes)
            .map(|n| {
                let eta = self.eta_hat[person][self.node_to_dimension[n]];
                let a = self.model.alpha_index(item, n, self.n_nodes);
                eta + self.alpha[a].estimate
            })
            .collect()
    }

    /// Standard deviation of the first trait dimension.
    pub fn sigma_sd(&self) -> f64 {
        self.sigma.covariance[0][0].sqrt()
    }
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let d = rows.len();
    DMatrix::from_fn(d, d, |a, b| rows[a][b])
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|a| (0..m.ncols()).map(|b| m[(a, b)]).collect()).collect()
}

/// Shared evaluation state for a design and integration rule.
struct Objective<'a> {
    design: &'a Design,
    rule: Rule,
    positions: Vec<(usize, usize)>,
}

impl<'a> Objective<'a> {
    fn new(design: &'a Design, opts: &FitOptions) -> Self {
        Self { design, rule: opts.rule(design.d), positions: cholesky_positions(design.structure, design.d) }
    }

    fn split<'t>(&self, theta: &'t [f64]) -> (&'t [f64], DMatrix<f64>) {
        let (alpha, cov) = theta.split_at(self.design.n_alpha);
        (alpha, cholesky_from_params(self.design.structure, self.design.d, cov))
    }

    fn loglik(&self, theta: &[f64]) -> f64 {
        let (alpha, l) = self.split(theta);
        let mut parts: Vec<f64> = self
            .design
            .persons
            .par_iter()
            .map(|obs| person_loglik(obs, alpha, &l, &self.rule, &self.positions, None))
            .collect();
        order_free_sum(&mut parts)
    }

    fn loglik_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let (alpha, l) = self.split(theta);
        let p = theta.len();
        let per_person: Vec<(f64, Vec<f64>)> = self
            .design
            .persons
            .par_iter()
            .map(|obs| {
                let mut g = vec![0.0; p];
                let v = person_loglik(obs, alpha, &l, &self.rule, &self.positions, Some(&mut g));
                (v, g)
            })
            .collect();
        let mut values: Vec<f64> = per_person.iter().map(|(v, _)| *v).collect();
        let value = order_free_sum(&mut values);
        let mut column = vec![0.0; per_person.len()];
        let mut grad = vec![0.0; p];
        for (k, gk) in grad.iter_mut().enumerate() {
            for (c, (_, g)) in column.iter_mut().zip(&per_person) {
                *c = g[k];
            }
            *gk = order_free_sum(&mut column);
        }
        // Chain rule from Cholesky entries to log-diagonal parameters.
        let n_alpha = self.design.n_alpha;
        for (idx, &(a, b)) in self.positions.iter().enumerate() {
            if a == b {
                grad[n_alpha + idx] *= l[(a, a)];
            }
        }
        (value, grad)
    }
}

fn check_theta(design: &Design, theta: &[f64]) -> Result<(), FitError> {
    let expected = design.n_params();
    if theta.len() != expected {
        return Err(FitError::BadParameters { found: theta.len(), expected });
    }
    if theta.iter().any(|v| v.is_nan()) {
        return Err(FitError::NonFiniteLikelihood);
    }
    Ok(())
}

/// Marginal log-likelihood at the packed parameter vector
/// `[alpha..., covariance parameters...]`.
///
/// Covariance parameters are the log-diagonal Cholesky entries (row-major
/// lower triangle for the correlated structure); a log-diagonal of `-inf`
/// encodes a zero standard deviation.
pub fn marginal_loglik(
    expansion: &BinaryExpansion,
    spec: &ModelSpec,
    theta: &[f64],
    opts: &FitOptions,
) -> Result<f64, FitError> {
    let design = Design::new(expansion, spec)?;
    check_theta(&design, theta)?;
    if expansion.rows.is_empty() {
        return Err(FitError::EmptyExpansion);
    }
    let v = Objective::new(&design, opts).loglik(theta);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(FitError::NonFiniteLikelihood)
    }
}

/// Marginal log-likelihood and the gradient the optimizer works with.
pub fn marginal_loglik_grad(
    expansion: &BinaryExpansion,
    spec: &ModelSpec,
    theta: &[f64],
    opts: &FitOptions,
) -> Result<(f64, Vec<f64>), FitError> {
    let design = Design::new(expansion, spec)?;
    check_theta(&design, theta)?;
    if expansion.rows.is_empty() {
        return Err(FitError::EmptyExpansion);
    }
    let (v, g) = Objective::new(&design, opts).loglik_grad(theta);
    if v.is_finite() && g.iter().all(|x| x.is_finite()) {
        Ok((v, g))
    } else {
        Err(FitError::NonFiniteLikelihood)
    }
}

/// Fit the model by marginal maximum likelihood.
///
/// Item × node parameters whose outcomes are all 0 or all 1 are clamped at
/// `±separation_bound` and reported in `warnings`. A run that stops without
/// meeting both tolerances returns [`FitError::NoConvergence`] carrying the
/// last iterate.
pub fn fit(expansion: &BinaryExpansion, spec: &ModelSpec, opts: &FitOptions) -> Result<FitResult, FitError> {
    if expansion.rows.is_empty() {
        return Err(FitError::EmptyExpansion);
    }
    let design = Design::new(expansion, spec)?;
    let objective = Objective::new(&design, opts);
    let n_alpha = design.n_alpha;
    let n_params = design.n_params();

    let mut theta = vec![0.0; n_params];
    let mut status = vec![AlphaStatus::Free; n_alpha];
    let mut warnings = Vec::new();
    for (k, &(zeros, ones)) in design.outcome_counts().iter().enumerate() {
        let (item, node) = alpha_owner(spec, k, expansion.n_nodes);
        let label = match node {
            Some(n) => format!("item {} node {}", item + 1, n + 1),
            None => format!("item {}", item + 1),
        };
        if zeros + ones == 0 {
            status[k] = AlphaStatus::NoData;
            warnings.push(format!("{label}: no observations; easiness fixed at 0"));
        } else if zeros == 0 {
            status[k] = AlphaStatus::SeparatedAllOnes;
            theta[k] = opts.separation_bound;
            warnings.push(format!("{label}: all outcomes 1; easiness clamped at {}", opts.separation_bound));
        } else if ones == 0 {
            status[k] = AlphaStatus::SeparatedAllZeros;
            theta[k] = -opts.separation_bound;
            warnings.push(format!("{label}: all outcomes 0; easiness clamped at {}", -opts.separation_bound));
        } else {
            let p = (ones as f64 + 0.5) / ((zeros + ones) as f64 + 1.0);
            theta[k] = (p / (1.0 - p)).ln().clamp(-3.0, 3.0);
        }
    }
    // Σ starts at the identity: log-diagonal 0, off-diagonal 0.

    let free: Vec<usize> = (0..n_params).filter(|&k| k >= n_alpha || status[k] == AlphaStatus::Free).collect();
    let embed = |x: &[f64]| {
        let mut full = theta.clone();
        for (&k, &v) in free.iter().zip(x) {
            full[k] = v;
        }
        full
    };
    let neg = |x: &[f64]| -> Option<(f64, Vec<f64>)> {
        let full = embed(x);
        let (v, g) = objective.loglik_grad(&full);
        if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return None;
        }
        Some((-v, free.iter().map(|&k| -g[k]).collect()))
    };
    let x0: Vec<f64> = free.iter().map(|&k| theta[k]).collect();
    let bopts = BfgsOptions { rel_tol: opts.rel_tol, grad_tol: opts.grad_tol, max_iter: opts.max_iter, max_step: 5.0 };
    let out = minimize(neg, x0, &bopts).ok_or(FitError::NonFiniteLikelihood)?;
    let theta_hat = embed(&out.x);

    let free_se = if opts.standard_errors { standard_errors(&neg, &out.x) } else { vec![None; free.len()] };
    let mut se = vec![None; n_params];
    for (&k, s) in free.iter().zip(free_se) {
        se[k] = s;
    }

    let (alpha_hat, cov_params) = theta_hat.split_at(n_alpha);
    let l = cholesky_from_params(design.structure, design.d, cov_params);
    let cov = &l * l.transpose();
    let eta_hat = modes(&design, alpha_hat, &l);
    let (node_to_dimension, d) = spec.resolve_dimensions(expansion.n_nodes)?;

    let alpha = (0..n_alpha)
        .map(|k| {
            let (item, node) = alpha_owner(spec, k, expansion.n_nodes);
            AlphaEstimate { item, node, estimate: alpha_hat[k], se: se[k], status: status[k] }
        })
        .collect();
    let loglik = -out.f;
    let result = FitResult {
        model: spec.clone(),
        n_persons: expansion.n_persons,
        n_items: expansion.n_items,
        n_nodes: expansion.n_nodes,
        dimension: d,
        node_to_dimension,
        integration: opts.describe_rule(d),
        alpha,
        sigma: SigmaEstimate {
            covariance: matrix_rows(&cov),
            cholesky: matrix_rows(&l),
            unconstrained: cov_params.to_vec(),
            unconstrained_se: se[n_alpha..].to_vec(),
        },
        eta_hat,
        loglik,
        n_params,
        aic: 2.0 * n_params as f64 - 2.0 * loglik,
        convergence: Convergence {
            iterations: out.iterations,
            gradient_norm: out.grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
            status: out.status,
            loglik_trace: out.trace.iter().map(|f| -f).collect(),
        },
        warnings,
    };
    if out.status == ConvergenceStatus::Converged {
        Ok(result)
    } else {
        Err(FitError::NoConvergence(Box::new(result)))
    }
}

fn alpha_owner(spec: &ModelSpec, k: usize, n_nodes: usize) -> (usize, Option<usize>) {
    match spec.item_structure {
        ItemStructure::Common => (k, None),
        ItemStructure::PerNode => (k / n_nodes, Some(k % n_nodes)),
    }
}

/// Standard errors from the inverse of a central-difference Hessian of the
/// negative log-likelihood (built from the analytic gradient).
fn standard_errors<F>(neg: &F, x: &[f64]) -> Vec<Option<f64>>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x.len();
    let mut hess = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let h = 1e-4 * x[i].abs().max(1.0);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        let (Some((_, gp)), Some((_, gm))) = (neg(&xp), neg(&xm)) else {
            return vec![None; n];
        };
        for j in 0..n {
            hess[(i, j)] = (gp[j] - gm[j]) / (2.0 * h);
        }
    }
    let sym = (&hess + hess.transpose()) * 0.5;
    let Some(inv) = sym.try_inverse() else {
        return vec![None; n];
    };
    (0..n)
        .map(|i| {
            let v = inv[(i, i)];
            (v.is_finite() && v > 0.0).then(|| v.sqrt())
        })
        .collect()
}

fn modes(design: &Design, alpha: &[f64], l: &DMatrix<f64>) -> Vec<Vec<f64>> {
    design
        .persons
        .par_iter()
        .map(|obs| {
            if obs.is_empty() {
                return vec![0.0; design.d];
            }
            let m = find_mode(obs, alpha, l);
            (l * m.u).iter().copied().collect()
        })
        .collect()
}

/// Empirical-Bayes trait predictions: each person's posterior mode of `eta`
/// given their binary rows, the easiness vector and the trait covariance.
/// Persons without observations get the prior mode 0.
pub fn predict_eta(
    expansion: &BinaryExpansion,
    spec: &ModelSpec,
    alpha_hat: &[f64],
    sigma_hat: &DMatrix<f64>,
) -> Result<Vec<Vec<f64>>, FitError> {
    let design = Design::new(expansion, spec)?;
    if alpha_hat.len() != design.n_alpha {
        return Err(FitError::BadParameters { found: alpha_hat.len(), expected: design.n_alpha });
    }
    if sigma_hat.nrows() != design.d || sigma_hat.ncols() != design.d {
        return Err(FitError::BadModel(format!(
            "trait covariance is {}x{}; model has {} dimensions",
            sigma_hat.nrows(),
            sigma_hat.ncols(),
            design.d
        )));
    }
    let l = psd_cholesky(sigma_hat)?;
    Ok(modes(&design, alpha_hat, &l))
}
