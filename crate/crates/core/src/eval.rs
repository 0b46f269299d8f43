//! Does fuzzy precision predict fast responses?
//!
//! For each simulated replication the ratings are fitted with a sequential
//! IRTree (common trait, common item easiness), every cell is fuzzified, and
//! per item the median-split response times are regressed on precision with
//! a logistic model. The AUC of the model's fast/slow predictions is
//! averaged over items, then over replications.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fit::{fit, FitError, FitOptions, ModelSpec};
use crate::fuzzy::{fuzzify, CategoryDistribution};
use crate::numeric::sigmoid;
use crate::sim::{generate, SimScenario};
use crate::tree::{expand, TreeError, TreeSpec};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("outcome has a single class")]
    DegenerateOutcome,
    #[error("need at least two observations with matching lengths (got {x} scores, {y} labels)")]
    BadInput { x: usize, y: usize },
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Per column: 1 when the time is strictly below the column median, else 0.
///
/// The median of an even-length column is the midpoint of the two central
/// order statistics, so ties with the median count as slow.
pub fn median_split(times: &[Vec<f64>]) -> Vec<Vec<u8>> {
    let n_rows = times.len();
    let n_cols = times.first().map_or(0, Vec::len);
    let mut out = vec![vec![0u8; n_cols]; n_rows];
    for j in 0..n_cols {
        let mut col: Vec<f64> = times.iter().map(|r| r[j]).collect();
        let med = median(&mut col);
        for (i, row) in times.iter().enumerate() {
            out[i][j] = u8::from(row[j] < med);
        }
    }
    out
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Logistic regression of a binary outcome on one predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub intercept: f64,
    pub slope: f64,
    pub fitted: Vec<f64>,
    pub iterations: usize,
    /// The classes were (quasi-)separated by the predictor; coefficients are clamped.
    pub separated: bool,
}

pub const LOGISTIC_TOL: f64 = 1e-8;
pub const LOGISTIC_MAX_ITER: usize = 25;
pub const COEFFICIENT_BOUND: f64 = 15.0;

/// Maximum-likelihood logistic fit by iteratively reweighted least squares.
///
/// The predictor is standardized internally. When the classes are separated
/// the MLE does not exist; the boundary found by IRLS is kept and the slope
/// is clamped to `±COEFFICIENT_BOUND`, which preserves the ranking of the
/// fitted probabilities.
pub fn logistic_fit(x: &[f64], y: &[u8]) -> Result<LogisticFit, EvalError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(EvalError::BadInput { x: x.len(), y: y.len() });
    }
    let n = x.len() as f64;
    let ones = y.iter().filter(|&&v| v == 1).count();
    if ones == 0 || ones == y.len() {
        return Err(EvalError::DegenerateOutcome);
    }
    let ybar = ones as f64 / n;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !sd.is_finite() || sd <= 0.0 {
        let intercept = (ybar / (1.0 - ybar)).ln();
        return Ok(LogisticFit { intercept, slope: 0.0, fitted: vec![ybar; x.len()], iterations: 0, separated: false });
    }
    let z: Vec<f64> = x.iter().map(|v| (v - mean) / sd).collect();
    let separated = is_separated(x, y);

    let mut b0 = (ybar / (1.0 - ybar)).ln();
    let mut b1 = 0.0;
    let mut iterations = 0;
    while iterations < LOGISTIC_MAX_ITER {
        iterations += 1;
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&zi, &yi) in z.iter().zip(y) {
            let p = sigmoid(b0 + b1 * zi);
            let w = p * (1.0 - p);
            let r = f64::from(yi) - p;
            g0 += r;
            g1 += r * zi;
            h00 += w;
            h01 += w * zi;
            h11 += w * zi * zi;
        }
        let det = h00 * h11 - h01 * h01;
        if !det.is_finite() || det <= 0.0 {
            break;
        }
        let d0 = (h11 * g0 - h01 * g1) / det;
        let d1 = (h00 * g1 - h01 * g0) / det;
        b0 += d0;
        b1 += d1;
        if d0.abs().max(d1.abs()) < LOGISTIC_TOL {
            break;
        }
        if separated && b1.abs() / sd > COEFFICIENT_BOUND {
            break;
        }
    }
    let mut slope = b1 / sd;
    let mut intercept = b0 - slope * mean;
    if separated {
        let boundary = if b1 != 0.0 { mean - b0 * sd / b1 } else { mean };
        slope = slope.clamp(-COEFFICIENT_BOUND, COEFFICIENT_BOUND);
        if slope == 0.0 {
            slope = if separated_upward(x, y) { COEFFICIENT_BOUND } else { -COEFFICIENT_BOUND };
        }
        intercept = (-slope * boundary).clamp(-COEFFICIENT_BOUND, COEFFICIENT_BOUND);
    }
    let fitted = x.iter().map(|&v| sigmoid(intercept + slope * v)).collect();
    Ok(LogisticFit { intercept, slope, fitted, iterations, separated })
}

fn class_ranges(x: &[f64], y: &[u8]) -> ((f64, f64), (f64, f64)) {
    let mut r0 = (f64::INFINITY, f64::NEG_INFINITY);
    let mut r1 = (f64::INFINITY, f64::NEG_INFINITY);
    for (&v, &c) in x.iter().zip(y) {
        let r = if c == 1 { &mut r1 } else { &mut r0 };
        r.0 = r.0.min(v);
        r.1 = r.1.max(v);
    }
    (r0, r1)
}

fn separated_upward(x: &[f64], y: &[u8]) -> bool {
    let (r0, r1) = class_ranges(x, y);
    r0.1 <= r1.0
}

/// Complete or quasi-complete separation by a single predictor.
fn is_separated(x: &[f64], y: &[u8]) -> bool {
    let (r0, r1) = class_ranges(x, y);
    r0.1 <= r1.0 || r1.1 <= r0.0
}

/// Area under the ROC curve via the Mann–Whitney statistic; tied
/// positive/negative pairs count one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(EvalError::BadInput { x: scores.len(), y: labels.len() });
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::DegenerateOutcome);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of midranks (1-based) over positives.
    let mut rank_sum = 0.0;
    let mut k = 0;
    while k < order.len() {
        let mut end = k + 1;
        while end < order.len() && scores[order[end]] == scores[order[k]] {
            end += 1;
        }
        let midrank = (k + 1 + end) as f64 / 2.0;
        let pos_in_block = order[k..end].iter().filter(|&&i| labels[i] == 1).count();
        rank_sum += midrank * pos_in_block as f64;
        k = end;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// What the AUC is computed on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AucScore {
    /// Predicted class: fast when the fitted probability is at least 0.5.
    #[default]
    Classified,
    /// The fitted probabilities themselves.
    Probability,
}

impl std::str::FromStr for AucScore {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "classified" => Ok(Self::Classified),
            "probability" => Ok(Self::Probability),
            other => Err(format!("unknown AUC score `{other}` (expected classified or probability)")),
        }
    }
}

/// Outcome of one replication of a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub replication: usize,
    /// AUC per item; `None` when the item's outcome was single-class.
    pub item_auc: Vec<Option<f64>>,
    /// Mean over items with a defined AUC.
    pub auc_avg: f64,
}

/// Precision of the fuzzy number for every cell of a rating matrix, after
/// fitting the sequential tree with a common trait and common easiness.
pub fn precision_matrix(
    ratings: &crate::Ratings,
    categories: usize,
    opts: &FitOptions,
) -> Result<Vec<Vec<f64>>, EvalError> {
    let tree = TreeSpec::linear(categories)?;
    let expansion = expand(ratings, &tree)?;
    let result = fit(&expansion, &ModelSpec::common(), opts)?;
    let mut out = vec![vec![f64::NAN; ratings.n_items()]; ratings.n_persons()];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let p = tree.probabilities_from_logits(&result.node_logits(i, j));
            let dist = CategoryDistribution::new(p).expect("tree probabilities form a distribution");
            *cell = fuzzify(&dist).s;
        }
    }
    Ok(out)
}

/// AUC of precision-based fast/slow prediction for one column set.
pub fn item_aucs(precision: &[Vec<f64>], times: &[Vec<f64>], score: AucScore) -> Vec<Option<f64>> {
    let fast = median_split(times);
    let n_items = times.first().map_or(0, Vec::len);
    (0..n_items)
        .map(|j| {
            let x: Vec<f64> = precision.iter().map(|r| r[j]).collect();
            let y: Vec<u8> = fast.iter().map(|r| r[j]).collect();
            let model = logistic_fit(&x, &y).ok()?;
            let scores: Vec<f64> = match score {
                AucScore::Probability => model.fitted,
                AucScore::Classified => model.fitted.iter().map(|&p| f64::from(u8::from(p >= 0.5))).collect(),
            };
            auc(&scores, &y).ok()
        })
        .collect()
}

/// Generate, fit, fuzzify and score one replication.
pub fn run_replication(
    scenario: &SimScenario,
    replication: usize,
    opts: &FitOptions,
    score: AucScore,
) -> Result<ReplicationResult, EvalError> {
    let data = generate(scenario, replication);
    let precision = precision_matrix(&data.ratings, scenario.categories, opts)?;
    let item_auc = item_aucs(&precision, &data.times, score);
    let defined: Vec<f64> = item_auc.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(EvalError::DegenerateOutcome);
    }
    let auc_avg = defined.iter().sum::<f64>() / defined.len() as f64;
    Ok(ReplicationResult { replication, item_auc, auc_avg })
}

/// Aggregated AUC for one design cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub scenario: SimScenario,
    /// Mean of the per-replication AUC averages.
    pub mean: f64,
    /// Sample standard deviation across replications (0 when only one succeeded).
    pub sd: f64,
    /// Replications that completed.
    pub completed: usize,
    pub failures: Vec<(usize, String)>,
    /// Mean AUC per item across completed replications.
    pub item_mean: Vec<Option<f64>>,
    pub replications: Vec<ReplicationResult>,
}

/// Run every replication of a cell in parallel and aggregate in replication order.
pub fn run_cell(scenario: &SimScenario, opts: &FitOptions, score: AucScore) -> CellSummary {
    let mut opts = opts.clone();
    opts.standard_errors = false;
    let outcomes: Vec<(usize, Result<ReplicationResult, EvalError>)> =
        (0..scenario.replications).into_par_iter().map(|b| (b, run_replication(scenario, b, &opts, score))).collect();
    let mut replications = Vec::new();
    let mut failures = Vec::new();
    for (b, outcome) in outcomes {
        match outcome {
            Ok(r) => replications.push(r),
            Err(e) => failures.push((b, e.to_string())),
        }
    }
    let values: Vec<f64> = replications.iter().map(|r| r.auc_avg).collect();
    let (mean, sd) = mean_sd(&values);
    let item_mean = (0..scenario.items)
        .map(|j| {
            let v: Vec<f64> = replications.iter().filter_map(|r| r.item_auc[j]).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect();
    CellSummary {
        scenario: scenario.clone(),
        mean,
        sd,
        completed: replications.len(),
        failures,
        item_mean,
        replications,
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
