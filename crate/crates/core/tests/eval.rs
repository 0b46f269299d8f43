mod common;

use irtree_fuzzy::eval::{auc, item_aucs, logistic_fit, median_split, run_cell, AucScore, EvalError};
use irtree_fuzzy::fit::FitOptions;
use irtree_fuzzy::sim::SimScenario;
use proptest::prelude::*;
use rand::RngExt;

/// AUC by comparing every positive with every negative.
fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                wins += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

fn logistic_loglik(x: &[f64], y: &[u8], b0: f64, b1: f64) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let eta = b0 + b1 * xi;
            let s = if yi == 1 { eta } else { -eta };
            -(1.0 + (-s).exp()).ln()
        })
        .sum()
}

/// Ternary search for the maximum of a concave function on `[lo, hi]`.
fn ternary<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if f(a) < f(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    0.5 * (lo + hi)
}

/// Logistic MLE by nested one-dimensional searches of the concave likelihood.
fn search_mle(x: &[f64], y: &[u8]) -> (f64, f64) {
    let best_b0 = |b1: f64| ternary(|b0| logistic_loglik(x, y, b0, b1), -30.0, 30.0);
    let b1 = ternary(|b1| logistic_loglik(x, y, best_b0(b1), b1), -20.0, 20.0);
    (best_b0(b1), b1)
}

#[test]
fn logistic_fit_matches_likelihood_search() {
    for seed in 0..8 {
        let mut r = common::rng(seed);
        let n = r.random_range(30..80);
        let (b0, b1) = (r.random_range(-1.0..1.0), r.random_range(-2.0..2.0));
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let mut y: Vec<u8> =
            x.iter().map(|&v| u8::from(r.random::<f64>() < 1.0 / (1.0 + (-(b0 + b1 * v)).exp()))).collect();
        // keep both classes on both sides so the MLE exists
        y[0] = 0;
        y[1] = 1;
        let fit = logistic_fit(&x, &y).unwrap();
        assert!(!fit.separated);
        let (s0, s1) = search_mle(&x, &y);
        assert!((fit.intercept - s0).abs() < 1e-6, "seed {seed}: {} vs {s0}", fit.intercept);
        assert!((fit.slope - s1).abs() < 1e-6, "seed {seed}: {} vs {s1}", fit.slope);
    }
}

#[test]
fn median_split_on_ties() {
    let t = vec![vec![1.0, 2.0], vec![2.0, 2.0], vec![2.0, 2.0], vec![3.0, 1.0]];
    // medians 2 and 2: only values strictly below count as fast
    assert_eq!(median_split(&t), vec![vec![1, 0], vec![0, 0], vec![0, 0], vec![0, 1]]);
}

#[test]
fn auc_ignores_monotone_transforms() {
    let mut r = common::rng(3);
    let scores: Vec<f64> = (0..40).map(|_| (r.random_range(0..8) as f64) / 4.0).collect();
    let labels: Vec<u8> = (0..40).map(|k| u8::from(k % 3 == 0)).collect();
    let base = auc(&scores, &labels).unwrap();
    let exp: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
    let affine: Vec<f64> = scores.iter().map(|s| 3.0 * s - 7.0).collect();
    assert_eq!(auc(&exp, &labels).unwrap(), base);
    assert_eq!(auc(&affine, &labels).unwrap(), base);
    let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
    assert!((auc(&flipped, &labels).unwrap() - (1.0 - base)).abs() < 1e-15);
}

#[test]
fn item_scores_follow_the_chosen_mode() {
    let mut r = common::rng(4);
    let precision: Vec<Vec<f64>> = (0..60).map(|_| (0..3).map(|_| r.random_range(0.5..20.0)).collect()).collect();
    let times: Vec<Vec<f64>> = precision
        .iter()
        .map(|row| row.iter().map(|p| (5.0 - 0.1 * p + common::normal(&mut r)).exp()).collect())
        .collect();
    let fast = median_split(&times);
    let probability = item_aucs(&precision, &times, AucScore::Probability);
    let classified = item_aucs(&precision, &times, AucScore::Classified);
    for j in 0..3 {
        let x: Vec<f64> = precision.iter().map(|row| row[j]).collect();
        let y: Vec<u8> = fast.iter().map(|row| row[j]).collect();
        let fit = logistic_fit(&x, &y).unwrap();
        // fitted probabilities rank persons by precision in the slope's direction
        let signed: Vec<f64> = x.iter().map(|v| v * fit.slope.signum()).collect();
        assert!((probability[j].unwrap() - pairwise_auc(&signed, &y)).abs() < 1e-12);
        let predicted: Vec<f64> = fit.fitted.iter().map(|&p| if p >= 0.5 { 1.0 } else { 0.0 }).collect();
        assert!((classified[j].unwrap() - pairwise_auc(&predicted, &y)).abs() < 1e-12);
    }
}

#[test]
fn single_class_items_are_skipped() {
    let precision = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]];
    let times = vec![vec![5.0, 1.0], vec![5.0, 2.0], vec![5.0, 3.0]];
    let got = item_aucs(&precision, &times, AucScore::Probability);
    assert_eq!(got[0], None);
    assert!(got[1].is_some());
    assert!(matches!(auc(&[], &[]), Err(EvalError::BadInput { .. })));
}

#[test]
fn no_time_effect_gives_chance_auc() {
    let mut s = SimScenario::new(150, 15, 3, -10.5, 20, 11);
    s.null_time_intensity = true;
    let cell = run_cell(&s, &FitOptions::default(), AucScore::Classified);
    assert_eq!(cell.completed, 20);
    assert!((cell.mean - 0.5).abs() <= 0.03, "null AUC {}", cell.mean);
}

#[test]
fn cells_are_reproducible() {
    let s = SimScenario::new(50, 5, 3, -20.5, 3, 8);
    let a = run_cell(&s, &FitOptions::default(), AucScore::Classified);
    let b = run_cell(&s, &FitOptions::default(), AucScore::Classified);
    assert_eq!(a, b);
    assert!(a.mean > 0.5);
}

fn tied_sample() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..40).prop_flat_map(|n| {
        (prop::collection::vec((0..6).prop_map(|k| k as f64 * 0.5), n), prop::collection::vec(0u8..2, n))
    })
}

proptest! {
    #[test]
    fn auc_matches_pairwise_count((scores, labels) in tied_sample()) {
        let positives = labels.iter().filter(|&&l| l == 1).count();
        prop_assume!(positives > 0 && positives < labels.len());
        let got = auc(&scores, &labels).unwrap();
        prop_assert!((got - pairwise_auc(&scores, &labels)).abs() < 1e-12);
    }

    #[test]
    fn median_split_matches_sorted_median(
        cols in prop::collection::vec(prop::collection::vec((0..10).prop_map(f64::from), 1..30), 1..4)
    ) {
        let n = cols.iter().map(Vec::len).min().unwrap();
        let times: Vec<Vec<f64>> = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        let split = median_split(&times);
        for (j, col) in cols.iter().enumerate() {
            let mut sorted = col[..n].to_vec();
            sorted.sort_by(f64::total_cmp);
            let med = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
            for i in 0..n {
                prop_assert_eq!(split[i][j], u8::from(times[i][j] < med));
            }
        }
    }
}
