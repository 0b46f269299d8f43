mod common;

use irtree_fuzzy::sim::{diff, generate, pcm_probabilities, sample_category, SimScenario};
use proptest::prelude::*;

/// Adjacent-category probabilities by direct exponentiation and division.
fn naive_pcm(eta: f64, alpha: f64, m: usize) -> Vec<f64> {
    let w: Vec<f64> = (1..=m).map(|k| (k as f64 * (eta - alpha)).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

#[test]
fn category_frequencies_match_probabilities() {
    let mut r = common::rng(1);
    for (eta, alpha, m) in [(0.4, -0.2, 3), (-1.0, 0.5, 5), (0.0, 0.0, 4)] {
        let p = pcm_probabilities(eta, alpha, m);
        let n = 100_000;
        let mut counts = vec![0usize; m];
        for _ in 0..n {
            counts[sample_category(&p, &mut r) - 1] += 1;
        }
        for (k, &c) in counts.iter().enumerate() {
            let freq = c as f64 / n as f64;
            let se = (p[k] * (1.0 - p[k]) / n as f64).sqrt();
            assert!((freq - p[k]).abs() <= 3.0 * se, "m {m} category {}: {freq} vs {}", k + 1, p[k]);
        }
    }
}

#[test]
fn log_times_follow_the_time_model() {
    let s = SimScenario::new(400, 30, 5, -10.5, 1, 77);
    let d = generate(&s, 0);
    let t = &d.truth;
    let mut residuals = Vec::new();
    let (mut log_sum, mut diff_beta_sum) = (0.0, 0.0);
    for i in 0..s.persons {
        for j in 0..s.items {
            let p = naive_pcm(t.eta[i], t.alpha[j], s.categories);
            assert!((t.diff[i][j] - p.iter().map(|v| v * v).sum::<f64>()).abs() < 1e-12);
            let lt = d.times[i][j].ln();
            residuals.push(lt - t.gamma[j] - t.omega[i] - t.diff[i][j] * t.beta[j]);
            log_sum += lt;
            diff_beta_sum += t.diff[i][j] * t.beta[j];
        }
    }
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let sd = (residuals.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(mean.abs() < 3.0 * 0.5 / n.sqrt(), "residual mean {mean}");
    assert!((sd - 0.5).abs() < 0.02, "residual sd {sd}");
    // the grand mean of log-times decomposes into its parts
    let gamma_bar = t.gamma.iter().sum::<f64>() / s.items as f64;
    let omega_bar = t.omega.iter().sum::<f64>() / s.persons as f64;
    let want = gamma_bar + omega_bar + diff_beta_sum / n;
    assert!((log_sum / n - want).abs() < 3.0 * 0.5 / n.sqrt());
    // item speeds are centred on 9 and the intensities on beta0
    assert!((gamma_bar - 9.0).abs() < 4.0 / (s.items as f64).sqrt());
    let beta_bar = t.beta.iter().sum::<f64>() / s.items as f64;
    assert!((beta_bar + 10.5).abs() < 4.0 / (s.items as f64).sqrt());
}

#[test]
fn outputs_are_in_range() {
    let s = SimScenario::new(60, 12, 5, -20.5, 2, 5);
    for b in 0..2 {
        let d = generate(&s, b);
        assert_eq!((d.ratings.n_persons(), d.ratings.n_items()), (60, 12));
        for i in 0..60 {
            for j in 0..12 {
                let y = d.ratings.get(i, j).expect("simulated ratings are complete");
                assert!((1..=5).contains(&y));
                assert!(d.times[i][j] > 0.0 && d.times[i][j].is_finite());
            }
        }
    }
}

#[test]
fn replications_and_scenarios_are_reproducible_and_distinct() {
    let s = SimScenario::new(30, 5, 3, -10.5, 3, 2024);
    assert_eq!(generate(&s, 1), generate(&s.clone(), 1));
    assert_ne!(generate(&s, 0).times, generate(&s, 1).times);
    let other = SimScenario::new(30, 5, 3, -20.5, 3, 2024);
    assert_ne!(generate(&s, 0).truth.eta, generate(&other, 0).truth.eta);
    // B does not enter the stream: replication k is the same whatever the count
    let more = SimScenario { replications: 50, ..s.clone() };
    assert_eq!(generate(&s, 2), generate(&more, 2));
}

proptest! {
    #[test]
    fn pcm_matches_naive_form(eta in -6.0f64..6.0, alpha in -6.0f64..6.0, m in 2usize..9) {
        let p = pcm_probabilities(eta, alpha, m);
        for (a, b) in p.iter().zip(naive_pcm(eta, alpha, m)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diff_is_between_uniform_and_point_mass(eta in -30.0f64..30.0, alpha in -3.0f64..3.0, m in 2usize..9) {
        let d = diff(&pcm_probabilities(eta, alpha, m));
        prop_assert!(d >= 1.0 / m as f64 - 1e-12 && d <= 1.0 + 1e-12);
    }
}
