//! Rating data with response times from an adjacent-category IRT model
//! coupled to a log-normal response-time model.
//!
//! For person `i` and item `j`:
//!
//! ```text
//! P(Y = m) ∝ exp(m (eta_i - alpha_j)),                  m = 1..M
//! ln r = gamma_j + omega_i + DIFF_ij * beta_j + eps_ij,  DIFF_ij = Σ_m P(Y = m)^2
//! ```
//!
//! with `eta, omega, alpha ~ N(0, 1)`, `gamma ~ N(9, 1)`, `beta ~ N(beta0, 1)`
//! and `eps ~ N(0, noise_sd^2)`.

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::numeric::logsumexp;
use crate::ratings::{default_ids, Ratings};

/// One cell of the simulation design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    #[serde(rename = "I")]
    pub persons: usize,
    #[serde(rename = "J")]
    pub items: usize,
    #[serde(rename = "M")]
    pub categories: usize,
    pub beta0: f64,
    #[serde(rename = "B")]
    pub replications: usize,
    pub seed: u64,
    /// Force every time-intensity parameter to zero (no DIFF effect).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub null_time_intensity: bool,
    /// Standard deviation of the log-time residual.
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
}

fn default_noise_sd() -> f64 {
    0.5
}

impl SimScenario {
    pub fn new(persons: usize, items: usize, categories: usize, beta0: f64, replications: usize, seed: u64) -> Self {
        Self {
            persons,
            items,
            categories,
            beta0,
            replications,
            seed,
            null_time_intensity: false,
            noise_sd: default_noise_sd(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.persons == 0 || self.items == 0 {
            return Err("I and J must be positive".into());
        }
        if self.categories < 2 {
            return Err("M must be at least 2".into());
        }
        if self.replications == 0 {
            return Err("B must be at least 1".into());
        }
        if !self.beta0.is_finite() || !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err("beta0 and noise_sd must be finite (noise_sd >= 0)".into());
        }
        Ok(())
    }

    /// Stable 64-bit fingerprint of the design factors (not the seed or B).
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0x243F_6A88_85A3_08D3u64;
        for v in [
            self.persons as u64,
            self.items as u64,
            self.categories as u64,
            self.beta0.to_bits(),
            u64::from(self.null_time_intensity),
            self.noise_sd.to_bits(),
        ] {
            h = splitmix64(h ^ v);
        }
        h
    }

    /// Generator for one replication.
    ///
    /// The ChaCha key is derived from the root seed and the scenario
    /// fingerprint; the replication index selects the ChaCha stream, so
    /// replications draw from disjoint keystreams.
    pub fn rng(&self, replication: usize) -> ChaCha20Rng {
        let mut state = self.seed ^ self.fingerprint();
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(replication as u64);
        rng
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Adjacent-category probabilities `P(Y = m) ∝ exp(m (eta - alpha))`.
pub fn pcm_probabilities(eta: f64, alpha: f64, m: usize) -> Vec<f64> {
    let x = eta - alpha;
    let logits: Vec<f64> = (1..=m).map(|k| k as f64 * x).collect();
    let norm = logsumexp(&logits);
    logits.iter().map(|l| (l - norm).exp()).collect()
}

/// `Σ p_m^2`: 1/M for a uniform distribution, 1 for a point mass.
pub fn diff(p: &[f64]) -> f64 {
    p.iter().map(|v| v * v).sum()
}

/// Draw a category in `1..=p.len()` by inversion.
pub fn sample_category<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, q) in p.iter().enumerate() {
        acc += q;
        if u < acc {
            return k + 1;
        }
    }
    // Rounding left u above the running total; take the last category with mass.
    p.iter().rposition(|&q| q > 0.0).map_or(p.len(), |k| k + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueParameters {
    pub eta: Vec<f64>,
    pub omega: Vec<f64>,
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    /// DIFF per cell, row-major persons × items.
    pub diff: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDataset {
    /// Categories coded 1..=M.
    pub ratings: Ratings,
    /// Response times, row-major persons × items.
    pub times: Vec<Vec<f64>>,
    pub truth: TrueParameters,
}

/// Generate one replication of `scenario`.
///
/// Draw order: person traits, person speeds, item easiness, item times,
/// ratings (row-major), time intensities, log-time residuals (row-major).
pub fn generate(scenario: &SimScenario, replication: usize) -> GeneratedDataset {
    let mut rng = scenario.rng(replication);
    let (n_i, n_j, m) = (scenario.persons, scenario.items, scenario.categories);
    let mut normals = |n: usize, mean: f64| -> Vec<f64> {
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                mean + z
            })
            .collect()
    };
    let eta = normals(n_i, 0.0);
    let omega = normals(n_i, 0.0);
    let alpha = normals(n_j, 0.0);
    let gamma = normals(n_j, 9.0);

    let mut values = Vec::with_capacity(n_i * n_j);
    let mut diffs = vec![vec![0.0; n_j]; n_i];
    for i in 0..n_i {
        for j in 0..n_j {
            let p = pcm_probabilities(eta[i], alpha[j], m);
            diffs[i][j] = diff(&p);
            values.push(Some(sample_category(&p, &mut rng) as i64));
        }
    }
    let beta: Vec<f64> = if scenario.null_time_intensity {
        vec![0.0; n_j]
    } else {
        let d = Normal::new(scenario.beta0, 1.0).expect("unit variance");
        (0..n_j).map(|_| d.sample(&mut rng)).collect()
    };
    let noise = Normal::new(0.0, scenario.noise_sd).expect("validated noise sd");
    let mut times = vec![vec![0.0; n_j]; n_i];
    for i in 0..n_i {
        for j in 0..n_j {
            let log_t = gamma[j] + omega[i] + diffs[i][j] * beta[j] + noise.sample(&mut rng);
            times[i][j] = log_t.exp();
        }
    }
    GeneratedDataset {
        ratings: Ratings::new(default_ids("p", n_i), default_ids("i", n_j), values),
        times,
        truth: TrueParameters { eta, omega, alpha, gamma, beta, diff: diffs },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm_zero_logit_is_uniform() {
        let p = pcm_probabilities(0.3, 0.3, 4);
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn pcm_ln2() {
        let p = pcm_probabilities(2f64.ln(), 0.0, 3);
        let want = [1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0];
        for (a, b) in p.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn pcm_limit_is_point_mass() {
        let p = pcm_probabilities(800.0, 0.0, 5);
        assert_eq!(p[4], 1.0);
        assert!(p[..4].iter().all(|&v| v < 1e-300));
    }

    #[test]
    fn diff_values() {
        assert!((diff(&[1.0 / 3.0; 3]) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(diff(&[0.0, 1.0, 0.0]), 1.0);
        assert!((diff(&[0.1, 0.2, 0.7]) - 0.54).abs() < 1e-15);
    }

    #[test]
    fn generation_is_deterministic() {
        let s = SimScenario::new(20, 5, 3, -10.5, 1, 42);
        let a = generate(&s, 3);
        let b = generate(&s, 3);
        assert_eq!(a, b);
        let c = generate(&s, 4);
        assert_ne!(a.ratings, c.ratings);
        assert_ne!(a.truth.eta, c.truth.eta);
    }

    #[test]
    fn degenerate_time_model() {
        let mut s = SimScenario::new(10, 4, 5, -20.5, 1, 7);
        s.null_time_intensity = true;
        s.noise_sd = 0.0;
        let d = generate(&s, 0);
        for i in 0..10 {
            for j in 0..4 {
                let want = d.truth.gamma[j] + d.truth.omega[i];
                assert!((d.times[i][j].ln() - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scenario_json_shape() {
        let s: SimScenario = serde_json::from_str(r#"{"I":50,"J":15,"M":5,"beta0":-20.5,"B":3,"seed":9}"#).unwrap();
        assert_eq!(s, SimScenario::new(50, 15, 5, -20.5, 3, 9));
        assert!(s.validate().is_ok());
        let bad = SimScenario { replications: 0, ..s };
        assert!(bad.validate().is_err());
    }
}
