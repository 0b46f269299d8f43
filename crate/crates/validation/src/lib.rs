//! Reference implementations used to check `irtree-fuzzy` from the outside.
//!
//! Everything here is written for clarity rather than speed: brute-force
//! enumeration, dense grids and exhaustive pair counts.

use irtree_fuzzy::fit::ModelSpec;
use irtree_fuzzy::tree::TreeLabels;
use irtree_fuzzy::{BinaryExpansion, Ratings, TreeSpec};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn shuffle<T, R: Rng>(rng: &mut R, v: &mut [T]) {
    for i in (1..v.len()).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
}

/// Random complete binary tree with `m` leaves: split a random leaf with a
/// fresh node until there are `m`, then shuffle node and category order.
pub fn random_tree<R: Rng>(rng: &mut R, m: usize) -> TreeSpec {
    let n = m - 1;
    let mut leaves: Vec<Vec<(usize, bool)>> = vec![Vec::new()];
    for node in 0..n {
        let k = rng.random_range(0..leaves.len());
        let path = leaves.swap_remove(k);
        let mut left = path.clone();
        left.push((node, false));
        let mut right = path;
        right.push((node, true));
        leaves.push(left);
        leaves.push(right);
    }
    let mut node_order: Vec<usize> = (0..n).collect();
    shuffle(rng, &mut node_order);
    shuffle(rng, &mut leaves);
    let map = leaves
        .iter()
        .map(|path| {
            let mut row = vec![None; n];
            for &(node, z) in path {
                row[node_order[node]] = Some(z);
            }
            row
        })
        .collect();
    TreeSpec::with_labels(map, TreeLabels::default()).expect("construction yields a valid tree")
}

/// Category probabilities by enumerating all `2^N` node outcomes and
/// crediting each to the single category whose visited nodes agree.
pub fn brute_force_probabilities(tree: &TreeSpec, logits: &[f64]) -> Vec<f64> {
    let n = tree.n_nodes();
    let mut p = vec![0.0; tree.n_categories()];
    for mask in 0u32..(1 << n) {
        let z: Vec<bool> = (0..n).map(|k| mask >> k & 1 == 1).collect();
        let w: f64 = (0..n)
            .map(|k| {
                let pi = 1.0 / (1.0 + (-logits[k]).exp());
                if z[k] {
                    pi
                } else {
                    1.0 - pi
                }
            })
            .product();
        let hits: Vec<usize> = (0..tree.n_categories())
            .filter(|&m| tree.map()[m].iter().zip(&z).all(|(e, &zk)| e.is_none_or(|t| t == zk)))
            .collect();
        assert_eq!(hits.len(), 1, "every outcome reaches exactly one category");
        p[hits[0]] += w;
    }
    p
}

/// Box–Muller standard normal.
pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Ratings from a common-trait tree model, `eta ~ N(0, sigma^2)`; codes
/// use the tree's category base. Returns the ratings and the true traits.
pub fn simulate_tree_ratings<R: Rng>(
    rng: &mut R,
    tree: &TreeSpec,
    persons: usize,
    items: usize,
    sigma: f64,
    alpha: &[f64],
) -> (Ratings, Vec<f64>) {
    let eta: Vec<f64> = (0..persons).map(|_| sigma * normal(rng)).collect();
    let rows: Vec<Vec<i64>> = eta
        .iter()
        .map(|e| {
            (0..items)
                .map(|j| {
                    let p = tree.probabilities_from_logits(&vec![e + alpha[j]; tree.n_nodes()]);
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let k = p.iter().position(|q| {
                        acc += q;
                        u < acc
                    });
                    tree.category_code(k.unwrap_or(p.len() - 1))
                })
                .collect()
        })
        .collect();
    (Ratings::from_rows(&rows), eta)
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Log marginal likelihood of a common-trait model by the trapezoid rule
/// over `eta ∈ [-8σ, 8σ]` with `points` nodes, summed over persons.
pub fn dense_grid_loglik(expansion: &BinaryExpansion, alpha: &[f64], sigma: f64, points: usize) -> f64 {
    let spec = ModelSpec::common();
    let mut per_person: Vec<Vec<(usize, bool)>> = vec![Vec::new(); expansion.n_persons];
    for r in &expansion.rows {
        per_person[r.person].push((spec.alpha_index(r.item, r.node, expansion.n_nodes), r.z));
    }
    let lo = -8.0 * sigma;
    let h = 16.0 * sigma / (points - 1) as f64;
    let log_norm = (sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
    let mut total = 0.0;
    for obs in &per_person {
        let logf: Vec<f64> = (0..points)
            .map(|k| {
                let eta = lo + h * k as f64;
                let lik: f64 = obs
                    .iter()
                    .map(|&(a, z)| {
                        let x = eta + alpha[a];
                        -(1.0 + (if z { -x } else { x }).exp()).ln()
                    })
                    .sum();
                lik - 0.5 * (eta / sigma).powi(2) - log_norm
            })
            .collect();
        let top = logf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logf
            .iter()
            .enumerate()
            .map(|(k, v)| if k == 0 || k == points - 1 { 0.5 } else { 1.0 } * (v - top).exp())
            .sum();
        total += top + (sum * h).ln();
    }
    total
}

/// AUC by comparing every positive with every negative; ties count one half.
/// Returns the exact fraction as `(numerator of half-wins, 2 * pairs)`.
pub fn pairwise_auc_counts(scores: &[f64], labels: &[u8]) -> (u64, u64) {
    let (mut half_wins, mut pairs) = (0u64, 0u64);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1;
                half_wins += match si.total_cmp(&sj) {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
    }
    (half_wins, 2 * pairs)
}

pub fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (num, den) = pairwise_auc_counts(scores, labels);
    num as f64 / den as f64
}
