//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use irtree_fuzzy::fit::ModelSpec;
use irtree_fuzzy::tree::TreeLabels;
use irtree_fuzzy::{BinaryExpansion, TreeSpec};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random complete binary tree with `m` leaves, categories and nodes
/// shuffled. Built by repeatedly splitting a random leaf with a fresh node.
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

pub fn shuffle<T, R: Rng>(rng: &mut R, v: &mut [T]) {
    for i in (1..v.len()).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
}

/// Category probabilities by enumerating all `2^N` node outcomes, each
/// weighted by the product over every node, and crediting the category
/// whose visited nodes agree.
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

/// Ratings drawn from a common-trait tree model; codes use the tree's base.
pub fn simulate_tree_ratings<R: Rng>(
    rng: &mut R,
    tree: &TreeSpec,
    persons: usize,
    items: usize,
    sigma: f64,
    alpha: &[f64],
) -> (irtree_fuzzy::Ratings, Vec<f64>) {
    let eta: Vec<f64> = (0..persons).map(|_| sigma * normal(rng)).collect();
    let mut rows = Vec::with_capacity(persons);
    for e in &eta {
        let row: Vec<i64> = (0..items)
            .map(|j| {
                let logits = vec![e + alpha[j]; tree.n_nodes()];
                let p = tree.probabilities_from_logits(&logits);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut k = p.len() - 1;
                for (c, q) in p.iter().enumerate() {
                    acc += q;
                    if u < acc {
                        k = c;
                        break;
                    }
                }
                tree.category_code(k)
            })
            .collect();
        rows.push(row);
    }
    (irtree_fuzzy::Ratings::from_rows(&rows), eta)
}

/// Box–Muller standard normal.
pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
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

/// Per-person log marginal likelihood of a common-trait model by the
/// trapezoid rule over `eta ∈ [-8σ, 8σ]`, summed over persons.
pub fn dense_grid_loglik(expansion: &BinaryExpansion, alpha: &[f64], sigma: f64, points: usize) -> f64 {
    let spec = ModelSpec::common();
    let mut per_person: Vec<Vec<(usize, bool)>> = vec![Vec::new(); expansion.n_persons];
    for r in &expansion.rows {
        per_person[r.person].push((spec.alpha_index(r.item, r.node, expansion.n_nodes), r.z));
    }
    let lo = -8.0 * sigma;
    let h = 16.0 * sigma / (points - 1) as f64;
    let mut total = 0.0;
    for obs in &per_person {
        // log integrand on the grid, then a stabilized trapezoid sum
        let logf: Vec<f64> = (0..points)
            .map(|k| {
                let eta = lo + h * k as f64;
                let prior = -0.5 * (eta / sigma).powi(2) - (sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
                let lik: f64 = obs
                    .iter()
                    .map(|&(a, z)| {
                        let x = eta + alpha[a];
                        let s = if z { x } else { -x };
                        -(1.0 + (-s).exp()).ln()
                    })
                    .sum();
                prior + lik
            })
            .collect();
        let top = logf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logf
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let w = if k == 0 || k == points - 1 { 0.5 } else { 1.0 };
                w * (v - top).exp()
            })
            .sum();
        total += top + (sum * h).ln();
    }
    total
}
