use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::tree::BinaryExpansion;

use super::FitError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraitStructure {
    /// A single latent trait shared by every node.
    Common,
    /// One trait per dimension, uncorrelated.
    PerNodeIndependent,
    /// One trait per dimension with a full covariance matrix.
    PerNodeCorrelated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStructure {
    /// One easiness per item, shared across nodes.
    Common,
    /// One easiness per item and node.
    PerNode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub trait_structure: TraitStructure,
    pub item_structure: ItemStructure,
    /// Trait dimension for each node (per-node structures only). Defaults
    /// to one dimension per node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_to_dimension: Option<Vec<usize>>,
}

impl ModelSpec {
    pub fn common() -> Self {
        Self { trait_structure: TraitStructure::Common, item_structure: ItemStructure::Common, node_to_dimension: None }
    }

    pub fn per_node(correlated: bool) -> Self {
        Self {
            trait_structure: if correlated {
                TraitStructure::PerNodeCorrelated
            } else {
                TraitStructure::PerNodeIndependent
            },
            item_structure: ItemStructure::PerNode,
            node_to_dimension: None,
        }
    }

    /// Node → dimension map and the latent dimension for a tree with `n_nodes` nodes.
    pub fn resolve_dimensions(&self, n_nodes: usize) -> Result<(Vec<usize>, usize), FitError> {
        match self.trait_structure {
            TraitStructure::Common => {
                if let Some(m) = &self.node_to_dimension {
                    if m.iter().any(|&d| d != 0) {
                        return Err(FitError::BadModel("a common trait maps every node to dimension 0".into()));
                    }
                }
                Ok((vec![0; n_nodes], 1))
            }
            _ => {
                let map = self.node_to_dimension.clone().unwrap_or_else(|| (0..n_nodes).collect());
                if map.len() != n_nodes {
                    return Err(FitError::BadModel(format!(
                        "node_to_dimension has {} entries for {} nodes",
                        map.len(),
                        n_nodes
                    )));
                }
                let d = map.iter().max().map_or(0, |m| m + 1);
                for k in 0..d {
                    if !map.contains(&k) {
                        return Err(FitError::BadModel(format!(
                            "trait dimensions must be numbered 0..{d} without gaps; {k} is unused"
                        )));
                    }
                }
                Ok((map, d))
            }
        }
    }

    pub fn n_alpha(&self, n_items: usize, n_nodes: usize) -> usize {
        match self.item_structure {
            ItemStructure::Common => n_items,
            ItemStructure::PerNode => n_items * n_nodes,
        }
    }

    pub fn alpha_index(&self, item: usize, node: usize, n_nodes: usize) -> usize {
        match self.item_structure {
            ItemStructure::Common => item,
            ItemStructure::PerNode => item * n_nodes + node,
        }
    }

    pub fn n_cov_params(&self, d: usize) -> usize {
        match self.trait_structure {
            TraitStructure::Common => 1,
            TraitStructure::PerNodeIndependent => d,
            TraitStructure::PerNodeCorrelated => d * (d + 1) / 2,
        }
    }
}

/// Lower-triangular Cholesky factor from unconstrained parameters.
///
/// Diagonal entries are stored on the log scale; off-diagonals (correlated
/// structure only) are stored row by row, `(a, b)` with `b < a`.
pub fn cholesky_from_params(structure: TraitStructure, d: usize, params: &[f64]) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(d, d);
    match structure {
        TraitStructure::Common | TraitStructure::PerNodeIndependent => {
            for a in 0..d {
                l[(a, a)] = params[a].exp();
            }
        }
        TraitStructure::PerNodeCorrelated => {
            let mut k = 0;
            for a in 0..d {
                for b in 0..=a {
                    l[(a, b)] = if a == b { params[k].exp() } else { params[k] };
                    k += 1;
                }
            }
        }
    }
    l
}

/// Inverse of [`cholesky_from_params`]. Zero diagonal entries map to `-inf`.
pub fn params_from_cholesky(structure: TraitStructure, l: &DMatrix<f64>) -> Vec<f64> {
    let d = l.nrows();
    match structure {
        TraitStructure::Common | TraitStructure::PerNodeIndependent => (0..d).map(|a| l[(a, a)].ln()).collect(),
        TraitStructure::PerNodeCorrelated => {
            let mut out = Vec::with_capacity(d * (d + 1) / 2);
            for a in 0..d {
                for b in 0..=a {
                    out.push(if a == b { l[(a, a)].ln() } else { l[(a, b)] });
                }
            }
            out
        }
    }
}

/// `(row, col)` of the Cholesky entry each covariance parameter controls.
pub fn cholesky_positions(structure: TraitStructure, d: usize) -> Vec<(usize, usize)> {
    match structure {
        TraitStructure::Common | TraitStructure::PerNodeIndependent => (0..d).map(|a| (a, a)).collect(),
        TraitStructure::PerNodeCorrelated => (0..d).flat_map(|a| (0..=a).map(move |b| (a, b))).collect(),
    }
}

/// Cholesky factor of a positive semi-definite matrix; zero pivots give zero columns.
pub fn psd_cholesky(cov: &DMatrix<f64>) -> Result<DMatrix<f64>, FitError> {
    let d = cov.nrows();
    let mut l = DMatrix::<f64>::zeros(d, d);
    let scale = (0..d).map(|a| cov[(a, a)].abs()).fold(0.0, f64::max).max(1.0);
    for j in 0..d {
        let mut diag = cov[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if diag < -1e-10 * scale {
            return Err(FitError::BadModel("trait covariance is not positive semi-definite".into()));
        }
        if diag <= 1e-14 * scale {
            continue;
        }
        let piv = diag.sqrt();
        l[(j, j)] = piv;
        for i in (j + 1)..d {
            let mut v = cov[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / piv;
        }
    }
    Ok(l)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Obs {
    pub param: u32,
    pub dim: u32,
    pub z: bool,
}

/// Binary rows grouped by person, with parameter and dimension indices resolved.
#[derive(Debug, Clone)]
pub(crate) struct Design {
    pub d: usize,
    pub n_alpha: usize,
    pub structure: TraitStructure,
    pub persons: Vec<Vec<Obs>>,
}

impl Design {
    pub fn new(expansion: &BinaryExpansion, spec: &ModelSpec) -> Result<Self, FitError> {
        let (node_dim, d) = spec.resolve_dimensions(expansion.n_nodes)?;
        let n_alpha = spec.n_alpha(expansion.n_items, expansion.n_nodes);
        let mut persons = vec![Vec::new(); expansion.n_persons];
        for r in &expansion.rows {
            if r.person >= expansion.n_persons || r.item >= expansion.n_items || r.node >= expansion.n_nodes {
                return Err(FitError::BadModel(format!(
                    "binary row ({}, {}, {}) outside the expansion bounds",
                    r.person, r.item, r.node
                )));
            }
            persons[r.person].push(Obs {
                param: spec.alpha_index(r.item, r.node, expansion.n_nodes) as u32,
                dim: node_dim[r.node] as u32,
                z: r.z,
            });
        }
        Ok(Self { d, n_alpha, structure: spec.trait_structure, persons })
    }

    pub fn n_cov_params(&self) -> usize {
        match self.structure {
            TraitStructure::Common => 1,
            TraitStructure::PerNodeIndependent => self.d,
            TraitStructure::PerNodeCorrelated => self.d * (self.d + 1) / 2,
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_alpha + self.n_cov_params()
    }

    /// Count of (zeros, ones) feeding each easiness parameter.
    pub fn outcome_counts(&self) -> Vec<(usize, usize)> {
        let mut counts = vec![(0usize, 0usize); self.n_alpha];
        for obs in self.persons.iter().flatten() {
            let c = &mut counts[obs.param as usize];
            if obs.z {
                c.1 += 1;
            } else {
                c.0 += 1;
            }
        }
        counts
    }
}
