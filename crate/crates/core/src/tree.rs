//! IRTree decision structures.
//!
//! A tree over `M` categories and `N` binary nodes is described by an `M × N`
//! mapping matrix: entry `(m, n)` is the outcome node `n` must take on the path
//! to category `m`, or `None` when the path never visits that node. Category
//! probabilities follow from a product of node-level Bernoulli terms, and a
//! rating decomposes into one binary pseudo-response per visited node.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::numeric::sigmoid;
use crate::ratings::Ratings;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("categories {first} and {second} share a decision path")]
    DuplicatePath { first: usize, second: usize },
    #[error("category {category} maps to no node")]
    EmptyRow { category: usize },
    #[error("map entry ({row}, {col}) is {value}; expected 0, 1 or null")]
    BadEntry { row: usize, col: usize, value: String },
    #[error("map row {row} has {found} entries; expected {expected}")]
    RaggedRow { row: usize, found: usize, expected: usize },
    #[error("declared {what} = {declared} but the map implies {actual}")]
    DimensionMismatch { what: &'static str, declared: usize, actual: usize },
    #[error("tree needs at least two categories and one node (got M={categories}, N={nodes})")]
    TooSmall { categories: usize, nodes: usize },
    #[error("paths cover only {coverage} of the outcome space; some node outcome leads nowhere")]
    IncompleteTree { coverage: f64 },
    #[error("rating {value} for person {person}, item {item} is outside {lo}..={hi}")]
    OutOfRangeCategory { person: usize, item: usize, value: i64, lo: i64, hi: i64 },
    #[error("label list `{what}` has {found} names; expected {expected}")]
    BadLabels { what: &'static str, found: usize, expected: usize },
    #[error("invalid tree file: {0}")]
    Parse(String),
}

/// Optional display names and the category coding used by data files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeLabels {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<String>>,
    /// Code that the first category carries in rating files (0 or 1).
    #[serde(default = "default_base")]
    pub category_base: i64,
}

fn default_base() -> i64 {
    1
}

impl Default for TreeLabels {
    fn default() -> Self {
        Self { categories: None, nodes: None, category_base: 1 }
    }
}

/// Validated mapping matrix of an IRTree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSpec {
    categories: usize,
    nodes: usize,
    map: Vec<Vec<Option<bool>>>,
    labels: TreeLabels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinTree {
    /// Three categories, two nodes: an uncertainty node followed by a direction node.
    Linear3,
    /// Five categories with a separate midpoint branch.
    Nested5,
    /// Six categories, middle categories split off at the root.
    SixSchema1,
    /// Six categories, middle categories nested with the extremes.
    SixSchema2,
}

impl std::str::FromStr for BuiltinTree {
    type Err = TreeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear3" => Ok(Self::Linear3),
            "nested5" => Ok(Self::Nested5),
            "six_schema1" => Ok(Self::SixSchema1),
            "six_schema2" => Ok(Self::SixSchema2),
            other => Err(TreeError::Parse(format!("unknown builtin tree `{other}`"))),
        }
    }
}

const O: Option<bool> = Some(false);
const I: Option<bool> = Some(true);
const NA: Option<bool> = None;

pub fn builtin_tree(kind: BuiltinTree) -> TreeSpec {
    let (map, labels) = match kind {
        BuiltinTree::Linear3 => (
            vec![vec![O, NA], vec![I, O], vec![I, I]],
            TreeLabels {
                categories: Some(vec!["perhaps".into(), "no".into(), "yes".into()]),
                nodes: None,
                category_base: 0,
            },
        ),
        BuiltinTree::Nested5 => (
            vec![vec![I, O, O, NA], vec![I, O, I, NA], vec![O, NA, NA, NA], vec![I, I, NA, O], vec![I, I, NA, I]],
            TreeLabels::default(),
        ),
        BuiltinTree::SixSchema1 => (
            vec![
                vec![I, NA, O, O, NA],
                vec![I, NA, O, I, NA],
                vec![O, O, NA, NA, NA],
                vec![O, I, NA, NA, NA],
                vec![I, NA, I, NA, O],
                vec![I, NA, I, NA, I],
            ],
            TreeLabels::default(),
        ),
        BuiltinTree::SixSchema2 => (
            vec![
                vec![O, O, NA, O, NA],
                vec![O, O, NA, I, NA],
                vec![O, I, NA, NA, NA],
                vec![I, NA, O, NA, NA],
                vec![I, NA, I, NA, O],
                vec![I, NA, I, NA, I],
            ],
            TreeLabels::default(),
        ),
    };
    TreeSpec::with_labels(map, labels).expect("builtin trees are valid")
}

impl TreeSpec {
    pub fn new(map: Vec<Vec<Option<bool>>>) -> Result<Self, TreeError> {
        Self::with_labels(map, TreeLabels::default())
    }

    pub fn with_labels(map: Vec<Vec<Option<bool>>>, labels: TreeLabels) -> Result<Self, TreeError> {
        let nodes = map.first().map_or(0, Vec::len);
        for (row, r) in map.iter().enumerate() {
            if r.len() != nodes {
                return Err(TreeError::RaggedRow { row, found: r.len(), expected: nodes });
            }
        }
        let spec = Self { categories: map.len(), nodes, map, labels };
        validate_tree(&spec)?;
        Ok(spec)
    }

    /// Sequential chain for `m` categories: category `k` passes nodes `1..k`
    /// with outcome 1 and stops with outcome 0 at node `k`; the last category
    /// takes outcome 1 everywhere. `linear(3)` has the same map as
    /// [`BuiltinTree::Linear3`] with categories coded 1..3.
    pub fn linear(m: usize) -> Result<Self, TreeError> {
        if m < 2 {
            return Err(TreeError::TooSmall { categories: m, nodes: m.saturating_sub(1) });
        }
        let n = m - 1;
        let map = (0..m)
            .map(|k| {
                (0..n)
                    .map(|node| match node.cmp(&k) {
                        std::cmp::Ordering::Less => I,
                        std::cmp::Ordering::Equal => O,
                        std::cmp::Ordering::Greater => NA,
                    })
                    .collect()
            })
            .collect();
        Self::new(map)
    }

    /// Build from integer-coded entries, rejecting anything other than 0, 1 or `None`.
    pub fn from_codes(codes: &[Vec<Option<i64>>], labels: TreeLabels) -> Result<Self, TreeError> {
        let mut map = Vec::with_capacity(codes.len());
        for (row, r) in codes.iter().enumerate() {
            let mut out = Vec::with_capacity(r.len());
            for (col, v) in r.iter().enumerate() {
                out.push(match v {
                    None => None,
                    Some(0) => Some(false),
                    Some(1) => Some(true),
                    Some(other) => return Err(TreeError::BadEntry { row, col, value: other.to_string() }),
                });
            }
            map.push(out);
        }
        Self::with_labels(map, labels)
    }

    pub fn n_categories(&self) -> usize {
        self.categories
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes
    }

    pub fn map(&self) -> &[Vec<Option<bool>>] {
        &self.map
    }

    pub fn labels(&self) -> &TreeLabels {
        &self.labels
    }

    /// Entry for category `m` (0-based) and node `n`.
    pub fn entry(&self, m: usize, n: usize) -> Option<bool> {
        self.map[m][n]
    }

    /// Nodes visited on the path to category `m` (0-based), with their outcomes.
    pub fn path(&self, m: usize) -> impl Iterator<Item = (usize, bool)> + '_ {
        self.map[m].iter().enumerate().filter_map(|(n, e)| e.map(|z| (n, z)))
    }

    /// Category probabilities for node-level traits `eta` and easiness `alpha`
    /// (one value per node).
    pub fn category_probabilities(&self, eta: &[f64], alpha: &[f64]) -> Vec<f64> {
        assert_eq!(eta.len(), self.nodes, "eta must have one entry per node");
        assert_eq!(alpha.len(), self.nodes, "alpha must have one entry per node");
        let logits: Vec<f64> = eta.iter().zip(alpha).map(|(e, a)| e + a).collect();
        self.probabilities_from_logits(&logits)
    }

    /// Category probabilities given the node logits `eta_n + alpha_n`.
    pub fn probabilities_from_logits(&self, logits: &[f64]) -> Vec<f64> {
        let p_one: Vec<f64> = logits.iter().map(|&x| sigmoid(x)).collect();
        let p_zero: Vec<f64> = logits.iter().map(|&x| sigmoid(-x)).collect();
        (0..self.categories)
            .map(|m| self.path(m).map(|(n, z)| if z { p_one[n] } else { p_zero[n] }).product())
            .collect()
    }

    /// Category (0-based) whose path agrees with the given node outcomes, if any.
    pub fn category_for_path(&self, outcomes: &[Option<bool>]) -> Option<usize> {
        (0..self.categories).find(|&m| self.map[m].as_slice() == outcomes)
    }

    /// Map an observed code to a 0-based category index.
    pub fn category_index(&self, code: i64) -> Option<usize> {
        let k = code - self.labels.category_base;
        (0..self.categories as i64).contains(&k).then_some(k as usize)
    }

    pub fn category_code(&self, index: usize) -> i64 {
        index as i64 + self.labels.category_base
    }
}

/// Check every structural invariant of a tree.
///
/// Besides the per-entry checks, paths must be pairwise incompatible (they
/// disagree on some node both visit) and jointly exhaustive. Exhaustiveness
/// is tested exactly: with incompatible paths, `Σ 2^{-|path|} = 1` holds iff
/// every assignment of node outcomes reaches some category.
pub fn validate_tree(spec: &TreeSpec) -> Result<(), TreeError> {
    if spec.categories < 2 || spec.nodes < 1 {
        return Err(TreeError::TooSmall { categories: spec.categories, nodes: spec.nodes });
    }
    for (m, row) in spec.map.iter().enumerate() {
        if row.iter().all(Option::is_none) {
            return Err(TreeError::EmptyRow { category: m + 1 });
        }
    }
    for a in 0..spec.categories {
        for b in (a + 1)..spec.categories {
            let conflict =
                spec.map[a].iter().zip(&spec.map[b]).any(|(x, y)| matches!((x, y), (Some(p), Some(q)) if p != q));
            if !conflict {
                return Err(TreeError::DuplicatePath { first: a + 1, second: b + 1 });
            }
        }
    }
    let coverage: f64 = spec.map.iter().map(|r| 0.5f64.powi(r.iter().filter(|e| e.is_some()).count() as i32)).sum();
    if coverage != 1.0 {
        return Err(TreeError::IncompleteTree { coverage });
    }
    if let Some(c) = &spec.labels.categories {
        if c.len() != spec.categories {
            return Err(TreeError::BadLabels { what: "categories", found: c.len(), expected: spec.categories });
        }
    }
    if let Some(n) = &spec.labels.nodes {
        if n.len() != spec.nodes {
            return Err(TreeError::BadLabels { what: "nodes", found: n.len(), expected: spec.nodes });
        }
    }
    Ok(())
}

/// One binary pseudo-response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinaryRow {
    pub person: usize,
    pub item: usize,
    pub node: usize,
    pub z: bool,
}

/// Node-level binary decomposition of a rating matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryExpansion {
    pub n_persons: usize,
    pub n_items: usize,
    pub n_nodes: usize,
    pub rows: Vec<BinaryRow>,
}

/// Expand ratings into node-level pseudo-responses. Missing cells are skipped.
pub fn expand(ratings: &Ratings, spec: &TreeSpec) -> Result<BinaryExpansion, TreeError> {
    let mut rows = Vec::new();
    let lo = spec.labels.category_base;
    let hi = lo + spec.categories as i64 - 1;
    for person in 0..ratings.n_persons() {
        for item in 0..ratings.n_items() {
            let Some(code) = ratings.get(person, item) else { continue };
            let m =
                spec.category_index(code).ok_or(TreeError::OutOfRangeCategory { person, item, value: code, lo, hi })?;
            rows.extend(spec.path(m).map(|(node, z)| BinaryRow { person, item, node, z }));
        }
    }
    Ok(BinaryExpansion { n_persons: ratings.n_persons(), n_items: ratings.n_items(), n_nodes: spec.n_nodes(), rows })
}

/// Recover the category codes from an expansion by path matching.
pub fn reconstruct(expansion: &BinaryExpansion, spec: &TreeSpec) -> Vec<Vec<Option<i64>>> {
    let mut paths: BTreeMap<(usize, usize), Vec<Option<bool>>> = BTreeMap::new();
    for r in &expansion.rows {
        paths.entry((r.person, r.item)).or_insert_with(|| vec![None; spec.n_nodes()])[r.node] = Some(r.z);
    }
    let mut out = vec![vec![None; expansion.n_items]; expansion.n_persons];
    for ((person, item), path) in paths {
        out[person][item] = spec.category_for_path(&path).map(|m| spec.category_code(m));
    }
    out
}

#[derive(Deserialize)]
struct TreeFileIn {
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "N")]
    n: usize,
    map: Vec<Vec<Value>>,
    #[serde(default)]
    labels: Option<TreeLabels>,
}

#[derive(Serialize)]
struct TreeFileOut<'a> {
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "N")]
    n: usize,
    map: Vec<Vec<Option<u8>>>,
    labels: &'a TreeLabels,
}

impl TreeSpec {
    /// Parse the JSON tree format: `{"M": .., "N": .., "map": [[0|1|null, ..], ..], "labels": {..}}`.
    pub fn from_json(text: &str) -> Result<Self, TreeError> {
        let raw: TreeFileIn = serde_json::from_str(text).map_err(|e| TreeError::Parse(e.to_string()))?;
        let mut codes = Vec::with_capacity(raw.map.len());
        for (row, r) in raw.map.iter().enumerate() {
            if r.len() != raw.n {
                return Err(TreeError::RaggedRow { row, found: r.len(), expected: raw.n });
            }
            let mut out = Vec::with_capacity(r.len());
            for (col, v) in r.iter().enumerate() {
                out.push(match v {
                    Value::Null => None,
                    Value::Number(x) if x.as_i64().is_some() => x.as_i64(),
                    other => return Err(TreeError::BadEntry { row, col, value: other.to_string() }),
                });
            }
            codes.push(out);
        }
        if codes.len() != raw.m {
            return Err(TreeError::DimensionMismatch { what: "M", declared: raw.m, actual: codes.len() });
        }
        Self::from_codes(&codes, raw.labels.unwrap_or_default())
    }

    pub fn to_json(&self) -> String {
        let map = self.map.iter().map(|r| r.iter().map(|e| e.map(u8::from)).collect()).collect();
        let out = TreeFileOut { m: self.categories, n: self.nodes, map, labels: &self.labels };
        serde_json::to_string_pretty(&out).expect("tree serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear3_matches_builtin_map() {
        let lin = TreeSpec::linear(3).unwrap();
        let b = builtin_tree(BuiltinTree::Linear3);
        assert_eq!(lin.map(), b.map());
        assert_eq!(b.labels().category_base, 0);
        assert_eq!(b.map(), &[vec![O, NA], vec![I, O], vec![I, I]]);
    }

    #[test]
    fn nested5_paths() {
        let t = builtin_tree(BuiltinTree::Nested5);
        assert_eq!(t.map()[2], vec![O, NA, NA, NA]);
        assert_eq!(t.map()[0], vec![I, O, O, NA]);
        assert_eq!(t.map()[4], vec![I, I, NA, I]);
    }

    #[test]
    fn all_builtins_validate() {
        for k in [BuiltinTree::Linear3, BuiltinTree::Nested5, BuiltinTree::SixSchema1, BuiltinTree::SixSchema2] {
            let t = builtin_tree(k);
            assert!(validate_tree(&t).is_ok());
        }
    }

    #[test]
    fn duplicate_path_rejected() {
        let err = TreeSpec::new(vec![vec![I, NA], vec![I, NA]]).unwrap_err();
        assert_eq!(err, TreeError::DuplicatePath { first: 1, second: 2 });
    }

    #[test]
    fn prefix_path_rejected() {
        // Category 1 would swallow the mass of category 2.
        let err = TreeSpec::new(vec![vec![I, NA], vec![I, O], vec![O, NA]]).unwrap_err();
        assert!(matches!(err, TreeError::DuplicatePath { .. }));
    }

    #[test]
    fn the_printed_all_ones_first_column_is_rejected() {
        let err = TreeSpec::new(vec![vec![I, NA], vec![I, O], vec![I, I]]).unwrap_err();
        assert!(matches!(err, TreeError::DuplicatePath { .. }));
    }

    #[test]
    fn empty_row_and_bad_entry() {
        assert_eq!(TreeSpec::new(vec![vec![NA, NA], vec![I, NA]]).unwrap_err(), TreeError::EmptyRow { category: 1 });
        let err = TreeSpec::from_codes(&[vec![Some(2), None], vec![Some(1), None]], TreeLabels::default()).unwrap_err();
        assert!(matches!(err, TreeError::BadEntry { row: 0, col: 0, .. }));
    }

    #[test]
    fn incomplete_tree_rejected() {
        let err = TreeSpec::new(vec![vec![O, NA], vec![I, O]]).unwrap_err();
        assert!(matches!(err, TreeError::IncompleteTree { .. }));
    }

    #[test]
    fn json_parser_rejects_ragged_and_bad_values() {
        let ragged = r#"{"M":3,"N":2,"map":[[0,null],[1,0],[1]]}"#;
        assert!(matches!(TreeSpec::from_json(ragged), Err(TreeError::RaggedRow { row: 2, .. })));
        let bad = r#"{"M":3,"N":2,"map":[[0,null],[1,0],[1,2]]}"#;
        assert!(matches!(TreeSpec::from_json(bad), Err(TreeError::BadEntry { row: 2, col: 1, .. })));
        let frac = r#"{"M":3,"N":2,"map":[[0,null],[1,0.5],[1,1]]}"#;
        assert!(matches!(TreeSpec::from_json(frac), Err(TreeError::BadEntry { .. })));
        let wrong_m = r#"{"M":4,"N":2,"map":[[0,null],[1,0],[1,1]]}"#;
        assert!(matches!(TreeSpec::from_json(wrong_m), Err(TreeError::DimensionMismatch { .. })));
    }

    #[test]
    fn json_round_trip() {
        let t = builtin_tree(BuiltinTree::SixSchema2);
        assert_eq!(TreeSpec::from_json(&t.to_json()).unwrap(), t);
        let lin = builtin_tree(BuiltinTree::Linear3);
        assert_eq!(TreeSpec::from_json(&lin.to_json()).unwrap(), lin);
    }

    #[test]
    fn zero_logits_give_halving_probabilities() {
        let t = builtin_tree(BuiltinTree::Linear3);
        let p = t.category_probabilities(&[0.0, 0.0], &[0.0, 0.0]);
        assert_eq!(p, vec![0.5, 0.25, 0.25]);
    }

    #[test]
    fn large_first_logit_kills_uncertain_category() {
        let t = builtin_tree(BuiltinTree::Linear3);
        let p = t.category_probabilities(&[40.0, 0.3], &[0.0, -0.1]);
        assert!(p[0] < 1e-17);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn worked_example_no_response() {
        // P(no) = P(Z1 = 1)(1 - P(Z2 = 1))
        let t = builtin_tree(BuiltinTree::Linear3);
        let (x1, x2) = (0.7, -1.2);
        let p = t.probabilities_from_logits(&[x1, x2]);
        assert!((p[1] - sigmoid(x1) * (1.0 - sigmoid(x2))).abs() < 1e-15);
    }

    #[test]
    fn expand_single_cells() {
        let t = builtin_tree(BuiltinTree::Linear3);
        let r = Ratings::from_rows(&[vec![2]]);
        let e = expand(&r, &t).unwrap();
        assert_eq!(
            e.rows,
            vec![
                BinaryRow { person: 0, item: 0, node: 0, z: true },
                BinaryRow { person: 0, item: 0, node: 1, z: true }
            ]
        );
        let e0 = expand(&Ratings::from_rows(&[vec![0]]), &t).unwrap();
        assert_eq!(e0.rows, vec![BinaryRow { person: 0, item: 0, node: 0, z: false }]);
    }

    #[test]
    fn expand_out_of_range() {
        let t = TreeSpec::linear(3).unwrap();
        let err = expand(&Ratings::from_rows(&[vec![1, 4]]), &t).unwrap_err();
        assert!(matches!(err, TreeError::OutOfRangeCategory { item: 1, value: 4, .. }));
    }

    #[test]
    fn missing_cells_are_skipped() {
        let t = TreeSpec::linear(3).unwrap();
        let r = Ratings::new(
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into()],
            vec![Some(1), None, None, Some(3)],
        );
        let e = expand(&r, &t).unwrap();
        assert_eq!(e.rows.len(), 1 + 2);
        let back = reconstruct(&e, &t);
        assert_eq!(back, vec![vec![Some(1), None], vec![None, Some(3)]]);
    }
}
