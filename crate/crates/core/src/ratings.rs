//! Person × item rating matrices.

use serde::{Deserialize, Serialize};

/// Dense person × item matrix of observed category codes; `None` is missing.
///
/// Codes are stored exactly as observed; the tree decides how they map to
/// categories (see [`crate::tree::TreeLabels::category_base`]).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratings {
    persons: Vec<String>,
    items: Vec<String>,
    values: Vec<Option<i64>>,
}

impl Ratings {
    /// Build from row-major values. Panics if the length does not match.
    pub fn new(persons: Vec<String>, items: Vec<String>, values: Vec<Option<i64>>) -> Self {
        assert_eq!(values.len(), persons.len() * items.len(), "rating matrix length must equal persons × items");
        Self { persons, items, values }
    }

    /// Complete matrix with generated ids `p1..`, `i1..`.
    pub fn from_rows(rows: &[Vec<i64>]) -> Self {
        let n_items = rows.first().map_or(0, Vec::len);
        let values = rows
            .iter()
            .flat_map(|r| {
                assert_eq!(r.len(), n_items, "ragged rating rows");
                r.iter().map(|&v| Some(v))
            })
            .collect();
        Self::new(default_ids("p", rows.len()), default_ids("i", n_items), values)
    }

    pub fn n_persons(&self) -> usize {
        self.persons.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn persons(&self) -> &[String] {
        &self.persons
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn get(&self, person: usize, item: usize) -> Option<i64> {
        self.values[person * self.items.len() + item]
    }

    pub fn values(&self) -> &[Option<i64>] {
        &self.values
    }

    /// Number of non-missing cells.
    pub fn observed(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// Reorder persons; `order[k]` is the old index of the new k-th person.
    pub fn permute_persons(&self, order: &[usize]) -> Self {
        let j = self.items.len();
        let persons = order.iter().map(|&o| self.persons[o].clone()).collect();
        let values = order.iter().flat_map(|&o| self.values[o * j..(o + 1) * j].iter().copied()).collect();
        Self { persons, items: self.items.clone(), values }
    }
}

pub(crate) fn default_ids(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("{prefix}{k}")).collect()
}
