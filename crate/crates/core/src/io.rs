//! File formats: ratings and time matrices, tree and fit documents, fuzzy
//! tables, membership curves, summaries and AUC tables.
//!
//! Every CSV has a header row and LF line endings. Floats are written with
//! 12 significant digits so reruns can be compared byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::CellSummary;
use crate::fit::FitResult;
use crate::numeric::quantile_sorted;
use crate::ratings::Ratings;
use crate::tree::TreeSpec;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl IoError {
    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        Self::Format { path: path.to_path_buf(), message: message.into() }
    }
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

/// Write `contents`, creating parent directories as needed.
pub fn write_text(path: &Path, contents: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| IoError::Io { path: dir.to_path_buf(), source })?;
    }
    fs::write(path, contents).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

/// Twelve significant digits, shortest form; `NaN`/`inf` spelled out.
pub fn fmt_f64(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    let s = format!("{rounded}");
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv output is utf-8")
}

fn csv_rows(text: &str, path: &Path) -> Result<(Vec<String>, Vec<csv::StringRecord>), IoError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| IoError::format(path, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for r in rdr.records() {
        rows.push(r.map_err(|e| IoError::format(path, e.to_string()))?);
    }
    Ok((header, rows))
}

/// Person ids, item ids and the values in row-major order.
pub type Labelled<T> = (Vec<String>, Vec<String>, Vec<T>);

/// Person × item matrix with a header row; the first column holds person ids.
fn parse_matrix<T>(
    text: &str,
    path: &Path,
    parse: impl Fn(&str) -> Option<T>,
    what: &str,
) -> Result<Labelled<Option<T>>, IoError> {
    let (header, rows) = csv_rows(text, path)?;
    if header.len() < 2 {
        return Err(IoError::format(path, "header needs a person column and at least one item"));
    }
    let items = header[1..].to_vec();
    let mut persons = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len() * items.len());
    for (k, r) in rows.iter().enumerate() {
        let line = k + 2;
        if r.len() != header.len() {
            return Err(IoError::format(path, format!("line {line}: {} fields, header has {}", r.len(), header.len())));
        }
        persons.push(r[0].trim().to_string());
        for (col, field) in r.iter().enumerate().skip(1) {
            let field = field.trim();
            if field.is_empty() {
                values.push(None);
                continue;
            }
            let v = parse(field).ok_or_else(|| {
                IoError::format(path, format!("line {line}, column `{}`: `{field}` is not {what}", header[col]))
            })?;
            values.push(Some(v));
        }
    }
    if persons.is_empty() {
        return Err(IoError::format(path, "no data rows"));
    }
    Ok((persons, items, values))
}

/// Parse a ratings CSV: header row, person id first, integer categories,
/// empty cell = missing.
pub fn parse_ratings(text: &str, path: &Path) -> Result<Ratings, IoError> {
    let (persons, items, values) = parse_matrix(text, path, |s| s.parse::<i64>().ok(), "an integer")?;
    Ok(Ratings::new(persons, items, values))
}

pub fn read_ratings(path: &Path) -> Result<Ratings, IoError> {
    parse_ratings(&read_text(path)?, path)
}

pub fn ratings_csv(ratings: &Ratings) -> String {
    let mut w = csv_writer();
    let mut header = vec!["person".to_string()];
    header.extend(ratings.items().iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for (i, p) in ratings.persons().iter().enumerate() {
        let mut rec = vec![p.clone()];
        rec.extend((0..ratings.n_items()).map(|j| ratings.get(i, j).map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&rec).expect("in-memory write");
    }
    finish(w)
}

/// Response-time matrix in the same layout as ratings.
pub fn times_csv(persons: &[String], items: &[String], times: &[Vec<f64>]) -> String {
    let mut w = csv_writer();
    let mut header = vec!["person".to_string()];
    header.extend(items.iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for (p, row) in persons.iter().zip(times) {
        let mut rec = vec![p.clone()];
        rec.extend(row.iter().map(|&t| fmt_f64(t)));
        w.write_record(&rec).expect("in-memory write");
    }
    finish(w)
}

/// Parse a complete response-time matrix.
pub fn parse_times(text: &str, path: &Path) -> Result<Labelled<Vec<f64>>, IoError> {
    let (persons, items, values) =
        parse_matrix(text, path, |s| s.parse::<f64>().ok().filter(|t| *t > 0.0 && t.is_finite()), "a positive time")?;
    if values.iter().any(Option::is_none) {
        return Err(IoError::format(path, "response times may not be missing"));
    }
    let n_items = items.len();
    let flat: Vec<f64> = values.into_iter().flatten().collect();
    Ok((persons, items, flat.chunks(n_items).map(<[f64]>::to_vec).collect()))
}

pub fn read_tree(path: &Path) -> Result<TreeSpec, IoError> {
    TreeSpec::from_json(&read_text(path)?).map_err(|e| IoError::format(path, e.to_string()))
}

/// Everything needed to fuzzify a fit without the original inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub persons: Vec<String>,
    pub items: Vec<String>,
    pub tree: serde_json::Value,
    /// Observed codes, persons × items; `null` is missing.
    pub ratings: Vec<Vec<Option<i64>>>,
    pub fit: FitResult,
}

impl FitDocument {
    pub fn new(ratings: &Ratings, tree: &TreeSpec, fit: FitResult) -> Self {
        let rows =
            (0..ratings.n_persons()).map(|i| (0..ratings.n_items()).map(|j| ratings.get(i, j)).collect()).collect();
        Self {
            persons: ratings.persons().to_vec(),
            items: ratings.items().to_vec(),
            tree: serde_json::from_str(&tree.to_json()).expect("tree json is valid"),
            ratings: rows,
            fit,
        }
    }

    pub fn tree(&self) -> Result<TreeSpec, String> {
        TreeSpec::from_json(&self.tree.to_string()).map_err(|e| e.to_string())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("fit document serializes");
        s.push('\n');
        s
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        let doc: Self = serde_json::from_str(&read_text(path)?).map_err(|e| IoError::format(path, e.to_string()))?;
        doc.check().map_err(|m| IoError::format(path, m))?;
        Ok(doc)
    }

    fn check(&self) -> Result<(), String> {
        let f = &self.fit;
        if self.persons.len() != f.n_persons || self.ratings.len() != f.n_persons || f.eta_hat.len() != f.n_persons {
            return Err("person count disagrees between ids, ratings and eta_hat".into());
        }
        if self.items.len() != f.n_items || self.ratings.iter().any(|r| r.len() != f.n_items) {
            return Err("item count disagrees between ids and ratings".into());
        }
        if f.eta_hat.iter().any(|r| r.len() != f.dimension) || f.node_to_dimension.len() != f.n_nodes {
            return Err("eta_hat or node_to_dimension has the wrong shape".into());
        }
        if f.alpha.len() != f.model.n_alpha(f.n_items, f.n_nodes) {
            return Err("alpha has the wrong length for the model".into());
        }
        let tree = self.tree()?;
        if tree.n_nodes() != f.n_nodes {
            return Err(format!("tree has {} nodes, fit has {}", tree.n_nodes(), f.n_nodes));
        }
        Ok(())
    }
}

/// One row of the fuzzy table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyRow {
    pub person: String,
    pub item: String,
    pub y: i64,
    pub c_raw: f64,
    pub v_raw: f64,
    pub s: f64,
    pub a: f64,
    pub b: f64,
    pub cardinality: f64,
    pub centroid: f64,
    pub support_length: f64,
    pub y_l: Option<f64>,
    pub y_u: Option<f64>,
    /// How the triangle was obtained, or why it is missing; empty for beta output.
    pub tri_status: String,
}

pub const FUZZY_HEADER: [&str; 14] = [
    "person",
    "item",
    "y",
    "c_raw",
    "v_raw",
    "s",
    "a",
    "b",
    "cardinality",
    "centroid",
    "support_length",
    "y_l",
    "y_u",
    "tri_status",
];

pub fn fuzzy_csv(rows: &[FuzzyRow]) -> String {
    let mut w = csv_writer();
    w.write_record(FUZZY_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.person.clone(),
            r.item.clone(),
            r.y.to_string(),
            fmt_f64(r.c_raw),
            fmt_f64(r.v_raw),
            fmt_f64(r.s),
            fmt_f64(r.a),
            fmt_f64(r.b),
            fmt_f64(r.cardinality),
            fmt_f64(r.centroid),
            fmt_f64(r.support_length),
            fmt_opt(r.y_l),
            fmt_opt(r.y_u),
            r.tri_status.clone(),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

pub fn parse_fuzzy(text: &str, path: &Path) -> Result<Vec<FuzzyRow>, IoError> {
    let (header, rows) = csv_rows(text, path)?;
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| IoError::format(path, format!("missing column `{name}`")))
    };
    let idx: Vec<usize> = FUZZY_HEADER.iter().map(|h| col(h)).collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(rows.len());
    for (k, r) in rows.iter().enumerate() {
        let line = k + 2;
        let field = |c: usize| r.get(idx[c]).map(str::trim).unwrap_or("");
        let num = |c: usize| -> Result<f64, IoError> {
            field(c).parse::<f64>().map_err(|_| {
                IoError::format(
                    path,
                    format!("line {line}, column `{}`: `{}` is not a number", FUZZY_HEADER[c], field(c)),
                )
            })
        };
        let opt = |c: usize| -> Result<Option<f64>, IoError> {
            if field(c).is_empty() {
                Ok(None)
            } else {
                num(c).map(Some)
            }
        };
        let y = field(2)
            .parse::<i64>()
            .map_err(|_| IoError::format(path, format!("line {line}, column `y`: `{}` is not an integer", field(2))))?;
        out.push(FuzzyRow {
            person: field(0).to_string(),
            item: field(1).to_string(),
            y,
            c_raw: num(3)?,
            v_raw: num(4)?,
            s: num(5)?,
            a: num(6)?,
            b: num(7)?,
            cardinality: num(8)?,
            centroid: num(9)?,
            support_length: num(10)?,
            y_l: opt(11)?,
            y_u: opt(12)?,
            tri_status: field(13).to_string(),
        });
    }
    Ok(out)
}

/// One sampled point of a membership function.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub person: String,
    pub item: String,
    pub y: f64,
    pub membership: f64,
}

pub fn curves_csv(points: &[CurvePoint]) -> String {
    let mut w = csv_writer();
    w.write_record(["person", "item", "y", "membership"]).expect("in-memory write");
    for p in points {
        w.write_record([p.person.clone(), p.item.clone(), fmt_f64(p.y), fmt_f64(p.membership)])
            .expect("in-memory write");
    }
    finish(w)
}

/// Location and spread of one measure.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub sd: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Distribution {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        // a constant sample has exactly its value as mean and no spread
        let constant = v[0] == v[n - 1];
        let mean = if constant { v[0] } else { v.iter().sum::<f64>() / n as f64 };
        let sd = if n > 1 && !constant {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self {
            n,
            mean,
            sd,
            min: v[0],
            q1: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q3: quantile_sorted(&v, 0.75),
            max: v[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    /// `person` for one rater's items, `cells` over every fuzzy number,
    /// `person_means` over the per-person averages.
    pub scope: String,
    pub id: String,
    pub measure: String,
    pub stats: Distribution,
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut w = csv_writer();
    w.write_record(["scope", "id", "measure", "n", "mean", "sd", "min", "q1", "median", "q3", "max"])
        .expect("in-memory write");
    for r in rows {
        let d = &r.stats;
        w.write_record([
            r.scope.clone(),
            r.id.clone(),
            r.measure.clone(),
            d.n.to_string(),
            fmt_f64(d.mean),
            fmt_f64(d.sd),
            fmt_f64(d.min),
            fmt_f64(d.q1),
            fmt_f64(d.median),
            fmt_f64(d.q3),
            fmt_f64(d.max),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

fn first_seen<T: PartialEq + Copy>(values: impl Iterator<Item = T>) -> Vec<T> {
    let mut out = Vec::new();
    for v in values {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

/// Cells laid out as a grid: one row per (M, I), one column
/// per (beta0, J), each cell `mean (sd)` to three decimals. Rows and columns
/// follow the order in which the cells were given.
pub fn auc_table_csv(cells: &[CellSummary]) -> String {
    let rows = first_seen(cells.iter().map(|c| (c.scenario.categories, c.scenario.persons)));
    let cols = first_seen(cells.iter().map(|c| (c.scenario.beta0.to_bits(), c.scenario.items)));
    let mut w = csv_writer();
    let mut header = vec!["M".to_string(), "I".to_string()];
    header.extend(cols.iter().map(|&(b, j)| format!("beta0={} J={j}", fmt_f64(f64::from_bits(b)))));
    w.write_record(&header).expect("in-memory write");
    for &(m, i) in &rows {
        let mut rec = vec![m.to_string(), i.to_string()];
        for &(b, j) in &cols {
            let cell = cells.iter().find(|c| {
                let s = &c.scenario;
                (s.categories, s.persons, s.beta0.to_bits(), s.items) == (m, i, b, j)
            });
            rec.push(match cell {
                Some(c) if c.completed > 0 => format!("{:.3} ({:.3})", c.mean, c.sd),
                Some(_) => "failed".into(),
                None => String::new(),
            });
        }
        w.write_record(&rec).expect("in-memory write");
    }
    finish(w)
}

/// One line per cell with full precision.
pub fn auc_long_csv(cells: &[CellSummary]) -> String {
    let mut w = csv_writer();
    w.write_record(["M", "I", "J", "beta0", "B", "completed", "failed", "mean", "sd"]).expect("in-memory write");
    for c in cells {
        let s = &c.scenario;
        let (mean, sd) = if c.completed > 0 { (fmt_f64(c.mean), fmt_f64(c.sd)) } else { Default::default() };
        w.write_record([
            s.categories.to_string(),
            s.persons.to_string(),
            s.items.to_string(),
            fmt_f64(s.beta0),
            s.replications.to_string(),
            c.completed.to_string(),
            c.failures.len().to_string(),
            mean,
            sd,
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// Per-item mean AUC for every cell.
pub fn auc_items_csv(cells: &[CellSummary]) -> String {
    let mut w = csv_writer();
    w.write_record(["M", "I", "J", "beta0", "item", "mean_auc"]).expect("in-memory write");
    for c in cells {
        let s = &c.scenario;
        for (j, v) in c.item_mean.iter().enumerate() {
            w.write_record([
                s.categories.to_string(),
                s.persons.to_string(),
                s.items.to_string(),
                fmt_f64(s.beta0),
                (j + 1).to_string(),
                fmt_opt(*v),
            ])
            .expect("in-memory write");
        }
    }
    finish(w)
}

/// Failed replications, one line each.
pub fn failure_log(cells: &[CellSummary]) -> String {
    let mut out = String::new();
    for c in cells {
        let s = &c.scenario;
        for (b, msg) in &c.failures {
            out.push_str(&format!(
                "M={} I={} J={} beta0={} replication={b}: {msg}\n",
                s.categories,
                s.persons,
                s.items,
                fmt_f64(s.beta0)
            ));
        }
    }
    out
}
