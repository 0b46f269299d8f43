//! The simulate / fit / fuzzify / summarize / evaluate workflows.
//!
//! Each command reads a [`PipelineConfig`], writes its outputs under the
//! configured output directory and returns the paths it wrote.

use std::path::{Path, PathBuf};

use rand::RngExt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{run_cell, AucScore, CellSummary};
use crate::fit::{fit, FitError, FitOptions, ModelSpec};
use crate::fuzzy::{fuzzify, to_triangular_quantile, CategoryDistribution, Domain, DEFAULT_TAU};
use crate::io::{self, CurvePoint, Distribution, FitDocument, FuzzyRow, IoError, SummaryRow};
use crate::sim::{generate, SimScenario};
use crate::tree::{builtin_tree, expand, BuiltinTree, TreeError, TreeSpec};

/// Points on each membership curve.
pub const CURVE_POINTS: usize = 201;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{0}")]
    Input(String),
    #[error("optimizer did not converge; partial estimates written to {}", .0.display())]
    NoConvergence(PathBuf),
    #[error(transparent)]
    Fit(FitError),
    #[error("{0}")]
    Evaluate(String),
}

impl PipelineError {
    /// Short machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Io(IoError::Io { .. }) => "io",
            Self::Io(IoError::Format { .. }) | Self::Input(_) => "input",
            Self::NoConvergence(_) => "no-convergence",
            Self::Fit(_) => "fit",
            Self::Evaluate(_) => "evaluate",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.code() {
            "config" => 2,
            "io" => 3,
            "input" => 4,
            "no-convergence" => 5,
            "fit" => 6,
            _ => 7,
        }
    }
}

/// Shape of the emitted fuzzy numbers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    #[default]
    Beta,
    TriMoment,
    TriQuantile,
}

impl std::str::FromStr for Shape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "beta" => Ok(Self::Beta),
            "tri-moment" => Ok(Self::TriMoment),
            "tri-quantile" => Ok(Self::TriQuantile),
            other => Err(format!("unknown shape `{other}` (expected beta, tri-moment or tri-quantile)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FuzzifyOptions {
    pub shape: Shape,
    pub tau: f64,
    pub domain: Domain,
    /// Also write membership curves.
    pub curves: bool,
}

impl Default for FuzzifyOptions {
    fn default() -> Self {
        Self { shape: Shape::Beta, tau: DEFAULT_TAU, domain: Domain::Normalized, curves: false }
    }
}

/// One design cell in a config file; `B` and `seed` come from elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    #[serde(rename = "I")]
    pub persons: usize,
    #[serde(rename = "J")]
    pub items: usize,
    #[serde(rename = "M")]
    pub categories: usize,
    pub beta0: f64,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub null_time_intensity: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sd: Option<f64>,
}

impl CellSpec {
    fn scenario(&self, replications: usize, seed: u64) -> SimScenario {
        let mut s = SimScenario::new(self.persons, self.items, self.categories, self.beta0, replications, seed);
        s.null_time_intensity = self.null_time_intensity;
        if let Some(sd) = self.noise_sd {
            s.noise_sd = sd;
        }
        s
    }
}

/// The full factorial simulation design.
pub fn default_grid() -> Vec<CellSpec> {
    let mut cells = Vec::new();
    for m in [3, 5] {
        for i in [50, 150, 500] {
            for beta0 in [-10.5, -20.5] {
                for j in [5, 15] {
                    cells.push(CellSpec {
                        persons: i,
                        items: j,
                        categories: m,
                        beta0,
                        replications: None,
                        seed: None,
                        null_time_intensity: false,
                        noise_sd: None,
                    });
                }
            }
        }
    }
    cells
}

pub const DEFAULT_REPLICATIONS: usize = 100;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateOptions {
    pub reps: Option<usize>,
    pub scenarios: Vec<CellSpec>,
    pub score: AucScore,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Ratings CSV for `fit`.
    pub data: Option<PathBuf>,
    /// Tree JSON path, `builtin:<name>`, or `linear:<M>` for the sequential
    /// chain over categories `1..=M`.
    pub tree: Option<String>,
    /// `common`, `per_node_independent`, `per_node_correlated`, or a model JSON path.
    pub model: Option<String>,
    pub out: Option<PathBuf>,
    /// Scenario JSON: one cell for `simulate`, one cell or a list for `evaluate`.
    pub scenario: Option<PathBuf>,
    /// Fit document read by `fuzzify` (default `<out>/fit.json`).
    pub fit_result: Option<PathBuf>,
    /// Fuzzy table read by `summarize` (default `<out>/fuzzy.csv`).
    pub fuzzy: Option<PathBuf>,
    pub seed: Option<u64>,
    pub fit: FitOptions,
    pub fuzzify: FuzzifyOptions,
    pub evaluate: EvaluateOptions,
    /// 0 is silent; higher values report progress on stderr.
    pub verbosity: u8,
}

impl PipelineConfig {
    /// Load a JSON config; relative paths are taken from the config's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = io::read_text(path)?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in
            [&mut cfg.data, &mut cfg.out, &mut cfg.scenario, &mut cfg.fit_result, &mut cfg.fuzzy].into_iter().flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        for s in [&mut cfg.tree, &mut cfg.model].into_iter().flatten() {
            let keyword = s.starts_with("builtin:") || s.starts_with("linear:") || model_keyword(s).is_some();
            if !keyword && Path::new(s.as_str()).is_relative() {
                *s = base.join(s.as_str()).to_string_lossy().into_owned();
            }
        }
        Ok(cfg)
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    fn check_fit_options(&self) -> Result<(), PipelineError> {
        let f = &self.fit;
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if !(1..=200).contains(&f.quad_nodes) {
            return bad("quad_nodes must be between 1 and 200");
        }
        if !(f.rel_tol > 0.0 && f.rel_tol < 1.0) || !(f.grad_tol > 0.0 && f.grad_tol.is_finite()) {
            return bad("rel_tol must lie in (0, 1) and grad_tol must be positive");
        }
        if f.max_iter == 0 {
            return bad("max_iter must be positive");
        }
        if !(f.separation_bound > 0.0 && f.separation_bound.is_finite()) {
            return bad("separation_bound must be positive");
        }
        Ok(())
    }
}

fn model_keyword(s: &str) -> Option<ModelSpec> {
    match s {
        "common" => Some(ModelSpec::common()),
        "per_node_independent" => Some(ModelSpec::per_node(false)),
        "per_node_correlated" => Some(ModelSpec::per_node(true)),
        _ => None,
    }
}

fn resolve_tree(value: &str) -> Result<TreeSpec, PipelineError> {
    if let Some(m) = value.strip_prefix("linear:") {
        let m: usize = m.parse().map_err(|_| PipelineError::Config(format!("bad category count in `{value}`")))?;
        return TreeSpec::linear(m).map_err(|e| PipelineError::Config(e.to_string()));
    }
    if let Some(name) = value.strip_prefix("builtin:") {
        let kind: BuiltinTree = name.parse().map_err(|e: TreeError| PipelineError::Config(e.to_string()))?;
        return Ok(builtin_tree(kind));
    }
    Ok(io::read_tree(Path::new(value))?)
}

fn resolve_model(value: Option<&str>) -> Result<ModelSpec, PipelineError> {
    let Some(value) = value else { return Ok(ModelSpec::common()) };
    if let Some(m) = model_keyword(value) {
        return Ok(m);
    }
    let path = Path::new(value);
    serde_json::from_str(&io::read_text(path)?).map_err(|e| IoError::format(path, e.to_string()).into())
}

fn required<'a, T>(value: &'a Option<T>, what: &str) -> Result<&'a T, PipelineError> {
    value.as_ref().ok_or_else(|| PipelineError::Config(format!("missing {what}")))
}

fn note(cfg: &PipelineConfig, msg: impl FnOnce() -> String) {
    if cfg.verbosity > 0 {
        eprintln!("{}", msg());
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScenarioFile {
    One(CellSpec),
    Many(Vec<CellSpec>),
}

fn read_cells(path: &Path) -> Result<Vec<CellSpec>, PipelineError> {
    let parsed: ScenarioFile =
        serde_json::from_str(&io::read_text(path)?).map_err(|e| IoError::format(path, e.to_string()))?;
    Ok(match parsed {
        ScenarioFile::One(c) => vec![c],
        ScenarioFile::Many(v) => v,
    })
}

fn validated(s: SimScenario) -> Result<SimScenario, PipelineError> {
    s.validate().map_err(PipelineError::Input)?;
    Ok(s)
}

/// Generate `B` replications: `rep_<k>/{Y.csv,R.csv,truth.json}` plus the
/// resolved `scenario.json` (including the seed actually used).
pub fn cmd_simulate(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let path = required(&cfg.scenario, "scenario file (--scenario)")?;
    let cells = read_cells(path)?;
    let [cell] = cells.as_slice() else {
        return Err(PipelineError::Input(format!("{}: simulate expects a single scenario", path.display())));
    };
    let seed = cfg.seed.or(cell.seed).unwrap_or_else(|| rand::rng().random());
    let reps =
        cfg.evaluate.reps.or(cell.replications).ok_or_else(|| {
            PipelineError::Config("number of replications missing (B in the scenario or --reps)".into())
        })?;
    let scenario = validated(cell.scenario(reps, seed))?;
    let out = cfg.out_dir();

    let files: Vec<(usize, String, String, String)> = (0..scenario.replications)
        .into_par_iter()
        .map(|k| {
            let d = generate(&scenario, k);
            let y = io::ratings_csv(&d.ratings);
            let r = io::times_csv(d.ratings.persons(), d.ratings.items(), &d.times);
            let mut truth = serde_json::to_string_pretty(&d.truth).expect("truth serializes");
            truth.push('\n');
            (k, y, r, truth)
        })
        .collect();

    let mut written = Vec::new();
    let scenario_path = out.join("scenario.json");
    let mut text = serde_json::to_string_pretty(&scenario).expect("scenario serializes");
    text.push('\n');
    io::write_text(&scenario_path, &text)?;
    written.push(scenario_path);
    for (k, y, r, truth) in files {
        let dir = out.join(format!("rep_{k}"));
        for (name, body) in [("Y.csv", y), ("R.csv", r), ("truth.json", truth)] {
            let p = dir.join(name);
            io::write_text(&p, &body)?;
            written.push(p);
        }
    }
    note(cfg, || format!("simulated {} replications into {}", scenario.replications, out.display()));
    Ok(written)
}

/// Fit the tree model and write `<out>/fit.json`.
///
/// When the optimizer stops early the partial fit is still written and
/// [`PipelineError::NoConvergence`] is returned.
pub fn cmd_fit(cfg: &PipelineConfig) -> Result<PathBuf, PipelineError> {
    cfg.check_fit_options()?;
    let data = required(&cfg.data, "ratings file (--data)")?;
    let tree = resolve_tree(required(&cfg.tree, "tree (--tree)")?)?;
    let model = resolve_model(cfg.model.as_deref())?;
    let ratings = io::read_ratings(data)?;
    let expansion = expand(&ratings, &tree).map_err(|e| match e {
        TreeError::OutOfRangeCategory { person, item, value, lo, hi } => PipelineError::Input(format!(
            "{}: person `{}`, item `{}`: rating {value} is outside {lo}..={hi} for this tree",
            data.display(),
            ratings.persons()[person],
            ratings.items()[item]
        )),
        other => PipelineError::Input(format!("{}: {other}", data.display())),
    })?;
    let out = cfg.out_dir().join("fit.json");
    match fit(&expansion, &model, &cfg.fit) {
        Ok(result) => {
            note(cfg, || format!("loglik {:.6}, aic {:.6}", result.loglik, result.aic));
            io::write_text(&out, &FitDocument::new(&ratings, &tree, result).to_json())?;
            Ok(out)
        }
        Err(FitError::NoConvergence(result)) => {
            io::write_text(&out, &FitDocument::new(&ratings, &tree, *result).to_json())?;
            Err(PipelineError::NoConvergence(out))
        }
        Err(FitError::BadModel(m)) => Err(PipelineError::Input(format!("model: {m}"))),
        Err(e) => Err(PipelineError::Fit(e)),
    }
}

/// Fuzzy numbers for every observed cell of a fit document.
pub fn fuzzy_rows(doc: &FitDocument, opts: &FuzzifyOptions) -> Result<Vec<FuzzyRow>, PipelineError> {
    if !(0.0..1.0).contains(&opts.tau) {
        return Err(PipelineError::Config(format!("tau must lie in [0, 1), got {}", opts.tau)));
    }
    let tree = doc.tree().map_err(PipelineError::Input)?;
    let rows: Vec<Vec<FuzzyRow>> = (0..doc.persons.len())
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            for (j, y) in doc.ratings[i].iter().enumerate() {
                let Some(y) = *y else { continue };
                let p = tree.probabilities_from_logits(&doc.fit.node_logits(i, j));
                let dist = CategoryDistribution::new(p).expect("tree probabilities form a distribution");
                let f = fuzzify(&dist);
                let tri = match opts.shape {
                    Shape::Beta => None,
                    Shape::TriMoment => Some(f.to_triangular_moments().map(|t| (t, "moment"))),
                    Shape::TriQuantile => Some(to_triangular_quantile(&dist, opts.tau).map(|t| (t, "quantile"))),
                };
                let (y_l, y_u, tri_status) = match tri {
                    None => (None, None, String::new()),
                    Some(Ok((t, how))) => (Some(t.y_l), Some(t.y_u), how.to_string()),
                    Some(Err(e)) => (None, None, status_of(&e)),
                };
                out.push(FuzzyRow {
                    person: doc.persons[i].clone(),
                    item: doc.items[j].clone(),
                    y,
                    c_raw: f.c_raw,
                    v_raw: f.v_raw,
                    s: f.s,
                    a: f.a(),
                    b: f.b(),
                    cardinality: f.cardinality(opts.domain),
                    centroid: f.centroid(opts.domain),
                    support_length: f.support_length(opts.domain),
                    y_l,
                    y_u,
                    tri_status,
                });
            }
            out
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

fn status_of(e: &crate::fuzzy::FuzzyError) -> String {
    use crate::fuzzy::FuzzyError::*;
    match e {
        NegativeDiscriminant { .. } => "negative_discriminant".into(),
        AllBelowThreshold { .. } => "all_below_threshold".into(),
        other => format!("error: {other}"),
    }
}

/// Membership curves on an evenly spaced grid over the chosen domain.
pub fn membership_curves(
    doc: &FitDocument,
    rows: &[FuzzyRow],
    opts: &FuzzifyOptions,
) -> Result<Vec<CurvePoint>, PipelineError> {
    let tree = doc.tree().map_err(PipelineError::Input)?;
    let m = tree.n_categories();
    let (lo, hi) = match opts.domain {
        Domain::Normalized => (0.0, 1.0),
        Domain::Raw => (1.0, m as f64),
    };
    let width = (m - 1) as f64;
    let mut out = Vec::with_capacity(rows.len() * CURVE_POINTS);
    for r in rows {
        let beta = crate::fuzzy::BetaFuzzyNumber::from_mode_precision(r.c_raw, r.s, m)
            .map_err(|e| PipelineError::Input(e.to_string()))?;
        let tri = match (r.y_l, r.y_u) {
            (Some(l), Some(u)) => Some(crate::fuzzy::TriangularFuzzyNumber { y_l: l, c: r.c_raw, y_u: u }),
            _ => None,
        };
        for k in 0..CURVE_POINTS {
            let t = k as f64 / (CURVE_POINTS - 1) as f64;
            let y = lo + (hi - lo) * t;
            let raw = match opts.domain {
                Domain::Normalized => 1.0 + width * y,
                Domain::Raw => y,
            };
            let membership = match (opts.shape, &tri) {
                (Shape::Beta, _) => beta.membership01((raw - 1.0) / width),
                (_, Some(t)) => t.membership(raw),
                (_, None) => f64::NAN,
            };
            out.push(CurvePoint { person: r.person.clone(), item: r.item.clone(), y, membership });
        }
    }
    Ok(out)
}

/// Write `<out>/fuzzy.csv` and, on request, `<out>/curves.csv`.
pub fn cmd_fuzzify(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let out = cfg.out_dir();
    let input = cfg.fit_result.clone().unwrap_or_else(|| out.join("fit.json"));
    let doc = FitDocument::read(&input)?;
    let rows = fuzzy_rows(&doc, &cfg.fuzzify)?;
    let mut written = vec![out.join("fuzzy.csv")];
    io::write_text(&written[0], &io::fuzzy_csv(&rows))?;
    if cfg.fuzzify.curves {
        let p = out.join("curves.csv");
        io::write_text(&p, &io::curves_csv(&membership_curves(&doc, &rows, &cfg.fuzzify)?))?;
        written.push(p);
    }
    note(cfg, || format!("{} fuzzy numbers", rows.len()));
    Ok(written)
}

type Measure = (&'static str, fn(&FuzzyRow) -> f64);

const MEASURES: [Measure; 5] = [
    ("mode", |r| r.c_raw),
    ("precision", |r| r.s),
    ("cardinality", |r| r.cardinality),
    ("centroid", |r| r.centroid),
    ("support_length", |r| r.support_length),
];

/// Per-person distributions across items, the distribution over all cells,
/// and the distribution of per-person means.
pub fn summarize(rows: &[FuzzyRow]) -> Vec<SummaryRow> {
    let mut persons: Vec<&str> = Vec::new();
    let mut groups: Vec<Vec<&FuzzyRow>> = Vec::new();
    for r in rows {
        match persons.iter().position(|p| *p == r.person) {
            Some(k) => groups[k].push(r),
            None => {
                persons.push(&r.person);
                groups.push(vec![r]);
            }
        }
    }
    let mut out = Vec::new();
    let mut person_means: Vec<Vec<f64>> = vec![Vec::new(); MEASURES.len()];
    for (p, g) in persons.iter().zip(&groups) {
        for (k, (name, get)) in MEASURES.iter().enumerate() {
            let v: Vec<f64> = g.iter().map(|r| get(r)).collect();
            let stats = Distribution::of(&v).expect("group is nonempty");
            person_means[k].push(stats.mean);
            out.push(SummaryRow { scope: "person".into(), id: p.to_string(), measure: name.to_string(), stats });
        }
    }
    for (name, get) in MEASURES {
        let v: Vec<f64> = rows.iter().map(get).collect();
        if let Some(stats) = Distribution::of(&v) {
            out.push(SummaryRow { scope: "cells".into(), id: "all".into(), measure: name.into(), stats });
        }
    }
    for (k, (name, _)) in MEASURES.iter().enumerate() {
        if let Some(stats) = Distribution::of(&person_means[k]) {
            out.push(SummaryRow { scope: "person_means".into(), id: "all".into(), measure: name.to_string(), stats });
        }
    }
    out
}

/// Write `<out>/summary.csv`.
pub fn cmd_summarize(cfg: &PipelineConfig) -> Result<PathBuf, PipelineError> {
    let out = cfg.out_dir();
    let input = cfg.fuzzy.clone().unwrap_or_else(|| out.join("fuzzy.csv"));
    let rows = io::parse_fuzzy(&io::read_text(&input)?, &input)?;
    if rows.is_empty() {
        return Err(PipelineError::Input(format!("{}: no fuzzy numbers to summarize", input.display())));
    }
    let path = out.join("summary.csv");
    io::write_text(&path, &io::summary_csv(&summarize(&rows)))?;
    Ok(path)
}

/// Scenarios `evaluate` will run, with replications and seed resolved.
pub fn evaluation_cells(cfg: &PipelineConfig) -> Result<Vec<SimScenario>, PipelineError> {
    let seed = cfg.seed.ok_or_else(|| PipelineError::Config("evaluate requires an explicit seed (--seed)".into()))?;
    let cells = match &cfg.scenario {
        Some(p) => read_cells(p)?,
        None if !cfg.evaluate.scenarios.is_empty() => cfg.evaluate.scenarios.clone(),
        None => default_grid(),
    };
    if cells.is_empty() {
        return Err(PipelineError::Input("scenario list is empty".into()));
    }
    cells
        .iter()
        .map(|c| {
            let reps = cfg.evaluate.reps.or(c.replications).unwrap_or(DEFAULT_REPLICATIONS);
            validated(c.scenario(reps, seed))
        })
        .collect()
}

/// Run every cell and write `auc_table.csv`, `auc_long.csv`, `auc_items.csv`
/// and `auc_failures.log` under the output directory.
pub fn cmd_evaluate(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, PipelineError> {
    cfg.check_fit_options()?;
    let scenarios = evaluation_cells(cfg)?;
    let mut cells: Vec<CellSummary> = Vec::with_capacity(scenarios.len());
    for s in &scenarios {
        let c = run_cell(s, &cfg.fit, cfg.evaluate.score);
        note(cfg, || {
            format!(
                "M={} I={} J={} beta0={}: {:.3} ({:.3}), {} failed",
                s.categories,
                s.persons,
                s.items,
                s.beta0,
                c.mean,
                c.sd,
                c.failures.len()
            )
        });
        cells.push(c);
    }
    let out = cfg.out_dir();
    let files = [
        ("auc_table.csv", io::auc_table_csv(&cells)),
        ("auc_long.csv", io::auc_long_csv(&cells)),
        ("auc_items.csv", io::auc_items_csv(&cells)),
        ("auc_failures.log", io::failure_log(&cells)),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let p = out.join(name);
        io::write_text(&p, &body)?;
        written.push(p);
    }
    if cells.iter().all(|c| c.completed == 0) {
        return Err(PipelineError::Evaluate(format!(
            "every replication failed; see {}",
            out.join("auc_failures.log").display()
        )));
    }
    Ok(written)
}
