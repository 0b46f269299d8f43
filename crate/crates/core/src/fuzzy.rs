//! Beta and triangular fuzzy numbers built from category distributions.
//!
//! A distribution over categories `1..=M` is summarized by its mean (the mode
//! of the fuzzy number) and the reciprocal of its variance (the precision).
//! The membership function is a beta kernel on the normalized domain
//! `u = (y - 1) / (M - 1)`, rescaled so that it peaks at exactly 1.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::simpson;

/// Variance floor; a point-mass distribution gets precision `1 / VARIANCE_FLOOR`.
pub const VARIANCE_FLOOR: f64 = 1e-6;
/// Default probability threshold for quantile-based triangular bounds.
pub const DEFAULT_TAU: f64 = 0.01;
/// Membership cut used to measure the support length of a beta fuzzy number.
pub const SUPPORT_CUT: f64 = 1e-3;
/// Grid size for the cardinality integral.
pub const CARDINALITY_POINTS: usize = 2001;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FuzzyError {
    #[error("invalid category distribution: {0}")]
    InvalidDistribution(String),
    #[error("point {y} lies outside the domain [1, {m}]")]
    DomainError { y: f64, m: usize },
    #[error("moment matching has no real solution (discriminant {discriminant})")]
    NegativeDiscriminant { discriminant: f64 },
    #[error("no category reaches probability {tau}")]
    AllBelowThreshold { tau: f64 },
    #[error("threshold {0} must lie in [0, 1)")]
    BadThreshold(f64),
    #[error("invalid fuzzy number: {0}")]
    InvalidNumber(String),
}

/// Scale on which summary measures are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// `[0, 1]`
    #[default]
    Normalized,
    /// `[1, M]`
    Raw,
}

impl std::str::FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normalized" => Ok(Self::Normalized),
            "raw" => Ok(Self::Raw),
            other => Err(format!("unknown domain `{other}` (expected normalized or raw)")),
        }
    }
}

/// Probabilities of categories `1..=M`.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryDistribution {
    p: Vec<f64>,
}

impl CategoryDistribution {
    pub fn new(p: Vec<f64>) -> Result<Self, FuzzyError> {
        if p.len() < 2 {
            return Err(FuzzyError::InvalidDistribution(format!("{} categories; need at least 2", p.len())));
        }
        if let Some(bad) = p.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(FuzzyError::InvalidDistribution(format!("probability {bad}")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(FuzzyError::InvalidDistribution(format!("probabilities sum to {total}")));
        }
        Ok(Self { p })
    }

    pub fn n_categories(&self) -> usize {
        self.p.len()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn mean(&self) -> f64 {
        self.p.iter().enumerate().map(|(k, p)| (k + 1) as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let c = self.mean();
        self.p.iter().enumerate().map(|(k, p)| ((k + 1) as f64 - c).powi(2) * p).sum()
    }
}

/// Beta fuzzy number on `[1, M]`, parameterized by mode and precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaFuzzyNumber {
    /// Mode on the raw scale.
    pub c_raw: f64,
    /// Variance on the raw scale.
    pub v_raw: f64,
    /// Precision `1 / max(v_raw, VARIANCE_FLOOR)`.
    pub s: f64,
    pub m: usize,
}

/// Triangular fuzzy number `(y_l, c, y_u)` on `[1, M]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangularFuzzyNumber {
    pub y_l: f64,
    pub c: f64,
    pub y_u: f64,
}

impl TriangularFuzzyNumber {
    pub fn new(y_l: f64, c: f64, y_u: f64) -> Result<Self, FuzzyError> {
        if !(y_l <= c && c <= y_u) {
            return Err(FuzzyError::InvalidNumber(format!("bounds ({y_l}, {c}, {y_u}) are not ordered")));
        }
        Ok(Self { y_l, c, y_u })
    }

    pub fn membership(&self, y: f64) -> f64 {
        if y < self.y_l || y > self.y_u {
            0.0
        } else if y == self.c {
            1.0
        } else if y < self.c {
            (y - self.y_l) / (self.c - self.y_l)
        } else {
            (self.y_u - y) / (self.y_u - self.c)
        }
    }

    pub fn support_length(&self) -> f64 {
        self.y_u - self.y_l
    }

    /// The same triangle on `[0, 1]` for an `m`-category scale.
    pub fn normalized(&self, m: usize) -> Self {
        let w = (m - 1) as f64;
        Self { y_l: (self.y_l - 1.0) / w, c: (self.c - 1.0) / w, y_u: (self.y_u - 1.0) / w }
    }
}

/// Mode and precision of the fuzzy number for one category distribution.
pub fn fuzzify(dist: &CategoryDistribution) -> BetaFuzzyNumber {
    let c_raw = dist.mean().clamp(1.0, dist.n_categories() as f64);
    let v_raw = dist.variance().max(0.0);
    BetaFuzzyNumber { c_raw, v_raw, s: 1.0 / v_raw.max(VARIANCE_FLOOR), m: dist.n_categories() }
}

impl BetaFuzzyNumber {
    /// Build from mode and precision directly; the variance is taken as `1 / s`.
    pub fn from_mode_precision(c_raw: f64, s: f64, m: usize) -> Result<Self, FuzzyError> {
        if m < 2 || !(1.0..=m as f64).contains(&c_raw) || !(s > 0.0 && s.is_finite()) {
            return Err(FuzzyError::InvalidNumber(format!("mode {c_raw}, precision {s}, M = {m}")));
        }
        Ok(Self { c_raw, v_raw: 1.0 / s, s, m })
    }

    fn width(&self) -> f64 {
        (self.m - 1) as f64
    }

    /// Mode on `[0, 1]`.
    pub fn c01(&self) -> f64 {
        ((self.c_raw - 1.0) / self.width()).clamp(0.0, 1.0)
    }

    /// Variance on `[0, 1]`.
    pub fn v01(&self) -> f64 {
        self.v_raw / self.width().powi(2)
    }

    pub fn a(&self) -> f64 {
        1.0 + self.c01() * self.s
    }

    pub fn b(&self) -> f64 {
        1.0 + self.s * (1.0 - self.c01())
    }

    /// Peak height of the unnormalized kernel `u^{a-1} (1-u)^{b-1}`.
    pub fn normalizer(&self) -> f64 {
        self.log_normalizer().exp()
    }

    fn log_normalizer(&self) -> f64 {
        let c = self.c01();
        xlogy(self.a() - 1.0, c) + xlogy(self.b() - 1.0, 1.0 - c)
    }

    /// Membership at `u` on the normalized scale; zero outside `[0, 1]`.
    pub fn membership01(&self, u: f64) -> f64 {
        if !(0.0..=1.0).contains(&u) {
            return 0.0;
        }
        let log = xlogy(self.a() - 1.0, u) + xlogy(self.b() - 1.0, 1.0 - u) - self.log_normalizer();
        log.exp().min(1.0)
    }

    /// Membership at `y` on the raw scale `[1, M]`.
    pub fn membership(&self, y: f64) -> Result<f64, FuzzyError> {
        if !(1.0..=self.m as f64).contains(&y) {
            return Err(FuzzyError::DomainError { y, m: self.m });
        }
        Ok(self.membership01((y - 1.0) / self.width()))
    }

    /// Triangular approximation matching the first two moments of the beta
    /// shape on `[0, 1]`, mapped back to `[1, M]`.
    ///
    /// Bounds are clipped to the domain and widened to contain the mode.
    pub fn to_triangular_moments(&self) -> Result<TriangularFuzzyNumber, FuzzyError> {
        let c = self.c01();
        let mu = self.centroid01();
        let discriminant = 3.5 * self.v01() - 3.0 * (c - mu).powi(2);
        if discriminant < 0.0 {
            return Err(FuzzyError::NegativeDiscriminant { discriminant });
        }
        let h1 = discriminant.sqrt();
        let h2 = 0.5 * (h1 + 3.0 * c - 3.0 * mu);
        let lo = (c - h2).clamp(0.0, 1.0).min(c);
        let hi = (c - h2 + h1).clamp(0.0, 1.0).max(c);
        let w = self.width();
        Ok(TriangularFuzzyNumber { y_l: 1.0 + w * lo, c: self.c_raw, y_u: 1.0 + w * hi })
    }

    /// Integral of the membership function over the normalized domain.
    ///
    /// Composite Simpson on [`CARDINALITY_POINTS`] points, laid over the
    /// interval where the membership exceeds 1e-18 so that narrow shapes are
    /// resolved; the mass outside that interval is negligible.
    pub fn cardinality01(&self) -> f64 {
        let (lo, hi) = self.level_interval(1e-18);
        if hi <= lo {
            return 0.0;
        }
        // Simpson in t with u = lo + (hi - lo)(1 - cos(pi t))/2: the Jacobian
        // vanishes at both ends and absorbs the u^(a-1) cusp at the boundary.
        let half = 0.5 * (hi - lo);
        simpson(
            |t| {
                let (sin, cos) = (PI * t).sin_cos();
                self.membership01(lo + half * (1.0 - cos)) * half * PI * sin
            },
            0.0,
            1.0,
            CARDINALITY_POINTS,
        )
    }

    pub fn cardinality(&self, domain: Domain) -> f64 {
        match domain {
            Domain::Normalized => self.cardinality01(),
            Domain::Raw => self.cardinality01() * self.width(),
        }
    }

    /// Centroid `(1 + s c) / (2 + s)` on the normalized scale.
    pub fn centroid01(&self) -> f64 {
        (1.0 + self.s * self.c01()) / (2.0 + self.s)
    }

    pub fn centroid(&self, domain: Domain) -> f64 {
        match domain {
            Domain::Normalized => self.centroid01(),
            Domain::Raw => 1.0 + self.width() * self.centroid01(),
        }
    }

    /// Length of `{u : membership(u) > SUPPORT_CUT}`.
    pub fn support_length(&self, domain: Domain) -> f64 {
        let (lo, hi) = self.level_interval(SUPPORT_CUT);
        let len = (hi - lo).max(0.0);
        match domain {
            Domain::Normalized => len,
            Domain::Raw => len * self.width(),
        }
    }

    /// Endpoints of the level set `{u : membership(u) > level}` on `[0, 1]`.
    ///
    /// The membership is unimodal with its peak at `c01`, so each side is
    /// located by bisection.
    pub fn level_interval(&self, level: f64) -> (f64, f64) {
        let c = self.c01();
        let f = |u: f64| self.membership01(u);
        let lo = if f(0.0) > level { 0.0 } else { bisect(&f, level, 0.0, c) };
        let hi = if f(1.0) > level { 1.0 } else { bisect(&f, level, 1.0, c) };
        (lo, hi)
    }
}

/// Boundary between `outside` (membership ≤ level) and `inside` (> level).
fn bisect<F: Fn(f64) -> f64>(f: &F, level: f64, mut outside: f64, mut inside: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (outside + inside);
        if mid == outside || mid == inside {
            break;
        }
        if f(mid) > level {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    0.5 * (outside + inside)
}

/// `x ln y` with the convention `0 ln 0 = 0`.
fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Triangular fuzzy number whose bounds are the smallest and largest
/// categories with probability at least `tau`, and whose mode is the mean.
/// Bounds are widened to contain the mode when necessary.
pub fn to_triangular_quantile(dist: &CategoryDistribution, tau: f64) -> Result<TriangularFuzzyNumber, FuzzyError> {
    if !(0.0..1.0).contains(&tau) {
        return Err(FuzzyError::BadThreshold(tau));
    }
    let p = dist.probabilities();
    let lo = p.iter().position(|&q| q >= tau).ok_or(FuzzyError::AllBelowThreshold { tau })?;
    let hi = p.iter().rposition(|&q| q >= tau).expect("a category reached tau");
    let c = fuzzify(dist).c_raw;
    let y_l = ((lo + 1) as f64).min(c);
    let y_u = ((hi + 1) as f64).max(c);
    Ok(TriangularFuzzyNumber { y_l, c, y_u })
}
