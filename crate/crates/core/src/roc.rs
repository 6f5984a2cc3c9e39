//! Empirical AUC and its Wald-type intervals.
//!
//! The AUC estimate is the Mann-Whitney statistic scaled to `[0, 1]`, with
//! tied diseased/non-diseased pairs counted as one half. Five variance
//! estimators are provided; they differ only in how `Var(θ̂)` is
//! approximated and are selected through [`VarianceMethod`].
//!
//! Ties are exact floating-point equality. There is no epsilon.

use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

// Float supplies libm-backed math when std is absent.
#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::quantile::student_t_quantile;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RocError {
    #[error("empty group")]
    EmptyGroup,
    #[error("insufficient group size (n_x = {n_x}, n_y = {n_y}; need at least 2 each)")]
    InsufficientGroupSize { n_x: usize, n_y: usize },
    #[error("non-finite score")]
    NonFiniteScore,
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("variance must be finite and non-negative, got {0}")]
    InvalidVariance(f64),
    #[error("degrees of freedom must be positive, got {0}")]
    InvalidDegreesOfFreedom(f64),
}

/// Biomarker values split by disease status: `x` non-diseased, `y` diseased.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedScores {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl GroupedScores {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self, RocError> {
        if x.is_empty() || y.is_empty() {
            return Err(RocError::EmptyGroup);
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(RocError::NonFiniteScore);
        }
        Ok(Self { x, y })
    }

    /// Splits `scores` by `diseased` (true goes to `y`).
    pub fn from_labeled(scores: &[f64], diseased: &[bool]) -> Result<Self, RocError> {
        if scores.len() != diseased.len() {
            return Err(RocError::LengthMismatch {
                scores: scores.len(),
                labels: diseased.len(),
            });
        }
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (&s, &d) in scores.iter().zip(diseased) {
            if d {
                y.push(s);
            } else {
                x.push(s);
            }
        }
        Self::new(x, y)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn n_x(&self) -> usize {
        self.x.len()
    }

    pub fn n_y(&self) -> usize {
        self.y.len()
    }

    /// The same data with group roles exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            x: self.y.clone(),
            y: self.x.clone(),
        }
    }

    fn require_variance_sizes(&self) -> Result<(), RocError> {
        if self.n_x() < 2 || self.n_y() < 2 {
            return Err(RocError::InsufficientGroupSize {
                n_x: self.n_x(),
                n_y: self.n_y(),
            });
        }
        Ok(())
    }
}

/// Placement kernel `H(y, x)`: 1 if `y > x`, ½ on a tie, else 0.
#[inline]
pub fn kernel(y: f64, x: f64) -> f64 {
    if y > x {
        1.0
    } else if y == x {
        0.5
    } else {
        0.0
    }
}

/// Row and column sums of the placement kernel.
///
/// `v_row[i] = Σ_j H(y_i, x_j)` (length `n_y`), `v_col[j] = Σ_i H(y_i, x_j)`
/// (length `n_x`). All entries are half-integers, so sums are exact.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacementTable {
    v_row: Vec<f64>,
    v_col: Vec<f64>,
    tied_pairs: usize,
}

impl PlacementTable {
    pub fn v_row(&self) -> &[f64] {
        &self.v_row
    }

    pub fn v_col(&self) -> &[f64] {
        &self.v_col
    }

    /// `u_{i.} = n_x − v_{i.}`
    pub fn u_row(&self) -> Vec<f64> {
        let n_x = self.v_col.len() as f64;
        self.v_row.iter().map(|v| n_x - v).collect()
    }

    /// `u_{.j} = n_y − v_{.j}`
    pub fn u_col(&self) -> Vec<f64> {
        let n_y = self.v_row.len() as f64;
        self.v_col.iter().map(|v| n_y - v).collect()
    }

    /// Number of `(i, j)` pairs with `y_i == x_j`.
    pub fn tied_pairs(&self) -> usize {
        self.tied_pairs
    }

    /// `Σ_i v_{i.}`, which equals `Σ_j v_{.j}` and `n_x·n_y·θ̂`.
    pub fn total(&self) -> f64 {
        self.v_row.iter().sum()
    }
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    out.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    out
}

/// Placements in `O((n_x + n_y) log(n_x + n_y))` by sorting each group once
/// and locating every score of the other group with binary search.
pub fn placements(scores: &GroupedScores) -> PlacementTable {
    let xs = sorted(&scores.x);
    let ys = sorted(&scores.y);
    let mut tied_pairs = 0usize;
    let v_row = scores
        .y
        .iter()
        .map(|&y| {
            let below = xs.partition_point(|&x| x < y);
            let at_or_below = xs.partition_point(|&x| x <= y);
            let ties = at_or_below - below;
            tied_pairs += ties;
            below as f64 + 0.5 * ties as f64
        })
        .collect();
    let v_col = scores
        .x
        .iter()
        .map(|&x| {
            let at_or_below = ys.partition_point(|&y| y <= x);
            let below = ys.partition_point(|&y| y < x);
            let above = ys.len() - at_or_below;
            above as f64 + 0.5 * (at_or_below - below) as f64
        })
        .collect();
    PlacementTable {
        v_row,
        v_col,
        tied_pairs,
    }
}

/// Direct `O(n_x·n_y)` evaluation of the placement sums. Kept as an oracle
/// for [`placements`].
pub fn placements_reference(scores: &GroupedScores) -> PlacementTable {
    let mut v_row = alloc::vec![0.0; scores.n_y()];
    let mut v_col = alloc::vec![0.0; scores.n_x()];
    let mut tied_pairs = 0;
    for (i, &y) in scores.y.iter().enumerate() {
        for (j, &x) in scores.x.iter().enumerate() {
            let h = kernel(y, x);
            v_row[i] += h;
            v_col[j] += h;
            if y == x {
                tied_pairs += 1;
            }
        }
    }
    PlacementTable {
        v_row,
        v_col,
        tied_pairs,
    }
}

/// Empirical AUC `θ̂ = Σ_ij H(y_i, x_j) / (n_x n_y)`.
pub fn auc_hat(scores: &GroupedScores) -> f64 {
    let table = placements(scores);
    table.total() / (scores.n_x() as f64 * scores.n_y() as f64)
}

/// Wald variance estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarianceMethod {
    Bamber,
    HanleyMcNeil1,
    HanleyMcNeil2,
    NewcombeWald,
    DeLong,
}

impl VarianceMethod {
    pub const ALL: [VarianceMethod; 5] = [
        VarianceMethod::Bamber,
        VarianceMethod::HanleyMcNeil1,
        VarianceMethod::HanleyMcNeil2,
        VarianceMethod::NewcombeWald,
        VarianceMethod::DeLong,
    ];

    /// Short label used in tables and CSV files.
    pub fn label(self) -> &'static str {
        match self {
            VarianceMethod::Bamber => "Bm",
            VarianceMethod::HanleyMcNeil1 => "HM1",
            VarianceMethod::HanleyMcNeil2 => "HM2",
            VarianceMethod::NewcombeWald => "NW",
            VarianceMethod::DeLong => "DL",
        }
    }
}

impl fmt::Display for VarianceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for VarianceMethod {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Ok(match lower.as_str() {
            "bm" | "bamber" => VarianceMethod::Bamber,
            "hm1" | "hanleymcneil1" | "hanley-mcneil1" => VarianceMethod::HanleyMcNeil1,
            "hm2" | "hanleymcneil2" | "hanley-mcneil2" => VarianceMethod::HanleyMcNeil2,
            "nw" | "newcombe" | "newcombewald" => VarianceMethod::NewcombeWald,
            "dl" | "delong" => VarianceMethod::DeLong,
            _ => return Err(UnknownName(s.into())),
        })
    }
}

/// Returned when parsing an enumeration label fails.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown name `{0}`")]
pub struct UnknownName(pub alloc::string::String);

/// Everything the variance estimators need, computed once per sample.
#[derive(Debug, Clone)]
pub struct AucStatistics {
    n_x: usize,
    n_y: usize,
    theta: f64,
    p_tie: f64,
    table: PlacementTable,
}

impl AucStatistics {
    pub fn new(scores: &GroupedScores) -> Self {
        let table = placements(scores);
        let pairs = scores.n_x() as f64 * scores.n_y() as f64;
        Self {
            n_x: scores.n_x(),
            n_y: scores.n_y(),
            theta: table.total() / pairs,
            p_tie: table.tied_pairs() as f64 / pairs,
            table,
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Fraction of tied pairs, `p(Y = X)`.
    pub fn p_tie(&self) -> f64 {
        self.p_tie
    }

    pub fn placements(&self) -> &PlacementTable {
        &self.table
    }

    /// `Q̂₁ = Σ_j v_{.j}² / (n_x n_y²)`
    pub fn q1_hat(&self) -> f64 {
        let s: f64 = self.table.v_col.iter().map(|v| v * v).sum();
        s / (self.n_x as f64 * (self.n_y as f64).powi(2))
    }

    /// `Q̂₂ = Σ_i v_{i.}² / (n_x² n_y)`
    pub fn q2_hat(&self) -> f64 {
        let s: f64 = self.table.v_row.iter().map(|v| v * v).sum();
        s / ((self.n_x as f64).powi(2) * self.n_y as f64)
    }

    fn check(&self) -> Result<(), RocError> {
        if self.n_x < 2 || self.n_y < 2 {
            return Err(RocError::InsufficientGroupSize {
                n_x: self.n_x,
                n_y: self.n_y,
            });
        }
        Ok(())
    }

    pub fn variance(&self, method: VarianceMethod) -> Result<f64, RocError> {
        match method {
            VarianceMethod::Bamber => self.bamber(),
            VarianceMethod::HanleyMcNeil1 => self.hanley_mcneil_1(),
            VarianceMethod::HanleyMcNeil2 => self.hanley_mcneil_2(),
            VarianceMethod::NewcombeWald => var_newcombe(self.theta, self.n_x, self.n_y),
            VarianceMethod::DeLong => self.delong(),
        }
    }

    /// Bamber's estimator. Can be negative in very small samples.
    pub fn bamber(&self) -> Result<f64, RocError> {
        self.check()?;
        let nx = self.n_x as f64;
        let ny = self.n_y as f64;
        let spread = |u: f64, v: f64| u * (u - 1.0) + v * (v - 1.0) - 2.0 * u * v;
        let b_xxy: f64 = self
            .table
            .u_row()
            .iter()
            .zip(&self.table.v_row)
            .map(|(&u, &v)| spread(u, v))
            .sum::<f64>()
            / (nx * (nx - 1.0) * ny);
        let b_yyx: f64 = self
            .table
            .u_col()
            .iter()
            .zip(&self.table.v_col)
            .map(|(&u, &v)| spread(u, v))
            .sum::<f64>()
            / (ny * (ny - 1.0) * nx);
        let p_unequal = 1.0 - self.p_tie;
        let centered = self.theta - 0.5;
        Ok(
            (p_unequal + (nx - 1.0) * b_xxy + (ny - 1.0) * b_yyx - 4.0 * (nx + ny - 1.0) * centered * centered)
                / (4.0 * (nx - 1.0) * (ny - 1.0)),
        )
    }

    fn hanley_mcneil_skeleton(&self, q1: f64, q2: f64) -> f64 {
        let nx = self.n_x as f64;
        let ny = self.n_y as f64;
        let t = self.theta;
        let t2 = t * t;
        (t * (1.0 - t) - 0.25 * self.p_tie + (ny - 1.0) * (q1 - t2) + (nx - 1.0) * (q2 - t2))
            / ((nx - 1.0) * (ny - 1.0))
    }

    /// Hanley-McNeil with empirical `Q̂₁, Q̂₂`, tie term and `(n−1)` denominators.
    pub fn hanley_mcneil_1(&self) -> Result<f64, RocError> {
        self.check()?;
        Ok(self.hanley_mcneil_skeleton(self.q1_hat(), self.q2_hat()))
    }

    /// Hanley-McNeil with exponential-model `Q₁ = θ/(2−θ)`, `Q₂ = 2θ²/(1+θ)`.
    pub fn hanley_mcneil_2(&self) -> Result<f64, RocError> {
        self.check()?;
        let t = self.theta;
        Ok(self.hanley_mcneil_skeleton(t / (2.0 - t), 2.0 * t * t / (1.0 + t)))
    }

    /// DeLong's placement-variance estimator. Never negative.
    pub fn delong(&self) -> Result<f64, RocError> {
        self.check()?;
        let nx = self.n_x as f64;
        let ny = self.n_y as f64;
        let t = self.theta;
        let s10 = self.table.v_col.iter().map(|v| (v / ny - t).powi(2)).sum::<f64>() / (nx - 1.0);
        let s01 = self.table.v_row.iter().map(|v| (v / nx - t).powi(2)).sum::<f64>() / (ny - 1.0);
        Ok(s10 / nx + s01 / ny)
    }
}

pub fn var_bamber(scores: &GroupedScores) -> Result<f64, RocError> {
    scores.require_variance_sizes()?;
    AucStatistics::new(scores).bamber()
}

pub fn var_hm1(scores: &GroupedScores) -> Result<f64, RocError> {
    scores.require_variance_sizes()?;
    AucStatistics::new(scores).hanley_mcneil_1()
}

pub fn var_hm2(scores: &GroupedScores) -> Result<f64, RocError> {
    scores.require_variance_sizes()?;
    AucStatistics::new(scores).hanley_mcneil_2()
}

pub fn var_delong(scores: &GroupedScores) -> Result<f64, RocError> {
    scores.require_variance_sizes()?;
    AucStatistics::new(scores).delong()
}

/// Newcombe's Wald variance: Hanley-McNeil II with both group sizes in the
/// numerator replaced by their mean `N = (n_x + n_y)/2`.
pub fn var_newcombe(theta_hat: f64, n_x: usize, n_y: usize) -> Result<f64, RocError> {
    if n_x < 2 || n_y < 2 {
        return Err(RocError::InsufficientGroupSize { n_x, n_y });
    }
    let t = theta_hat;
    let n = 0.5 * (n_x + n_y) as f64;
    let denom = (n_x as f64 - 1.0) * (n_y as f64 - 1.0);
    Ok(t * (1.0 - t) / denom * (2.0 * n - 1.0 - (3.0 * n - 3.0) / ((2.0 - t) * (1.0 + t))))
}

/// A symmetric interval `point ± q·√variance`, not truncated to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub point: f64,
    pub variance: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    /// `f64::INFINITY` for a normal reference distribution.
    pub df: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Length after clipping both bounds to `[0, 1]`.
    pub fn truncated_length(&self) -> f64 {
        (self.upper.min(1.0) - self.lower.max(0.0)).max(0.0)
    }
}

/// `θ̂ ± q·√V`, with `q` the normal quantile when `df` is infinite and the
/// Student-t quantile (at possibly non-integer `df`) otherwise.
pub fn wald_ci(theta_hat: f64, variance: f64, level: f64, df: f64) -> Result<ConfidenceInterval, RocError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(RocError::InvalidLevel(level));
    }
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(RocError::InvalidVariance(variance));
    }
    if !(df > 0.0) {
        return Err(RocError::InvalidDegreesOfFreedom(df));
    }
    let q = student_t_quantile(0.5 + 0.5 * level, df);
    let half = q * variance.sqrt();
    Ok(ConfidenceInterval {
        point: theta_hat,
        variance,
        lower: theta_hat - half,
        upper: theta_hat + half,
        level,
        df,
    })
}
