//! Multiple imputation of missing values and Rubin pooling.
//!
//! Three techniques are available. PMM and logistic regression run as
//! chained equations (one sweep visits every incomplete column in index
//! order). NORM fits a joint multivariate normal model by data augmentation
//! and rounds binary columns afterwards.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::rng::{stream, tag, StreamRng};

mod chained;
pub mod dataset;
pub mod logreg;
pub mod norm;
pub mod pmm;
pub mod pool;

pub use chained::{chained_sweep, WorkingData};
pub use dataset::{Column, ColumnKind, ColumnRole, StudyDataset};
pub use logreg::impute_logreg;
pub use norm::{adaptive_round, adaptive_threshold, norm_da_impute, norm_em, MvnParams, NormChain};
pub use pmm::impute_pmm;
pub use pool::{pool, PooledResult};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ImputeError {
    #[error("invalid imputation spec: {0}")]
    InvalidSpec(&'static str),
    #[error("nothing to fit (column {column:?} has no observed values)")]
    NothingToFit { column: String },
    #[error("degenerate outcome column {column:?} (one observed class)")]
    DegenerateOutcome { column: String },
    #[error("invalid value in column {column:?} at row {row}")]
    InvalidValue { column: String, row: usize },
    #[error("dataset needs exactly one biomarker and one binary disease column")]
    Roles,
    #[error("column {column:?} has a different length from the first column")]
    RaggedColumns { column: String },
    #[error("model fit failed: {reason}")]
    FitFailed { reason: &'static str },
    #[error("covariance matrix not positive definite")]
    NotPositiveDefinite,
    #[error("pooling requires m ≥ 2")]
    TooFewImputations,
    #[error("estimate and variance sequences differ in length")]
    LengthMismatch,
}

impl ImputeError {
    /// Attaches a column name to errors raised by single-column models.
    fn for_column(self, name: &str) -> Self {
        match self {
            Self::NothingToFit { column } if column.is_empty() => Self::NothingToFit { column: name.into() },
            Self::DegenerateOutcome { column } if column.is_empty() => Self::DegenerateOutcome { column: name.into() },
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Technique {
    Pmm,
    LogReg,
    Norm,
}

impl Technique {
    pub const ALL: [Technique; 3] = [Technique::Pmm, Technique::LogReg, Technique::Norm];

    pub fn label(self) -> &'static str {
        match self {
            Technique::Pmm => "PMM",
            Technique::LogReg => "LR",
            Technique::Norm => "NORM",
        }
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Technique {
    type Err = crate::roc::UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pmm" => Ok(Technique::Pmm),
            "lr" | "logreg" => Ok(Technique::LogReg),
            "norm" | "normda" => Ok(Technique::Norm),
            _ => Err(crate::roc::UnknownName(s.into())),
        }
    }
}

/// The model used for one incomplete column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnMethod {
    Pmm { donor_count: usize },
    LogReg,
    NormDa { adaptive_rounding: bool },
}

/// Which entries feed `ω̄` in adaptive rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OmegaScope {
    /// Observed 0/1 entries plus imputed continuous values.
    #[default]
    AllEntries,
    ImputedOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputationSpec {
    pub technique: Technique,
    /// Number of completed datasets.
    pub m: usize,
    /// Chained-equation sweeps per imputation.
    pub iterations: usize,
    pub donor_count: usize,
    /// Data-augmentation steps before the first and between imputations.
    pub burn_in: usize,
    pub adaptive_rounding: bool,
    pub omega_scope: OmegaScope,
    pub seed: u64,
}

impl ImputationSpec {
    pub const DEFAULT_DONORS: usize = 5;
    pub const DEFAULT_BURN_IN: usize = 100;

    pub fn new(technique: Technique, seed: u64) -> Self {
        Self {
            technique,
            m: 10,
            iterations: 5,
            donor_count: Self::DEFAULT_DONORS,
            burn_in: Self::DEFAULT_BURN_IN,
            adaptive_rounding: true,
            omega_scope: OmegaScope::AllEntries,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ImputeError> {
        if self.m < 2 {
            return Err(ImputeError::InvalidSpec("m must be at least 2"));
        }
        if self.iterations < 1 {
            return Err(ImputeError::InvalidSpec("iterations must be at least 1"));
        }
        if self.donor_count < 1 {
            return Err(ImputeError::InvalidSpec("donor_count must be at least 1"));
        }
        if self.technique == Technique::Norm && self.burn_in < 1 {
            return Err(ImputeError::InvalidSpec("burn_in must be at least 1"));
        }
        Ok(())
    }

    /// Model for a column of the given kind. Logistic regression only
    /// applies to binary columns; continuous ones fall back to PMM.
    pub fn method_for(&self, kind: ColumnKind) -> ColumnMethod {
        match (self.technique, kind) {
            (Technique::Norm, _) => ColumnMethod::NormDa {
                adaptive_rounding: self.adaptive_rounding,
            },
            (Technique::LogReg, ColumnKind::Binary) => ColumnMethod::LogReg,
            _ => ColumnMethod::Pmm {
                donor_count: self.donor_count,
            },
        }
    }
}

fn precheck(data: &StudyDataset, spec: &ImputationSpec) -> Result<(), ImputeError> {
    spec.validate()?;
    for &c in &data.incomplete_columns() {
        let col = data.column(c);
        if col.observed_count() == 0 {
            return Err(ImputeError::NothingToFit {
                column: col.name.clone(),
            });
        }
        let binary_model =
            c == data.disease_index() || (col.kind == ColumnKind::Binary && spec.technique == Technique::LogReg);
        if binary_model {
            let ones = col.observed_values().filter(|&v| v == 1.0).count();
            if ones == 0 || ones == col.observed_count() {
                return Err(ImputeError::DegenerateOutcome {
                    column: col.name.clone(),
                });
            }
        }
    }
    Ok(())
}

/// Source of successive completed datasets for one incomplete dataset.
///
/// Chained-equation draws are independent: draw `k` runs its own chain from
/// a fresh initial fill on stream `(seed, k)`. NORM draws come from a single
/// data-augmentation chain, spaced `burn_in` steps apart. Calling
/// [`Imputer::draw`] more than `m` times is allowed (the study runner redraws
/// imputations that come out degenerate).
pub struct Imputer {
    data: StudyDataset,
    spec: ImputationSpec,
    next: u64,
    chain: Option<NormChain<StreamRng>>,
}

impl Imputer {
    pub fn new(data: &StudyDataset, spec: &ImputationSpec) -> Result<Self, ImputeError> {
        precheck(data, spec)?;
        let chain = if spec.technique == Technique::Norm && !data.is_complete() {
            Some(NormChain::new(
                data,
                spec.burn_in,
                spec.adaptive_rounding,
                spec.omega_scope,
                stream(spec.seed, &[tag::IMPUTE]),
            )?)
        } else {
            None
        };
        Ok(Self {
            data: data.clone(),
            spec: spec.clone(),
            next: 0,
            chain,
        })
    }

    pub fn draw(&mut self) -> Result<StudyDataset, ImputeError> {
        let k = self.next;
        self.next += 1;
        if self.data.is_complete() {
            return Ok(self.data.clone());
        }
        if let Some(chain) = self.chain.as_mut() {
            return chain.next_imputation();
        }
        let mut rng = stream(self.spec.seed, &[tag::IMPUTE, k]);
        let mut work = WorkingData::initial_fill(&self.data, &mut rng);
        for _ in 0..self.spec.iterations {
            chained_sweep(&mut work, &self.spec, &mut rng)?;
        }
        Ok(work.into_dataset())
    }

    /// Number of draws made so far.
    pub fn drawn(&self) -> u64 {
        self.next
    }
}

/// `spec.m` completed datasets.
pub fn impute(data: &StudyDataset, spec: &ImputationSpec) -> Result<Vec<StudyDataset>, ImputeError> {
    let mut imputer = Imputer::new(data, spec)?;
    (0..spec.m).map(|_| imputer.draw()).collect()
}

pub(crate) fn fit_column(
    work: &WorkingData,
    col: usize,
    method: ColumnMethod,
    rng: &mut StreamRng,
) -> Result<Vec<f64>, ImputeError> {
    let target = work.values(col);
    let observed = work.observed(col);
    let predictors: Vec<&[f64]> = (0..work.n_columns())
        .filter(|&c| c != col)
        .map(|c| work.values(c))
        .collect();
    let out = match method {
        ColumnMethod::Pmm { donor_count } => impute_pmm(target, observed, &predictors, donor_count, rng),
        ColumnMethod::LogReg => impute_logreg(target, observed, &predictors, rng),
        ColumnMethod::NormDa { .. } => Err(ImputeError::InvalidSpec("NORM is not a chained-equation model")),
    };
    out.map_err(|e| e.for_column(work.name(col)))
}
