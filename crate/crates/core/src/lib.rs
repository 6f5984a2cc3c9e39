//! AUC confidence intervals under missing disease status.
//!
//! `rocmi-core` is `no_std` (it needs `alloc`). It contains the Mann-Whitney
//! AUC estimator with five Wald variance estimators ([`roc`]), multiple
//! imputation of missing values with Rubin pooling ([`mi`]), the simulation
//! model for biomarker/disease/verification data ([`sim`]), and the
//! per-replicate study runner with its evaluation metrics ([`study`]).
//! File formats, configuration and parallel execution live in the `rocmi`
//! crate.
#![no_std]
// Negated comparisons are how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod linalg;
pub mod mi;
pub mod quantile;
pub mod rng;
pub mod roc;
pub mod sim;
pub mod study;

pub use roc::{
    auc_hat, kernel, placements, var_bamber, var_delong, var_hm1, var_hm2, var_newcombe, wald_ci, AucStatistics,
    ConfidenceInterval, GroupedScores, PlacementTable, RocError, VarianceMethod,
};
