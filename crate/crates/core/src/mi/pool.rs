//! Rubin's rules for a scalar estimand.

// Float supplies libm-backed math when std is absent.
#[allow(unused_imports)]
use num_traits::Float;

use crate::roc::{wald_ci, ConfidenceInterval};

use super::ImputeError;

#[derive(Debug, Clone, PartialEq)]
pub struct PooledResult {
    pub theta_bar: f64,
    pub within_w: f64,
    pub between_b: f64,
    pub total_v: f64,
    /// Infinite when the between-imputation variance is zero.
    pub nu: f64,
    pub ci: ConfidenceInterval,
}

/// Pools per-imputation estimates: `V* = W + (m+1)/m·B`,
/// `ν = (1 + m/(m+1)·W/B)²·(m−1)`, interval from the t quantile at `ν`.
pub fn pool(theta_hats: &[f64], variances: &[f64], level: f64) -> Result<PooledResult, ImputeError> {
    let m = theta_hats.len();
    if variances.len() != m {
        return Err(ImputeError::LengthMismatch);
    }
    if m < 2 {
        return Err(ImputeError::TooFewImputations);
    }
    let mf = m as f64;
    let theta_bar = theta_hats.iter().sum::<f64>() / mf;
    let within_w = variances.iter().sum::<f64>() / mf;
    let between_b = theta_hats.iter().map(|t| (t - theta_bar).powi(2)).sum::<f64>() / (mf - 1.0);
    let total_v = within_w + (mf + 1.0) / mf * between_b;
    let nu = if between_b > 0.0 {
        (1.0 + mf / (mf + 1.0) * within_w / between_b).powi(2) * (mf - 1.0)
    } else {
        f64::INFINITY
    };
    let ci = wald_ci(theta_bar, total_v.max(0.0), level, nu)
        .map_err(|_| ImputeError::InvalidSpec("invalid pooling input"))?;
    Ok(PooledResult {
        theta_bar,
        within_w,
        between_b,
        total_v,
        nu,
        ci,
    })
}
