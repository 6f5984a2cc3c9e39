//! Predictive mean matching.

use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::DVector;
// Float supplies libm-backed math when std is absent.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution};

use crate::linalg::{design, stabilized_cholesky, standard_normal_vector};

use super::ImputeError;

/// Linear model of the target with a posterior draw of its coefficients.
pub(crate) struct LinearDraw {
    pub estimate: DVector<f64>,
    pub draw: DVector<f64>,
}

/// Least-squares fit of `target[rows]` on `[1, predictors]` followed by a
/// Bayesian draw: `σ*² = SSR / χ²_df`, `β* = β̂ + σ*·chol((XᵀX)⁻¹)·z`.
pub(crate) fn draw_linear<R: Rng + ?Sized>(
    target: &[f64],
    rows: &[usize],
    predictors: &[&[f64]],
    rng: &mut R,
) -> Result<LinearDraw, ImputeError> {
    let x = design(predictors, rows);
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&r| target[r]));
    let gram = x.transpose() * &x;
    let (chol, _) = stabilized_cholesky(&gram).ok_or(ImputeError::FitFailed {
        reason: "normal equations not solvable",
    })?;
    let estimate = chol.solve(&(x.transpose() * &y));
    let residual = &y - &x * &estimate;
    let ssr = residual.norm_squared();
    let df = (rows.len() as f64 - x.ncols() as f64).max(1.0);
    let chi2: f64 = ChiSquared::new(df)
        .map_err(|_| ImputeError::FitFailed {
            reason: "invalid residual degrees of freedom",
        })?
        .sample(rng);
    let sigma = (ssr / chi2).sqrt();
    let cov = chol.inverse();
    let cov_factor = stabilized_cholesky(&cov)
        .ok_or(ImputeError::FitFailed {
            reason: "coefficient covariance not positive definite",
        })?
        .0;
    let z = standard_normal_vector(estimate.len(), rng);
    let draw = &estimate + cov_factor.l() * z * sigma;
    Ok(LinearDraw { estimate, draw })
}

/// Fills the missing entries of `target` by predictive mean matching.
///
/// Donors are matched on predictions from the point estimate, recipients use
/// predictions from the drawn coefficients. Each missing entry copies the
/// observed value of one of the `donor_count` closest donors, chosen
/// uniformly. When fewer observed cases than `donor_count` exist, all of
/// them form the pool.
pub fn impute_pmm<R: Rng + ?Sized>(
    target: &[f64],
    observed: &[bool],
    predictors: &[&[f64]],
    donor_count: usize,
    rng: &mut R,
) -> Result<Vec<f64>, ImputeError> {
    if donor_count == 0 {
        return Err(ImputeError::InvalidSpec("donor_count must be at least 1"));
    }
    let (obs_rows, mis_rows): (Vec<usize>, Vec<usize>) = (0..target.len()).partition(|&r| observed[r]);
    let mut filled = target.to_vec();
    if mis_rows.is_empty() {
        return Ok(filled);
    }
    if obs_rows.is_empty() {
        return Err(ImputeError::NothingToFit {
            column: Default::default(),
        });
    }

    let fit = draw_linear(target, &obs_rows, predictors, rng)?;
    let x_obs = design(predictors, &obs_rows);
    let x_mis = design(predictors, &mis_rows);
    let yhat_obs = x_obs * &fit.estimate;
    let yhat_mis = x_mis * &fit.draw;

    let k = donor_count.min(obs_rows.len());
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(obs_rows.len());
    for (m, &row) in mis_rows.iter().enumerate() {
        order.clear();
        order.extend(
            yhat_obs
                .iter()
                .enumerate()
                .map(|(d, &yo)| ((yo - yhat_mis[m]).abs(), d)),
        );
        let by_distance =
            |a: &(f64, usize), b: &(f64, usize)| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1));
        if k < order.len() {
            order.select_nth_unstable_by(k - 1, by_distance);
        }
        let nearest = &mut order[..k];
        nearest.sort_unstable_by(by_distance);
        let donor = nearest[rng.random_range(0..k)].1;
        filled[row] = target[obs_rows[donor]];
    }
    Ok(filled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use alloc::vec;

    #[test]
    fn constant_target_gives_constant_imputations() {
        let target = [3.0, 3.0, f64::NAN, 3.0, f64::NAN, 3.0];
        let observed = [true, true, false, true, false, true];
        let pred = [0.1, 0.4, 0.2, 0.9, 1.5, 0.3];
        let mut rng = stream(1, &[]);
        let out = impute_pmm(&target, &observed, &[&pred], 5, &mut rng).unwrap();
        assert!(out.iter().all(|&v| v == 3.0));
    }

    #[test]
    fn single_donor_is_forced() {
        let target = [0.0, 1.0, f64::NAN];
        let observed = [true, true, false];
        let mut rng = stream(2, &[]);
        // Intercept-only model: both donors share one prediction, so with
        // k = 1 the first in index order is chosen.
        let out = impute_pmm(&target, &observed, &[], 1, &mut rng).unwrap();
        assert_eq!(out[2], 0.0);
    }

    #[test]
    fn binary_target_stays_binary() {
        let n = 60;
        let pred: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let observed: Vec<bool> = (0..n).map(|i| i % 3 != 0).collect();
        let target: Vec<f64> = (0..n)
            .map(|i| {
                if !observed[i] {
                    f64::NAN
                } else if pred[i] > 0.0 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let mut rng = stream(3, &[]);
        let out = impute_pmm(&target, &observed, &[&pred], 5, &mut rng).unwrap();
        assert!(out.iter().all(|&v| v == 0.0 || v == 1.0));
        for i in 0..n {
            if observed[i] {
                assert_eq!(out[i], target[i]);
            }
        }
    }

    #[test]
    fn collinear_predictors_survive() {
        let a = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let target = [1.0, 2.0, 3.0, f64::NAN, 5.0, 6.0];
        let observed = [true, true, true, false, true, true];
        let mut rng = stream(4, &[]);
        let out = impute_pmm(&target, &observed, &[&a, &a], 2, &mut rng).unwrap();
        assert!([3.0, 5.0].contains(&out[3]), "{}", out[3]);
    }
}
