//! Logistic-regression imputation of binary columns.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
// Float supplies libm-backed math when std is absent.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::linalg::{add_diagonal, design, jittered_cholesky, ridge_lambda, standard_normal_vector};

use super::ImputeError;

const MAX_ITER: usize = 50;
const MAX_ITER_PENALIZED: usize = 200;
const TOL: f64 = 1e-8;
/// Linear predictors beyond this magnitude indicate (quasi-)separation.
pub const SEPARATION_ETA: f64 = 25.0;

#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub coef: DVector<f64>,
    /// Inverse of the (penalized) observed information at `coef`.
    pub cov: DMatrix<f64>,
    /// Ridge applied to the information diagonal; 0 for a plain fit.
    pub ridge: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[inline]
fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `Xᵀ diag(w) X` without forming the diagonal matrix.
fn weighted_gram(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut xw = x.clone();
    for (mut row, &wi) in xw.row_iter_mut().zip(w.iter()) {
        row *= wi;
    }
    x.transpose() * xw
}

fn penalized_loglik(x: &DMatrix<f64>, y: &DVector<f64>, wt: &DVector<f64>, beta: &DVector<f64>, ridge: f64) -> f64 {
    let eta = x * beta;
    let ll: f64 = eta
        .iter()
        .zip(y.iter())
        .zip(wt.iter())
        .map(|((&e, &yi), &wi)| {
            // log(1 + exp(e)) computed stably
            let log1pexp = if e > 0.0 {
                e + (-e).exp().ln_1p()
            } else {
                e.exp().ln_1p()
            };
            wi * (yi * e - log1pexp)
        })
        .sum();
    ll - 0.5 * ridge * beta.norm_squared()
}

/// Newton-Raphson (IRLS) for `max loglik − ½·ridge·‖β‖²`, with step halving.
pub fn fit_logistic(x: &DMatrix<f64>, y: &DVector<f64>, ridge: f64) -> Result<LogisticFit, ImputeError> {
    fit_logistic_weighted(x, y, &DVector::from_element(y.len(), 1.0), ridge)
}

/// [`fit_logistic`] with case weights multiplying each log-likelihood term.
pub fn fit_logistic_weighted(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    wt: &DVector<f64>,
    ridge: f64,
) -> Result<LogisticFit, ImputeError> {
    let p = x.ncols();
    let max_iter = if ridge > 0.0 { MAX_ITER_PENALIZED } else { MAX_ITER };
    let mut beta = DVector::zeros(p);
    let mut ll = penalized_loglik(x, y, wt, &beta, ridge);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        let eta = x * &beta;
        let mu = eta.map(logistic);
        let w = mu.zip_map(wt, |m, wi| wi * (m * (1.0 - m)).max(1e-12));
        let mut info = weighted_gram(x, &w);
        add_diagonal(&mut info, ridge);
        let grad = x.transpose() * (y - &mu).component_mul(wt) - &beta * ridge;
        let chol = jittered_cholesky(&info, 3).ok_or(ImputeError::FitFailed {
            reason: "logistic information matrix singular",
        })?;
        let step = chol.solve(&grad);
        let mut scale = 1.0;
        let mut candidate = &beta + &step;
        let mut cand_ll = penalized_loglik(x, y, wt, &candidate, ridge);
        while cand_ll < ll - 1e-12 && scale > 1e-6 {
            scale *= 0.5;
            candidate = &beta + &step * scale;
            cand_ll = penalized_loglik(x, y, wt, &candidate, ridge);
        }
        let change = (&candidate - &beta).amax();
        beta = candidate;
        ll = cand_ll;
        if !beta.iter().all(|b| b.is_finite()) {
            return Err(ImputeError::FitFailed {
                reason: "logistic coefficients diverged",
            });
        }
        if change < TOL {
            converged = true;
            break;
        }
    }
    let eta = x * &beta;
    let w = eta.zip_map(wt, |e, wi| {
        let m = logistic(e);
        wi * (m * (1.0 - m)).max(1e-12)
    });
    let mut info = weighted_gram(x, &w);
    add_diagonal(&mut info, ridge);
    let cov = jittered_cholesky(&info, 3)
        .ok_or(ImputeError::FitFailed {
            reason: "logistic information matrix singular",
        })?
        .inverse();
    Ok(LogisticFit {
        coef: beta,
        cov,
        ridge,
        iterations,
        converged,
    })
}

/// Plain fit first; a ridge-stabilized refit when it fails to converge or
/// shows separation (`|η| > 25` somewhere).
pub fn fit_logistic_stabilized(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LogisticFit, ImputeError> {
    fit_logistic_stabilized_weighted(x, y, &DVector::from_element(y.len(), 1.0))
}

pub fn fit_logistic_stabilized_weighted(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    wt: &DVector<f64>,
) -> Result<LogisticFit, ImputeError> {
    if let Ok(fit) = fit_logistic_weighted(x, y, wt, 0.0) {
        let separated = (x * &fit.coef).iter().any(|e| e.abs() > SEPARATION_ETA);
        if fit.converged && !separated {
            return Ok(fit);
        }
    }
    let gram = x.transpose() * x;
    let fit = fit_logistic_weighted(x, y, wt, ridge_lambda(&gram))?;
    if !fit.converged {
        return Err(ImputeError::FitFailed {
            reason: "ridge-stabilized logistic fit did not converge",
        });
    }
    Ok(fit)
}

/// Pseudo-observations appended to the observed rows: for each predictor and
/// each outcome class, two rows at that predictor's mean ± half its standard
/// deviation (clamped to its range) with the other predictors at their means.
/// Their total weight is `p + 1`. This keeps the fit finite under separation
/// while vanishing relative to the data as n grows.
fn augment(
    predictors: &[&[f64]],
    x_obs: DMatrix<f64>,
    y_obs: DVector<f64>,
) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let p = predictors.len();
    let n_obs = x_obs.nrows();
    if p == 0 {
        return (x_obs, y_obs, DVector::from_element(n_obs, 1.0));
    }
    let extra = 4 * p;
    let stats: Vec<(f64, f64, f64, f64)> = predictors
        .iter()
        .map(|col| {
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = if col.len() < 2 {
                0.0
            } else {
                col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
            };
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (mean, var.sqrt(), lo, hi)
        })
        .collect();
    let mut x = x_obs.resize_vertically(n_obs + extra, 1.0);
    let mut y = y_obs.resize_vertically(n_obs + extra, 0.0);
    for j in 0..p {
        for k in 0..4 {
            let row = n_obs + 4 * j + k;
            y[row] = if k < 2 { 0.0 } else { 1.0 };
            for (c, &(mean, sd, lo, hi)) in stats.iter().enumerate() {
                x[(row, c + 1)] = if c == j {
                    let shift = if k % 2 == 0 { 0.5 } else { -0.5 };
                    (mean + shift * sd).clamp(lo, hi)
                } else {
                    mean
                };
            }
        }
    }
    let mut wt = DVector::from_element(n_obs + extra, 1.0);
    wt.rows_mut(n_obs, extra).fill((p + 1) as f64 / extra as f64);
    (x, y, wt)
}

/// Fills the missing entries of a binary `target`: fit a logistic model on
/// the observed rows plus the [`augment`] pseudo-observations, draw
/// coefficients from `N(β̂, I(β̂)⁻¹)`, and impute Bernoulli draws at the
/// drawn-coefficient probabilities.
pub fn impute_logreg<R: Rng + ?Sized>(
    target: &[f64],
    observed: &[bool],
    predictors: &[&[f64]],
    rng: &mut R,
) -> Result<Vec<f64>, ImputeError> {
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
    let ones = obs_rows.iter().filter(|&&r| target[r] == 1.0).count();
    if ones == 0 || ones == obs_rows.len() {
        return Err(ImputeError::DegenerateOutcome {
            column: Default::default(),
        });
    }

    let x_obs = design(predictors, &obs_rows);
    let y_obs = DVector::from_iterator(obs_rows.len(), obs_rows.iter().map(|&r| target[r]));
    let (x_aug, y_aug, wt) = augment(predictors, x_obs, y_obs);
    let fit = fit_logistic_stabilized_weighted(&x_aug, &y_aug, &wt)?;
    let factor = jittered_cholesky(&fit.cov, 3).ok_or(ImputeError::FitFailed {
        reason: "coefficient covariance not positive definite",
    })?;
    let draw = &fit.coef + factor.l() * standard_normal_vector(fit.coef.len(), rng);
    let x_mis = design(predictors, &mis_rows);
    let eta = x_mis * draw;
    for (m, &row) in mis_rows.iter().enumerate() {
        let p = logistic(eta[m]);
        filled[row] = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
    }
    Ok(filled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn intercept_only_matches_frequency() {
        // 3 of 10 ones: MLE intercept = logit(0.3).
        let x = DMatrix::from_element(10, 1, 1.0);
        let y = DVector::from_iterator(10, (0..10).map(|i| if i < 3 { 1.0 } else { 0.0 }));
        let fit = fit_logistic(&x, &y, 0.0).unwrap();
        assert!(fit.converged);
        assert!((logistic(fit.coef[0]) - 0.3).abs() < 1e-10);
        // Var(intercept) = 1/(n p (1-p))
        assert!((fit.cov[(0, 0)] - 1.0 / (10.0 * 0.21)).abs() < 1e-8);
    }

    #[test]
    fn separated_data_gets_finite_fit() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let x = design(&[&xs], &(0..10).collect::<Vec<_>>());
        let y = DVector::from_iterator(10, (0..10).map(|i| if i >= 5 { 1.0 } else { 0.0 }));
        let fit = fit_logistic_stabilized(&x, &y).unwrap();
        assert!(fit.ridge > 0.0);
        assert!(fit.coef.iter().all(|c| c.is_finite()));
        let probs: Vec<f64> = (x * &fit.coef).iter().map(|&e| logistic(e)).collect();
        assert!(probs.iter().all(|p| p.is_finite()));
        assert!(probs[0] < 0.5 && probs[9] > 0.5);
    }

    #[test]
    fn imputations_are_binary_and_preserve_observed() {
        let n = 40;
        let pred: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).cos()).collect();
        let observed: Vec<bool> = (0..n).map(|i| i % 4 != 1).collect();
        let target: Vec<f64> = (0..n)
            .map(|i| {
                if !observed[i] {
                    f64::NAN
                } else if (i * 7) % 5 < 2 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let mut rng = stream(9, &[]);
        let out = impute_logreg(&target, &observed, &[&pred], &mut rng).unwrap();
        for i in 0..n {
            assert!(out[i] == 0.0 || out[i] == 1.0);
            if observed[i] {
                assert_eq!(out[i], target[i]);
            }
        }
    }

    #[test]
    fn augmentation_rows_and_weights() {
        let a = [0.0, 1.0, 2.0, 3.0];
        let b = [5.0, 5.0, 5.0, 5.0];
        let x = design(&[&a, &b], &[0, 1]);
        let y = DVector::from_column_slice(&[0.0, 1.0]);
        let (xa, ya, wt) = augment(&[&a, &b], x, y);
        assert_eq!(xa.nrows(), 2 + 8);
        assert!((wt.sum() - (2.0 + 3.0)).abs() < 1e-12);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((xa[(2, 1)] - (1.5 + 0.5 * sd)).abs() < 1e-12);
        assert!((xa[(3, 1)] - (1.5 - 0.5 * sd)).abs() < 1e-12);
        assert_eq!(xa[(2, 2)], 5.0);
        assert_eq!(xa[(6, 1)], 1.5);
        assert_eq!(ya.as_slice()[2..], [0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn separated_observed_rows_still_impute() {
        let n = 30;
        let pred: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let observed: Vec<bool> = (0..n).map(|i| i % 3 != 0).collect();
        let target: Vec<f64> = (0..n)
            .map(|i| {
                if !observed[i] {
                    f64::NAN
                } else if i >= 15 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let mut rng = stream(4, &[]);
        let out = impute_logreg(&target, &observed, &[&pred], &mut rng).unwrap();
        assert!(out.iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn single_class_is_degenerate() {
        let target = [1.0, 1.0, f64::NAN];
        let observed = [true, true, false];
        let mut rng = stream(0, &[]);
        assert!(matches!(
            impute_logreg(&target, &observed, &[], &mut rng),
            Err(ImputeError::DegenerateOutcome { .. })
        ));
    }
}
