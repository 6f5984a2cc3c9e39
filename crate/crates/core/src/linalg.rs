//! Small dense helpers on top of nalgebra shared by the imputation models.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Pivot ratio below which a Gram matrix is treated as ill-conditioned.
const CONDITION_FLOOR: f64 = 1e-12;

/// Ridge added to normal equations: `1e-5 · trace(A) / p`.
pub(crate) fn ridge_lambda(gram: &DMatrix<f64>) -> f64 {
    let p = gram.nrows().max(1) as f64;
    1e-5 * gram.trace() / p
}

pub(crate) fn add_diagonal(m: &mut DMatrix<f64>, value: f64) {
    for i in 0..m.nrows() {
        m[(i, i)] += value;
    }
}

fn well_conditioned(chol: &Cholesky<f64, Dyn>) -> bool {
    let l = chol.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..l.nrows() {
        let d = l[(i, i)] * l[(i, i)];
        lo = lo.min(d);
        hi = hi.max(d);
    }
    hi > 0.0 && lo / hi > CONDITION_FLOOR
}

/// Cholesky of a Gram matrix, falling back to the ridge-stabilized matrix
/// when the factorization fails or is badly conditioned. Returns the factor
/// and the ridge that was applied (0 when none).
pub(crate) fn stabilized_cholesky(gram: &DMatrix<f64>) -> Option<(Cholesky<f64, Dyn>, f64)> {
    if let Some(chol) = Cholesky::new(gram.clone()) {
        if well_conditioned(&chol) {
            return Some((chol, 0.0));
        }
    }
    let mut lambda = ridge_lambda(gram).max(f64::MIN_POSITIVE);
    for _ in 0..8 {
        let mut m = gram.clone();
        add_diagonal(&mut m, lambda);
        if let Some(chol) = Cholesky::new(m) {
            return Some((chol, lambda));
        }
        lambda *= 10.0;
    }
    None
}

/// Cholesky with escalating diagonal jitter, at most `tries` extra attempts.
pub(crate) fn jittered_cholesky(m: &DMatrix<f64>, tries: usize) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let scale = (m.trace().abs() / m.nrows().max(1) as f64).max(1e-12);
    let mut jitter = 1e-8 * scale;
    for _ in 0..tries {
        let mut j = m.clone();
        add_diagonal(&mut j, jitter);
        if let Some(c) = Cholesky::new(j) {
            return Some(c);
        }
        jitter *= 100.0;
    }
    None
}

pub(crate) fn standard_normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Design matrix with a leading intercept column, restricted to `rows`.
pub(crate) fn design(predictors: &[&[f64]], rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), predictors.len() + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            predictors[c - 1][rows[r]]
        }
    })
}
