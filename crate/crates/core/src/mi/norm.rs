//! Multivariate-normal imputation: EM starting values, data augmentation
//! under the Jeffreys prior, and adaptive rounding of binary columns.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
// Float supplies libm-backed math when std is absent.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::linalg::{jittered_cholesky, standard_normal_vector, symmetrize};
use crate::quantile::normal_quantile;

use super::dataset::{ColumnKind, StudyDataset};
use super::{ImputeError, OmegaScope};

/// EM stops when no parameter moves by more than this.
pub const EM_TOL: f64 = 1e-6;
pub const EM_MAX_ITER: usize = 500;
const DRAW_RETRIES: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct MvnParams {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Row-major view of a dataset with an observed mask, grouped by pattern.
#[derive(Debug, Clone)]
struct MaskedMatrix {
    n: usize,
    p: usize,
    values: Vec<f64>,
    observed: Vec<bool>,
    /// Missingness pattern (true = missing) to the rows that share it.
    patterns: BTreeMap<Vec<bool>, Vec<usize>>,
}

impl MaskedMatrix {
    fn from_dataset(data: &StudyDataset) -> Self {
        let n = data.n_rows();
        let p = data.n_columns();
        let mut values = alloc::vec![0.0; n * p];
        let mut observed = alloc::vec![false; n * p];
        for (c, col) in data.columns().iter().enumerate() {
            for r in 0..n {
                observed[r * p + c] = col.observed()[r];
                values[r * p + c] = if col.observed()[r] { col.values()[r] } else { 0.0 };
            }
        }
        let mut patterns: BTreeMap<Vec<bool>, Vec<usize>> = BTreeMap::new();
        for r in 0..n {
            let key: Vec<bool> = (0..p).map(|c| !observed[r * p + c]).collect();
            patterns.entry(key).or_default().push(r);
        }
        Self {
            n,
            p,
            values,
            observed,
            patterns,
        }
    }

    #[inline]
    fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.p + c]
    }

    #[inline]
    fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.p + c] = v;
    }
}

/// Regression of the missing block on the observed block for one pattern.
struct Conditional {
    miss: Vec<usize>,
    obs: Vec<usize>,
    /// `Σ_MO Σ_OO⁻¹`
    coef: DMatrix<f64>,
    /// `Σ_MM − Σ_MO Σ_OO⁻¹ Σ_OM`
    resid_cov: DMatrix<f64>,
}

fn conditional(params: &MvnParams, pattern: &[bool]) -> Result<Conditional, ImputeError> {
    let miss: Vec<usize> = (0..pattern.len()).filter(|&c| pattern[c]).collect();
    let obs: Vec<usize> = (0..pattern.len()).filter(|&c| !pattern[c]).collect();
    let sub = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| params.cov[(rows[i], cols[j])])
    };
    let s_mm = sub(&miss, &miss);
    if obs.is_empty() {
        return Ok(Conditional {
            coef: DMatrix::zeros(miss.len(), 0),
            resid_cov: s_mm,
            miss,
            obs,
        });
    }
    let s_oo = sub(&obs, &obs);
    let s_om = sub(&obs, &miss);
    let chol = jittered_cholesky(&s_oo, DRAW_RETRIES).ok_or(ImputeError::NotPositiveDefinite)?;
    // Σ_OO⁻¹ Σ_OM, transposed
    let coef = chol.solve(&s_om).transpose();
    let mut resid_cov = s_mm - &coef * &s_om;
    symmetrize(&mut resid_cov);
    Ok(Conditional {
        miss,
        obs,
        coef,
        resid_cov,
    })
}

impl Conditional {
    fn mean(&self, params: &MvnParams, data: &MaskedMatrix, row: usize) -> DVector<f64> {
        let mut m = DVector::from_iterator(self.miss.len(), self.miss.iter().map(|&c| params.mean[c]));
        if !self.obs.is_empty() {
            let dev = DVector::from_iterator(
                self.obs.len(),
                self.obs.iter().map(|&c| data.get(row, c) - params.mean[c]),
            );
            m += &self.coef * dev;
        }
        m
    }
}

fn max_abs_diff(a: &MvnParams, b: &MvnParams) -> f64 {
    let dm = (&a.mean - &b.mean).amax();
    let dc = (&a.cov - &b.cov).amax();
    dm.max(dc)
}

fn ensure_pd(cov: &mut DMatrix<f64>) -> Result<(), ImputeError> {
    if nalgebra::Cholesky::new(cov.clone()).is_some() {
        return Ok(());
    }
    let scale = (cov.trace().abs() / cov.nrows().max(1) as f64).max(1e-12);
    let mut jitter = 1e-8 * scale;
    for _ in 0..8 {
        let mut j = cov.clone();
        crate::linalg::add_diagonal(&mut j, jitter);
        if nalgebra::Cholesky::new(j.clone()).is_some() {
            *cov = j;
            return Ok(());
        }
        jitter *= 10.0;
    }
    Err(ImputeError::NotPositiveDefinite)
}

/// Maximum-likelihood mean and covariance of a multivariate normal under an
/// arbitrary missingness pattern (ML covariance, divide by `n`).
pub fn norm_em(data: &StudyDataset) -> Result<MvnParams, ImputeError> {
    for col in data.columns() {
        if col.observed_count() < 2 {
            return Err(ImputeError::NothingToFit {
                column: col.name.clone(),
            });
        }
    }
    let mat = MaskedMatrix::from_dataset(data);
    let (n, p) = (mat.n, mat.p);

    // Start from observed-case means and variances.
    let mut mean = DVector::zeros(p);
    let mut cov = DMatrix::zeros(p, p);
    for c in 0..p {
        let vals: Vec<f64> = (0..n)
            .filter(|&r| mat.observed[r * p + c])
            .map(|r| mat.get(r, c))
            .collect();
        let mu = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / vals.len() as f64;
        mean[c] = mu;
        cov[(c, c)] = var;
    }
    let mut params = MvnParams { mean, cov };
    ensure_pd(&mut params.cov)?;

    for _ in 0..EM_MAX_ITER {
        let mut sum = DVector::<f64>::zeros(p);
        let mut cross = DMatrix::<f64>::zeros(p, p);
        for (pattern, rows) in &mat.patterns {
            let cond = conditional(&params, pattern)?;
            for &r in rows {
                let mut x = DVector::from_iterator(p, (0..p).map(|c| mat.get(r, c)));
                if !cond.miss.is_empty() {
                    let m = cond.mean(&params, &mat, r);
                    for (k, &c) in cond.miss.iter().enumerate() {
                        x[c] = m[k];
                    }
                    for (a, &ca) in cond.miss.iter().enumerate() {
                        for (b, &cb) in cond.miss.iter().enumerate() {
                            cross[(ca, cb)] += cond.resid_cov[(a, b)];
                        }
                    }
                }
                sum += &x;
                cross += &x * x.transpose();
            }
        }
        let nf = n as f64;
        let mean = sum / nf;
        let mut cov = cross / nf - &mean * mean.transpose();
        symmetrize(&mut cov);
        ensure_pd(&mut cov)?;
        let next = MvnParams { mean, cov };
        let delta = max_abs_diff(&next, &params);
        params = next;
        if delta < EM_TOL {
            break;
        }
    }
    Ok(params)
}

/// Rounding threshold `ω̄ − √(ω̄(1−ω̄))·Φ⁻¹(ω̄)`.
pub fn adaptive_threshold(omega_bar: f64) -> f64 {
    omega_bar - (omega_bar * (1.0 - omega_bar)).sqrt() * normal_quantile(omega_bar)
}

/// Binarizes imputed entries of a 0/1 column at the adaptive threshold.
/// Observed entries are returned unchanged.
pub fn adaptive_round(values: &[f64], observed: &[bool], scope: OmegaScope) -> Vec<f64> {
    const EDGE: f64 = 1e-9;
    let (sum, count) = values
        .iter()
        .zip(observed)
        .filter(|(_, &o)| scope == OmegaScope::AllEntries || !o)
        .fold((0.0, 0usize), |(s, n), (&v, _)| (s + v, n + 1));
    let omega = if count == 0 { 0.5 } else { sum / count as f64 };
    let threshold = adaptive_threshold(omega.clamp(EDGE, 1.0 - EDGE));
    values
        .iter()
        .zip(observed)
        .map(|(&v, &o)| {
            if o {
                v
            } else if v > threshold {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Inverse-Wishart draw `Σ ~ W⁻¹(df, scale)` via the Bartlett decomposition
/// of `W ~ Wishart(df, scale⁻¹)`.
fn inverse_wishart<R: Rng + ?Sized>(df: f64, scale: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>, ImputeError> {
    let p = scale.nrows();
    let scale_chol = jittered_cholesky(scale, DRAW_RETRIES).ok_or(ImputeError::NotPositiveDefinite)?;
    let precision = scale_chol.inverse();
    let l = jittered_cholesky(&precision, DRAW_RETRIES)
        .ok_or(ImputeError::NotPositiveDefinite)?
        .l();
    let mut bartlett = DMatrix::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(df - i as f64).map_err(|_| ImputeError::NotPositiveDefinite)?;
        bartlett[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            bartlett[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let a = l * bartlett;
    let wishart = &a * a.transpose();
    let mut sigma = jittered_cholesky(&wishart, DRAW_RETRIES)
        .ok_or(ImputeError::NotPositiveDefinite)?
        .inverse();
    symmetrize(&mut sigma);
    Ok(sigma)
}

/// Data-augmentation chain for the multivariate normal model.
///
/// One step is an I-step (draw every missing entry from its conditional
/// normal given the row's observed entries) followed by a P-step (draw the
/// mean and covariance from their posterior under the Jeffreys prior:
/// `Σ | Y ~ W⁻¹(n−1, A)`, `μ | Σ, Y ~ N(ȳ, Σ/n)`).
pub struct NormChain<R: Rng> {
    source: StudyDataset,
    mat: MaskedMatrix,
    params: MvnParams,
    burn_in: usize,
    adaptive_rounding: bool,
    scope: OmegaScope,
    emitted: usize,
    rng: R,
}

impl<R: Rng> NormChain<R> {
    pub fn new(
        data: &StudyDataset,
        burn_in: usize,
        adaptive_rounding: bool,
        scope: OmegaScope,
        rng: R,
    ) -> Result<Self, ImputeError> {
        if burn_in == 0 {
            return Err(ImputeError::InvalidSpec("burn_in must be at least 1"));
        }
        let params = norm_em(data)?;
        if data.n_rows() <= data.n_columns() {
            return Err(ImputeError::InvalidSpec("NORM needs more rows than columns"));
        }
        Ok(Self {
            source: data.clone(),
            mat: MaskedMatrix::from_dataset(data),
            params,
            burn_in,
            adaptive_rounding,
            scope,
            emitted: 0,
            rng,
        })
    }

    pub fn params(&self) -> &MvnParams {
        &self.params
    }

    fn i_step(&mut self) -> Result<(), ImputeError> {
        let patterns = core::mem::take(&mut self.mat.patterns);
        let result = self.draw_patterns(&patterns);
        self.mat.patterns = patterns;
        result
    }

    fn draw_patterns(&mut self, patterns: &BTreeMap<Vec<bool>, Vec<usize>>) -> Result<(), ImputeError> {
        for (pattern, rows) in patterns {
            if !pattern.iter().any(|&m| m) {
                continue;
            }
            let cond = conditional(&self.params, pattern)?;
            let factor = jittered_cholesky(&cond.resid_cov, DRAW_RETRIES)
                .ok_or(ImputeError::NotPositiveDefinite)?
                .l();
            // Columns are rows of the data: conditional means plus correlated noise.
            let k = cond.miss.len();
            let mut draws = DMatrix::from_fn(k, rows.len(), |i, _| self.params.mean[cond.miss[i]]);
            if !cond.obs.is_empty() {
                let dev = DMatrix::from_fn(cond.obs.len(), rows.len(), |i, j| {
                    self.mat.get(rows[j], cond.obs[i]) - self.params.mean[cond.obs[i]]
                });
                draws += &cond.coef * dev;
            }
            let rng = &mut self.rng;
            let noise = DMatrix::from_fn(k, rows.len(), |_, _| StandardNormal.sample(rng));
            draws += factor * noise;
            for (j, &r) in rows.iter().enumerate() {
                for (i, &c) in cond.miss.iter().enumerate() {
                    self.mat.set(r, c, draws[(i, j)]);
                }
            }
        }
        Ok(())
    }

    fn p_step(&mut self) -> Result<(), ImputeError> {
        let (n, p) = (self.mat.n, self.mat.p);
        let mut x = DMatrix::from_row_slice(n, p, &self.mat.values);
        let mean = DVector::from_iterator(p, x.column_iter().map(|c| c.sum() / n as f64));
        for (mut col, &m) in x.column_iter_mut().zip(mean.iter()) {
            col.add_scalar_mut(-m);
        }
        let mut scatter = x.tr_mul(&x);
        symmetrize(&mut scatter);
        let sigma = inverse_wishart((n - 1) as f64, &scatter, &mut self.rng)?;
        let factor = jittered_cholesky(&(&sigma / n as f64), DRAW_RETRIES)
            .ok_or(ImputeError::NotPositiveDefinite)?
            .l();
        let mu = mean + factor * standard_normal_vector(p, &mut self.rng);
        self.params = MvnParams { mean: mu, cov: sigma };
        Ok(())
    }

    pub fn step(&mut self) -> Result<(), ImputeError> {
        self.i_step()?;
        self.p_step()
    }

    /// Advances `burn_in` steps and returns the completed dataset from the
    /// last I-step, with binary columns rounded.
    pub fn next_imputation(&mut self) -> Result<StudyDataset, ImputeError> {
        if self.source.is_complete() {
            self.emitted += 1;
            return Ok(self.source.clone());
        }
        for _ in 0..self.burn_in {
            self.step()?;
        }
        self.emitted += 1;
        Ok(self.completed())
    }

    fn completed(&self) -> StudyDataset {
        let mut out = self.source.clone();
        let (n, p) = (self.mat.n, self.mat.p);
        for c in 0..p {
            let col = self.source.column(c);
            if col.is_complete() {
                continue;
            }
            let raw: Vec<f64> = (0..n).map(|r| self.mat.get(r, c)).collect();
            let fill = if col.kind == ColumnKind::Binary {
                if self.adaptive_rounding {
                    adaptive_round(&raw, col.observed(), self.scope)
                } else {
                    raw.iter().map(|&v| if v > 0.5 { 1.0 } else { 0.0 }).collect()
                }
            } else {
                raw
            };
            out.complete_column(c, &fill);
        }
        out
    }

    pub fn emitted(&self) -> usize {
        self.emitted
    }
}

/// `m` completed datasets from one chain: the first after `burn_in` steps,
/// then one every `burn_in` steps.
pub fn norm_da_impute<R: Rng>(
    data: &StudyDataset,
    m: usize,
    burn_in: usize,
    adaptive_rounding: bool,
    scope: OmegaScope,
    rng: R,
) -> Result<Vec<StudyDataset>, ImputeError> {
    if data.is_complete() {
        return Ok(alloc::vec![data.clone(); m]);
    }
    let mut chain = NormChain::new(data, burn_in, adaptive_rounding, scope, rng)?;
    (0..m).map(|_| chain.next_imputation()).collect()
}
