use alloc::vec::Vec;

use rand::Rng;

use crate::rng::StreamRng;

use super::dataset::StudyDataset;
use super::{fit_column, ImputationSpec, ImputeError};

/// Current state of a chained-equation run: every column fully filled,
/// with the original observed mask kept alongside.
#[derive(Debug, Clone)]
pub struct WorkingData {
    source: StudyDataset,
    values: Vec<Vec<f64>>,
}

impl WorkingData {
    /// Fills each missing entry with a uniform draw from its column's
    /// observed values.
    pub fn initial_fill<R: Rng + ?Sized>(data: &StudyDataset, rng: &mut R) -> Self {
        let values = data
            .columns()
            .iter()
            .map(|col| {
                let pool: Vec<f64> = col.observed_values().collect();
                col.values()
                    .iter()
                    .zip(col.observed())
                    .map(|(&v, &o)| {
                        if o || pool.is_empty() {
                            v
                        } else {
                            pool[rng.random_range(0..pool.len())]
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            source: data.clone(),
            values,
        }
    }

    pub fn n_columns(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self, col: usize) -> &[f64] {
        &self.values[col]
    }

    pub fn observed(&self, col: usize) -> &[bool] {
        self.source.column(col).observed()
    }

    pub fn name(&self, col: usize) -> &str {
        &self.source.column(col).name
    }

    pub fn into_dataset(self) -> StudyDataset {
        let mut out = self.source;
        for (c, vals) in self.values.iter().enumerate() {
            if !out.column(c).is_complete() {
                out.complete_column(c, vals);
            }
        }
        out
    }
}

/// One pass over the incomplete columns in ascending index order. Each
/// column is re-imputed from all other columns at their current values, so
/// later columns see the fresh imputations of earlier ones.
pub fn chained_sweep(work: &mut WorkingData, spec: &ImputationSpec, rng: &mut StreamRng) -> Result<(), ImputeError> {
    for c in work.source.incomplete_columns() {
        let method = spec.method_for(work.source.column(c).kind);
        let filled = fit_column(work, c, method, rng)?;
        work.values[c] = filled;
    }
    Ok(())
}
