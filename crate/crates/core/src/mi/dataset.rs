use alloc::string::String;
use alloc::vec::Vec;

use crate::roc::{GroupedScores, RocError};

use super::ImputeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColumnRole {
    Biomarker,
    Disease,
    Covariate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColumnKind {
    Continuous,
    Binary,
}

/// One variable with a per-entry observed flag. Missing slots hold NaN.
#[derive(Debug, Clone)]
pub struct Column {
    pub name: String,
    pub role: ColumnRole,
    pub kind: ColumnKind,
    values: Vec<f64>,
    observed: Vec<bool>,
}

impl Column {
    /// Builds a column from optional entries; `None` is missing.
    pub fn new(
        name: impl Into<String>,
        role: ColumnRole,
        kind: ColumnKind,
        entries: impl IntoIterator<Item = Option<f64>>,
    ) -> Result<Self, ImputeError> {
        let mut values = Vec::new();
        let mut observed = Vec::new();
        for e in entries {
            values.push(e.unwrap_or(f64::NAN));
            observed.push(e.is_some());
        }
        let col = Self {
            name: name.into(),
            role,
            kind,
            values,
            observed,
        };
        col.validate()?;
        Ok(col)
    }

    /// A fully observed column.
    pub fn complete(
        name: impl Into<String>,
        role: ColumnRole,
        kind: ColumnKind,
        values: Vec<f64>,
    ) -> Result<Self, ImputeError> {
        let observed = alloc::vec![true; values.len()];
        let col = Self {
            name: name.into(),
            role,
            kind,
            values,
            observed,
        };
        col.validate()?;
        Ok(col)
    }

    fn validate(&self) -> Result<(), ImputeError> {
        for (row, (&v, &obs)) in self.values.iter().zip(&self.observed).enumerate() {
            if !obs {
                continue;
            }
            if !v.is_finite() {
                return Err(ImputeError::InvalidValue {
                    column: self.name.clone(),
                    row,
                });
            }
            if self.kind == ColumnKind::Binary && v != 0.0 && v != 1.0 {
                return Err(ImputeError::InvalidValue {
                    column: self.name.clone(),
                    row,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, row: usize) -> Option<f64> {
        self.observed[row].then(|| self.values[row])
    }

    /// Raw storage; missing entries are NaN.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn missing_count(&self) -> usize {
        self.observed.iter().filter(|o| !**o).count()
    }

    pub fn observed_count(&self) -> usize {
        self.len() - self.missing_count()
    }

    pub fn is_complete(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }

    pub fn observed_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .iter()
            .zip(&self.observed)
            .filter_map(|(&v, &o)| o.then_some(v))
    }

    /// Copy with every entry marked observed and missing slots taken from
    /// `fill`.
    pub(crate) fn completed_with(&self, fill: &[f64]) -> Self {
        let values = self
            .values
            .iter()
            .zip(&self.observed)
            .zip(fill)
            .map(|((&v, &o), &f)| if o { v } else { f })
            .collect();
        Self {
            name: self.name.clone(),
            role: self.role,
            kind: self.kind,
            values,
            observed: alloc::vec![true; self.len()],
        }
    }

    fn rows(&self, keep: &[bool]) -> Self {
        let pick = |src: &[f64]| -> Vec<f64> { src.iter().zip(keep).filter_map(|(&v, &k)| k.then_some(v)).collect() };
        Self {
            name: self.name.clone(),
            role: self.role,
            kind: self.kind,
            values: pick(&self.values),
            observed: self
                .observed
                .iter()
                .zip(keep)
                .filter_map(|(&v, &k)| k.then_some(v))
                .collect(),
        }
    }
}

impl PartialEq for Column {
    /// Missing slots compare equal regardless of their placeholder value.
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.role == other.role
            && self.kind == other.kind
            && self.observed == other.observed
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.observed)
                .all(|((a, b), &o)| !o || a.to_bits() == b.to_bits())
    }
}

/// Rectangular data with exactly one biomarker and one binary disease column.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyDataset {
    columns: Vec<Column>,
    biomarker: usize,
    disease: usize,
}

impl StudyDataset {
    pub fn new(columns: Vec<Column>) -> Result<Self, ImputeError> {
        let find = |role| {
            let mut idx = columns.iter().enumerate().filter(|(_, c)| c.role == role);
            match (idx.next(), idx.next()) {
                (Some((i, _)), None) => Ok(i),
                _ => Err(ImputeError::Roles),
            }
        };
        let biomarker = find(ColumnRole::Biomarker)?;
        let disease = find(ColumnRole::Disease)?;
        if columns[disease].kind != ColumnKind::Binary {
            return Err(ImputeError::Roles);
        }
        let n = columns[0].len();
        if let Some(c) = columns.iter().find(|c| c.len() != n) {
            return Err(ImputeError::RaggedColumns { column: c.name.clone() });
        }
        Ok(Self {
            columns,
            biomarker,
            disease,
        })
    }

    /// Simulation layout: `T`, `D` (masked where `missing`), then `Z1..Zp`.
    pub fn from_simulation(t: &[f64], d: &[bool], missing: &[bool], z: &[Vec<f64>]) -> Result<Self, ImputeError> {
        let mut columns = Vec::with_capacity(2 + z.len());
        columns.push(Column::complete(
            "T",
            ColumnRole::Biomarker,
            ColumnKind::Continuous,
            t.to_vec(),
        )?);
        columns.push(Column::new(
            "D",
            ColumnRole::Disease,
            ColumnKind::Binary,
            d.iter()
                .zip(missing)
                .map(|(&d, &m)| (!m).then_some(if d { 1.0 } else { 0.0 })),
        )?);
        for (k, zk) in z.iter().enumerate() {
            columns.push(Column::complete(
                alloc::format!("Z{}", k + 1),
                ColumnRole::Covariate,
                ColumnKind::Continuous,
                zk.clone(),
            )?);
        }
        Self::new(columns)
    }

    pub fn n_rows(&self) -> usize {
        self.columns[0].len()
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, idx: usize) -> &Column {
        &self.columns[idx]
    }

    pub fn biomarker_index(&self) -> usize {
        self.biomarker
    }

    pub fn disease_index(&self) -> usize {
        self.disease
    }

    pub fn biomarker(&self) -> &Column {
        &self.columns[self.biomarker]
    }

    pub fn disease(&self) -> &Column {
        &self.columns[self.disease]
    }

    pub fn is_complete(&self) -> bool {
        self.columns.iter().all(Column::is_complete)
    }

    pub fn missing_count(&self) -> usize {
        self.columns.iter().map(Column::missing_count).sum()
    }

    /// Indices of columns with at least one missing entry, ascending.
    pub fn incomplete_columns(&self) -> Vec<usize> {
        (0..self.columns.len())
            .filter(|&c| !self.columns[c].is_complete())
            .collect()
    }

    /// Rows where `keep` is true.
    pub fn subset_rows(&self, keep: &[bool]) -> Self {
        Self {
            columns: self.columns.iter().map(|c| c.rows(keep)).collect(),
            biomarker: self.biomarker,
            disease: self.disease,
        }
    }

    /// Rows with both the biomarker and the disease status observed.
    pub fn complete_cases(&self) -> Self {
        let t = self.biomarker().observed();
        let d = self.disease().observed();
        let keep: Vec<bool> = t.iter().zip(d).map(|(&a, &b)| a && b).collect();
        self.subset_rows(&keep)
    }

    /// Biomarker scores grouped by disease status over complete cases.
    pub fn grouped_scores(&self) -> Result<GroupedScores, RocError> {
        let t = self.biomarker();
        let d = self.disease();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for row in 0..self.n_rows() {
            if let (Some(tv), Some(dv)) = (t.get(row), d.get(row)) {
                if dv == 1.0 {
                    y.push(tv);
                } else {
                    x.push(tv);
                }
            }
        }
        GroupedScores::new(x, y)
    }

    /// Replaces column `idx` with its completion from `fill`.
    pub(crate) fn complete_column(&mut self, idx: usize, fill: &[f64]) {
        self.columns[idx] = self.columns[idx].completed_with(fill);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn small() -> StudyDataset {
        StudyDataset::from_simulation(
            &[0.1, 0.5, 0.9],
            &[false, true, true],
            &[false, true, false],
            &[vec![1.0, 2.0, 3.0]],
        )
        .unwrap()
    }

    #[test]
    fn simulation_layout() {
        let ds = small();
        assert_eq!(ds.n_rows(), 3);
        assert_eq!(ds.disease().missing_count(), 1);
        assert_eq!(ds.disease().get(1), None);
        assert_eq!(ds.incomplete_columns(), vec![1]);
        assert_eq!(ds.column(2).name, "Z1");
    }

    #[test]
    fn binary_values_validated() {
        let err = Column::complete("D", ColumnRole::Disease, ColumnKind::Binary, vec![0.0, 2.0]);
        assert!(matches!(err, Err(ImputeError::InvalidValue { row: 1, .. })));
    }

    #[test]
    fn roles_validated() {
        let t = Column::complete("T", ColumnRole::Biomarker, ColumnKind::Continuous, vec![1.0]).unwrap();
        assert_eq!(StudyDataset::new(vec![t]), Err(ImputeError::Roles));
    }

    #[test]
    fn complete_cases_drop_unverified() {
        let cc = small().complete_cases();
        assert_eq!(cc.n_rows(), 2);
        let g = cc.grouped_scores().unwrap();
        assert_eq!(g.x(), &[0.1]);
        assert_eq!(g.y(), &[0.9]);
    }

    #[test]
    fn equality_ignores_missing_placeholders() {
        let a = small();
        let mut b = small();
        b.columns[1].values[1] = 42.0;
        assert_eq!(a, b);
    }
}
