//! Delimited-text datasets described by a manifest.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rocmi_core::mi::{Column, ColumnKind, ColumnRole, StudyDataset};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecRole {
    Biomarker,
    Disease,
    Covariate,
    Ignore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecKind {
    Continuous,
    Binary,
}

impl From<SpecKind> for ColumnKind {
    fn from(k: SpecKind) -> Self {
        match k {
            SpecKind::Continuous => ColumnKind::Continuous,
            SpecKind::Binary => ColumnKind::Binary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    pub role: SpecRole,
    #[serde(default = "default_kind")]
    pub kind: SpecKind,
    /// Cell text that marks a missing value (after trimming).
    #[serde(default)]
    pub missing_token: String,
}

fn default_kind() -> SpecKind {
    SpecKind::Continuous
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub path: PathBuf,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default = "default_true")]
    pub has_header: bool,
    pub columns: Vec<ColumnSpec>,
}

fn default_delimiter() -> char {
    ','
}

fn default_true() -> bool {
    true
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                bail!("duplicate column name {:?} in manifest", c.name);
            }
        }
        let count = |role| self.columns.iter().filter(|c| c.role == role).count();
        if count(SpecRole::Biomarker) != 1 || count(SpecRole::Disease) != 1 {
            bail!("manifest needs exactly one biomarker and one disease column");
        }
        if let Some(d) = self.columns.iter().find(|c| c.role == SpecRole::Disease) {
            if d.kind != SpecKind::Binary {
                bail!("disease column {:?} must be binary", d.name);
            }
        }
        if !self.delimiter.is_ascii() {
            bail!("delimiter must be a single ASCII character");
        }
        Ok(())
    }

    /// Resolves relative paths against `base`.
    pub fn relative_to(mut self, base: &Path) -> Self {
        if self.path.is_relative() {
            self.path = base.join(&self.path);
        }
        self
    }
}

/// Loads the dataset named by `manifest`.
pub fn load_dataset(manifest: &DatasetManifest) -> Result<StudyDataset> {
    let file = std::fs::File::open(&manifest.path).with_context(|| format!("opening {}", manifest.path.display()))?;
    read_dataset(file, manifest).with_context(|| format!("reading {}", manifest.path.display()))
}

/// Parses delimited text according to `manifest` (its `path` is ignored).
pub fn read_dataset<R: Read>(reader: R, manifest: &DatasetManifest) -> Result<StudyDataset> {
    manifest.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(manifest.delimiter as u8)
        .has_headers(manifest.has_header)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let positions: Vec<usize> = if manifest.has_header {
        let header = rdr.headers()?.clone();
        manifest
            .columns
            .iter()
            .map(|spec| {
                header
                    .iter()
                    .position(|h| h == spec.name)
                    .with_context(|| format!("column {:?} not found in header", spec.name))
            })
            .collect::<Result<_>>()?
    } else {
        (0..manifest.columns.len()).collect()
    };

    let mut cells: Vec<Vec<Option<f64>>> = vec![Vec::new(); manifest.columns.len()];
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let line = row + 1 + usize::from(manifest.has_header);
        for (k, spec) in manifest.columns.iter().enumerate() {
            if spec.role == SpecRole::Ignore {
                continue;
            }
            let text = record
                .get(positions[k])
                .with_context(|| format!("line {line}: missing field for column {:?}", spec.name))?;
            let value = if text == spec.missing_token {
                None
            } else {
                let v: f64 = text
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .with_context(|| format!("line {line}, column {:?}: cannot parse {text:?}", spec.name))?;
                if spec.kind == SpecKind::Binary && v != 0.0 && v != 1.0 {
                    bail!(
                        "line {line}, column {:?}: binary value expected, got {text:?}",
                        spec.name
                    );
                }
                Some(v)
            };
            cells[k].push(value);
        }
    }

    let columns = manifest
        .columns
        .iter()
        .zip(cells)
        .filter_map(|(spec, entries)| {
            let role = match spec.role {
                SpecRole::Biomarker => ColumnRole::Biomarker,
                SpecRole::Disease => ColumnRole::Disease,
                SpecRole::Covariate => ColumnRole::Covariate,
                SpecRole::Ignore => return None,
            };
            Some(Column::new(spec.name.clone(), role, spec.kind.into(), entries))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StudyDataset::new(columns)?)
}

/// Manifest that reads back a file written by [`write_dataset`].
pub fn canonical_manifest(data: &StudyDataset, path: impl Into<PathBuf>) -> DatasetManifest {
    DatasetManifest {
        path: path.into(),
        delimiter: ',',
        has_header: true,
        columns: data
            .columns()
            .iter()
            .map(|c| ColumnSpec {
                name: c.name.clone(),
                role: match c.role {
                    ColumnRole::Biomarker => SpecRole::Biomarker,
                    ColumnRole::Disease => SpecRole::Disease,
                    ColumnRole::Covariate => SpecRole::Covariate,
                },
                kind: match c.kind {
                    ColumnKind::Continuous => SpecKind::Continuous,
                    ColumnKind::Binary => SpecKind::Binary,
                },
                missing_token: String::new(),
            })
            .collect(),
    }
}

/// Canonical CSV: header of column names, shortest round-trip decimal
/// values, empty cells for missing entries.
pub fn write_dataset<W: Write>(data: &StudyDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(data.columns().iter().map(|c| c.name.as_str()))?;
    for r in 0..data.n_rows() {
        w.write_record(
            data.columns()
                .iter()
                .map(|c| c.get(r).map(|v| v.to_string()).unwrap_or_default()),
        )?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnSummary {
    Continuous {
        name: String,
        n: usize,
        min: f64,
        q1: f64,
        median: f64,
        mean: f64,
        q3: f64,
        max: f64,
        missing: usize,
    },
    Binary {
        name: String,
        ones: usize,
        zeros: usize,
        missing: usize,
    },
}

impl ColumnSummary {
    pub fn missing(&self) -> usize {
        match self {
            ColumnSummary::Continuous { missing, .. } | ColumnSummary::Binary { missing, .. } => *missing,
        }
    }
}

/// Type-7 quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn describe(data: &StudyDataset) -> Vec<ColumnSummary> {
    data.columns()
        .iter()
        .map(|c| {
            let missing = c.missing_count();
            match c.kind {
                ColumnKind::Binary => {
                    let ones = c.observed_values().filter(|&v| v == 1.0).count();
                    ColumnSummary::Binary {
                        name: c.name.clone(),
                        ones,
                        zeros: c.observed_count() - ones,
                        missing,
                    }
                }
                ColumnKind::Continuous => {
                    let mut v: Vec<f64> = c.observed_values().collect();
                    v.sort_by(f64::total_cmp);
                    let n = v.len();
                    let mean = if n == 0 {
                        f64::NAN
                    } else {
                        v.iter().sum::<f64>() / n as f64
                    };
                    ColumnSummary::Continuous {
                        name: c.name.clone(),
                        n,
                        min: v.first().copied().unwrap_or(f64::NAN),
                        q1: quantile_sorted(&v, 0.25),
                        median: quantile_sorted(&v, 0.5),
                        mean,
                        q3: quantile_sorted(&v, 0.75),
                        max: v.last().copied().unwrap_or(f64::NAN),
                        missing,
                    }
                }
            }
        })
        .collect()
}

/// Table with the layout `variable, type, distribution, # missing`.
pub struct DescribeTable<'a> {
    pub rows: &'a [ColumnSummary],
    pub n_rows: usize,
}

impl fmt::Display for DescribeTable<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pct = |k: usize| 100.0 * k as f64 / self.n_rows.max(1) as f64;
        writeln!(
            f,
            "{:<14} {:<10} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>14}",
            "variable", "type", "min", "Q1", "median", "mean", "Q3", "max", "# missing"
        )?;
        for row in self.rows {
            match row {
                ColumnSummary::Continuous {
                    name,
                    min,
                    q1,
                    median,
                    mean,
                    q3,
                    max,
                    missing,
                    ..
                } => writeln!(
                    f,
                    "{:<14} {:<10} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>6} ({:.1}%)",
                    name,
                    "continuous",
                    min,
                    q1,
                    median,
                    mean,
                    q3,
                    max,
                    missing,
                    pct(*missing)
                )?,
                ColumnSummary::Binary {
                    name,
                    ones,
                    zeros,
                    missing,
                } => writeln!(
                    f,
                    "{:<14} {:<10} 1: {} ({:.1}%), 0: {} ({:.1}%) {:>25} ({:.1}%)",
                    name,
                    "binary",
                    ones,
                    pct(*ones),
                    zeros,
                    pct(*zeros),
                    missing,
                    pct(*missing)
                )?,
            }
        }
        Ok(())
    }
}
