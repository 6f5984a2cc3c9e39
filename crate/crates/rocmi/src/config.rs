//! Run configuration (TOML). Every section and key is optional; unknown keys
//! are rejected. Defaults reproduce the published simulation grid.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rocmi_core::mi::{ImputationSpec, OmegaScope, Technique};
use rocmi_core::sim::{MissingTriple, DEFAULT_TRIPLES, GRID_SAMPLE_SIZES, GRID_THETAS};
use rocmi_core::study::{AnalysisArm, StudySettings};
use rocmi_core::VarianceMethod;
use serde::{Deserialize, Serialize};

use crate::data_io::DatasetManifest;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub grid: GridSection,
    pub imputation: ImputationSection,
    pub analysis: AnalysisSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetManifest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub replicates: usize,
    /// 0 uses every available core.
    pub threads: usize,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Beta1Source {
    /// The published values.
    Published,
    /// Re-derived by bisection at run time.
    Calibrate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripleConfig {
    pub rho: f64,
    pub gamma: f64,
    pub q1: f64,
    pub q2: f64,
}

impl From<MissingTriple> for TripleConfig {
    fn from(t: MissingTriple) -> Self {
        Self {
            rho: t.rho,
            gamma: t.gamma,
            q1: t.q1,
            q2: t.q2,
        }
    }
}

impl From<TripleConfig> for MissingTriple {
    fn from(t: TripleConfig) -> Self {
        Self {
            rho: t.rho,
            gamma: t.gamma,
            q1: t.q1,
            q2: t.q2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub thetas: Vec<f64>,
    /// Prevalence targets; 0.5 and 0.7 map to the published intercepts.
    pub phis: Vec<f64>,
    pub sample_sizes: Vec<usize>,
    pub triples: Vec<TripleConfig>,
    pub beta1: Beta1Source,
    /// Draws used for threshold and β₁ calibration.
    pub calibration_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImputationSection {
    pub m: usize,
    pub iterations: usize,
    pub donor_count: usize,
    pub burn_in: usize,
    pub adaptive_rounding: bool,
    /// "all" or "imputed": entries averaged into ω̄ for adaptive rounding.
    pub omega_scope: String,
    pub max_redraws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub arms: Vec<String>,
    pub methods: Vec<String>,
    pub level: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            replicates: 1_000,
            threads: 0,
            out: PathBuf::from("rocmi-out"),
        }
    }
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            thetas: GRID_THETAS.to_vec(),
            phis: vec![0.5, 0.7],
            sample_sizes: GRID_SAMPLE_SIZES.to_vec(),
            triples: DEFAULT_TRIPLES.iter().map(|&t| t.into()).collect(),
            beta1: Beta1Source::Published,
            calibration_size: rocmi_core::sim::CALIBRATION_SIZE,
        }
    }
}

impl Default for ImputationSection {
    fn default() -> Self {
        Self {
            m: 10,
            iterations: 5,
            donor_count: ImputationSpec::DEFAULT_DONORS,
            burn_in: ImputationSpec::DEFAULT_BURN_IN,
            adaptive_rounding: true,
            omega_scope: "all".into(),
            max_redraws: 10,
        }
    }
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            arms: AnalysisArm::ALL.iter().map(|a| a.label().to_string()).collect(),
            methods: VarianceMethod::ALL.iter().map(|m| m.label().to_string()).collect(),
            level: 0.95,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; a relative dataset path is taken relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(ds) = cfg.dataset.take() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.dataset = Some(ds.relative_to(base));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.thetas.iter().any(|&t| !(t > 0.5 && t < 1.0)) {
            bail!("grid.thetas must lie in (0.5, 1)");
        }
        for &phi in &g.phis {
            if rocmi_core::sim::published_alpha0(phi).is_none() {
                bail!("grid.phis: only 0.5 and 0.7 have intercepts, got {phi}");
            }
        }
        if g.sample_sizes.iter().any(|&n| n < 4) {
            bail!("grid.sample_sizes must be at least 4");
        }
        for t in &g.triples {
            if !(0.0..=1.0).contains(&t.gamma) || !(t.q1 > 0.0 && t.q1 < 1.0) || !(t.q2 > 0.0 && t.q2 < 1.0) {
                bail!("grid.triples: gamma in [0, 1], q1 and q2 in (0, 1) required");
            }
        }
        if g.calibration_size < 1_000 {
            bail!("grid.calibration_size must be at least 1000");
        }
        if g.beta1 == Beta1Source::Published {
            for &phi in &g.phis {
                for &theta in &g.thetas {
                    if rocmi_core::sim::published_beta1(phi, theta).is_none() {
                        bail!("no published beta1 for phi={phi}, theta={theta}; set grid.beta1 = \"calibrate\"");
                    }
                }
            }
        }
        self.imputation_spec(Technique::Pmm).validate()?;
        self.arms()?;
        self.methods()?;
        if !(self.analysis.level > 0.0 && self.analysis.level < 1.0) {
            bail!("analysis.level must lie in (0, 1)");
        }
        self.omega_scope()?;
        Ok(())
    }

    fn omega_scope(&self) -> Result<OmegaScope> {
        match self.imputation.omega_scope.as_str() {
            "all" => Ok(OmegaScope::AllEntries),
            "imputed" => Ok(OmegaScope::ImputedOnly),
            other => bail!("imputation.omega_scope must be \"all\" or \"imputed\", got {other:?}"),
        }
    }

    pub fn arms(&self) -> Result<Vec<AnalysisArm>> {
        self.analysis
            .arms
            .iter()
            .map(|a| a.parse().map_err(anyhow::Error::from))
            .collect()
    }

    pub fn methods(&self) -> Result<Vec<VarianceMethod>> {
        self.analysis
            .methods
            .iter()
            .map(|a| a.parse().map_err(anyhow::Error::from))
            .collect()
    }

    pub fn imputation_spec(&self, technique: Technique) -> ImputationSpec {
        let i = &self.imputation;
        ImputationSpec {
            technique,
            m: i.m,
            iterations: i.iterations,
            donor_count: i.donor_count,
            burn_in: i.burn_in,
            adaptive_rounding: i.adaptive_rounding,
            omega_scope: self.omega_scope().unwrap_or_default(),
            seed: self.run.seed,
        }
    }

    pub fn study_settings(&self) -> Result<StudySettings> {
        Ok(StudySettings {
            arms: self.arms()?,
            methods: self.methods()?,
            imputation: self.imputation_spec(Technique::Pmm),
            level: self.analysis.level,
            max_redraws: self.imputation.max_redraws,
        })
    }
}
