//! Scenario construction, calibration and parallel execution.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;
use rocmi_core::rng::{derive_seed, stream, tag};
use rocmi_core::sim::{
    calibrate_beta1, calibrate_thresholds, population_auc, population_missing_rate, population_prevalence,
    published_alpha0, published_beta1, GenerativeParams, McEstimate, MissingTriple, MissingnessParams, ScenarioConfig,
};
use rocmi_core::study::{run_replicate, AnalysisArm, ReplicateResult, ScenarioKey, StudySettings};
use rocmi_core::{ConfidenceInterval, VarianceMethod};
use serde::{Deserialize, Serialize};

use crate::config::{Beta1Source, RunConfig};

/// Calibration of one (φ, θ) generative setting.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCalibration {
    pub phi: f64,
    pub theta: f64,
    pub alpha0: f64,
    pub beta1: f64,
    pub published_beta1: Option<f64>,
    pub auc: McEstimate,
    pub prevalence: McEstimate,
}

/// Thresholds and realized missing rate for one (φ, θ, triple).
#[derive(Debug, Clone, PartialEq)]
pub struct MissingCalibration {
    pub phi: f64,
    pub theta: f64,
    pub triple: MissingTriple,
    pub missing: MissingnessParams,
    pub rate: McEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub models: Vec<ModelCalibration>,
    pub missing: Vec<MissingCalibration>,
}

/// Stable identifier of a grid cell, independent of which other cells are
/// in the grid.
pub fn scenario_id(rho: f64, phi: f64, theta: f64, n: usize) -> u64 {
    derive_seed(0, &[rho.to_bits(), phi.to_bits(), theta.to_bits(), n as u64]) >> 20
}

pub fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| anyhow!("building thread pool: {e}"))
}

/// `β₁` (published or re-derived), AUC and prevalence for every (φ, θ), and
/// thresholds plus missing rates for every triple on top of that.
pub fn calibrate(cfg: &RunConfig) -> Result<Calibration> {
    let g = &cfg.grid;
    let seed = cfg.run.seed;
    let size = g.calibration_size;
    let cells: Vec<(usize, f64, usize, f64)> = g
        .phis
        .iter()
        .enumerate()
        .flat_map(|(i, &phi)| g.thetas.iter().enumerate().map(move |(j, &theta)| (i, phi, j, theta)))
        .collect();
    let models = cells
        .par_iter()
        .map(|&(i, phi, j, theta)| -> Result<ModelCalibration> {
            let alpha0 = published_alpha0(phi).ok_or_else(|| anyhow!("no intercept for phi={phi}"))?;
            let published = published_beta1(phi, theta);
            let base = GenerativeParams::standard(alpha0, 0.0);
            let beta1 = match (&g.beta1, published) {
                (Beta1Source::Published, Some(b)) => b,
                _ => {
                    let mut rng = stream(seed, &[tag::CALIBRATE, 0, i as u64, j as u64]);
                    calibrate_beta1(&base, theta, size, &mut rng)
                        .with_context(|| format!("calibrating beta1 for phi={phi}, theta={theta}"))?
                }
            };
            let params = base.with_beta1(beta1);
            let auc = population_auc(
                &params,
                size,
                &mut stream(seed, &[tag::CALIBRATE, 1, i as u64, j as u64]),
            )?;
            let prevalence = population_prevalence(&params, size, &mut stream(seed, &[tag::CALIBRATE, 2, i as u64]));
            Ok(ModelCalibration {
                phi,
                theta,
                alpha0,
                beta1,
                published_beta1: published,
                auc,
                prevalence,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let missing_cells: Vec<(usize, &ModelCalibration, usize, MissingTriple)> = models
        .iter()
        .enumerate()
        .flat_map(|(mi, m)| g.triples.iter().enumerate().map(move |(k, &t)| (mi, m, k, t.into())))
        .collect();
    let missing = missing_cells
        .par_iter()
        .map(|&(mi, model, k, triple)| -> Result<MissingCalibration> {
            let params = GenerativeParams::standard(model.alpha0, model.beta1);
            let mut rng = stream(seed, &[tag::CALIBRATE, 3, mi as u64, k as u64]);
            let th = calibrate_thresholds(&params, triple.gamma, triple.q1, triple.q2, size, &mut rng)?;
            let mut rng = stream(seed, &[tag::CALIBRATE, 4, mi as u64, k as u64]);
            let rate = population_missing_rate(&params, &th, size, &mut rng);
            Ok(MissingCalibration {
                phi: model.phi,
                theta: model.theta,
                triple,
                missing: th,
                rate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Calibration { models, missing })
}

/// Every grid cell, ordered by ρ, φ, θ, n.
pub fn build_scenarios(cfg: &RunConfig, cal: &Calibration) -> Vec<ScenarioConfig> {
    let mut out = Vec::new();
    for mc in &cal.missing {
        let model = cal
            .models
            .iter()
            .find(|m| m.phi == mc.phi && m.theta == mc.theta)
            .expect("missing calibration refers to a model");
        for &n in &cfg.grid.sample_sizes {
            out.push(ScenarioConfig {
                id: scenario_id(mc.triple.rho, mc.phi, mc.theta, n),
                n,
                params: GenerativeParams::standard(model.alpha0, model.beta1),
                missing: mc.missing.clone(),
                target_theta: mc.theta,
                target_phi: mc.phi,
                target_rho: mc.triple.rho,
                replicate_count: cfg.run.replicates,
            });
        }
    }
    out.sort_by(|a, b| {
        (a.target_rho, a.target_phi, a.target_theta, a.n)
            .partial_cmp(&(b.target_rho, b.target_phi, b.target_theta, b.n))
            .unwrap()
    });
    out
}

const CHUNK: usize = 64;

/// Runs `replicates` replicates of every scenario. Work is split into
/// fixed-size chunks processed in parallel; each chunk's results are handed
/// to `sink` in (scenario, replicate) order, so the output sequence does not
/// depend on the number of threads.
pub fn run_study(
    scenarios: &[ScenarioConfig],
    settings: &StudySettings,
    replicates: usize,
    master_seed: u64,
    pool: &rayon::ThreadPool,
    mut sink: impl FnMut(&[ReplicateResult]) -> Result<()>,
) -> Result<()> {
    let units: Vec<(usize, u64)> = (0..scenarios.len())
        .flat_map(|s| (0..replicates as u64).map(move |r| (s, r)))
        .collect();
    for chunk in units.chunks(CHUNK) {
        let results: Vec<Vec<ReplicateResult>> = pool.install(|| {
            chunk
                .par_iter()
                .map(|&(s, r)| run_replicate(&scenarios[s], r, settings, master_seed))
                .collect()
        });
        for batch in &results {
            sink(batch)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario_id: u64,
    pub theta: f64,
    pub phi: f64,
    pub rho: f64,
    pub n: usize,
    pub replicate: u64,
    pub arm: String,
    pub ci_method: String,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub variance: f64,
    pub df: f64,
    pub valid: bool,
    pub failure_reason: String,
}

impl ResultRow {
    pub fn new(r: &ReplicateResult, key: &ScenarioKey) -> Self {
        let (lower, upper, df) =
            r.ci.as_ref()
                .map_or((f64::NAN, f64::NAN, f64::NAN), |c| (c.lower, c.upper, c.df));
        Self {
            scenario_id: r.scenario_id,
            theta: key.theta,
            phi: key.phi,
            rho: key.rho,
            n: key.n,
            replicate: r.replicate,
            arm: r.arm.label().to_string(),
            ci_method: r.method.label().to_string(),
            point: r.point,
            lower,
            upper,
            variance: r.raw_variance,
            df,
            valid: r.valid(),
            failure_reason: r.failure_reason.clone().unwrap_or_default(),
        }
    }

    pub fn key(&self) -> ScenarioKey {
        ScenarioKey {
            scenario_id: self.scenario_id,
            theta: self.theta,
            phi: self.phi,
            rho: self.rho,
            n: self.n,
        }
    }

    pub fn to_result(&self, level: f64) -> Result<ReplicateResult> {
        let arm: AnalysisArm = self.arm.parse()?;
        let method: VarianceMethod = self.ci_method.parse()?;
        let ci = self.valid.then(|| ConfidenceInterval {
            point: self.point,
            variance: self.variance.max(0.0),
            lower: self.lower,
            upper: self.upper,
            level,
            df: self.df,
        });
        Ok(ReplicateResult {
            scenario_id: self.scenario_id,
            replicate: self.replicate,
            arm,
            method,
            point: self.point,
            raw_variance: self.variance,
            ci,
            failure_reason: (!self.failure_reason.is_empty()).then(|| self.failure_reason.clone()),
        })
    }
}

/// Append-only CSV of replicate results.
pub struct ResultsSink {
    writer: csv::Writer<BufWriter<File>>,
}

impl ResultsSink {
    /// Creates (truncating) `path` and writes the header.
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self {
            writer: csv::Writer::from_writer(BufWriter::new(file)),
        })
    }

    pub fn append(&mut self, results: &[ReplicateResult], keys: &[ScenarioKey]) -> Result<()> {
        for r in results {
            let key = keys
                .iter()
                .find(|k| k.scenario_id == r.scenario_id)
                .ok_or_else(|| anyhow!("unknown scenario {}", r.scenario_id))?;
            self.writer.serialize(ResultRow::new(r, key))?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush()?;
        self.writer.into_inner().map_err(|e| anyhow!("{e}"))?.flush()?;
        Ok(())
    }
}

/// Reads a results CSV back into results and the scenario keys it mentions.
pub fn read_results(path: &Path, level: f64) -> Result<(Vec<ReplicateResult>, Vec<ScenarioKey>)> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut results = Vec::new();
    let mut keys: Vec<ScenarioKey> = Vec::new();
    for row in rdr.deserialize() {
        let row: ResultRow = row?;
        if !keys.iter().any(|k| k.scenario_id == row.scenario_id) {
            keys.push(row.key());
        }
        results.push(row.to_result(level)?);
    }
    Ok((results, keys))
}

pub fn write_calibration(path: &Path, cal: &Calibration) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(
        w,
        "kind,phi,theta,alpha0,beta1,published_beta1,auc,auc_se,prevalence,prevalence_se,rho,gamma,q1,q2,t_threshold,z_threshold,missing_rate,missing_rate_se"
    )?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for m in &cal.models {
        writeln!(
            w,
            "model,{},{},{},{},{},{},{},{},{},,,,,,,,",
            m.phi,
            m.theta,
            m.alpha0,
            m.beta1,
            opt(m.published_beta1),
            m.auc.value,
            m.auc.std_error,
            m.prevalence.value,
            m.prevalence.std_error
        )?;
    }
    for c in &cal.missing {
        writeln!(
            w,
            "missingness,{},{},,,,,,,,{},{},{},{},{},{},{},{}",
            c.phi,
            c.theta,
            c.triple.rho,
            c.triple.gamma,
            c.triple.q1,
            c.triple.q2,
            c.missing.t_threshold,
            c.missing.z_thresholds.first().copied().unwrap_or(f64::NAN),
            c.rate.value,
            c.rate.std_error
        )?;
    }
    w.flush()?;
    Ok(())
}
