//! Per-replicate analysis arms and coverage metrics.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::mi::{pool, ImputationSpec, ImputeError, Imputer, StudyDataset, Technique};
use crate::rng::{derive_seed, stream, tag};
use crate::roc::{wald_ci, AucStatistics, ConfidenceInterval, UnknownName, VarianceMethod};
use crate::sim::{ScenarioConfig, SimulatedSample};

/// How a replicate's data reach the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AnalysisArm {
    /// All disease statuses, ignoring verification.
    Complete,
    /// Verified subjects only.
    Naive,
    /// Unverified statuses multiply imputed.
    Mi(Technique),
}

impl AnalysisArm {
    pub const ALL: [AnalysisArm; 5] = [
        AnalysisArm::Complete,
        AnalysisArm::Naive,
        AnalysisArm::Mi(Technique::Pmm),
        AnalysisArm::Mi(Technique::LogReg),
        AnalysisArm::Mi(Technique::Norm),
    ];

    pub fn label(self) -> &'static str {
        match self {
            AnalysisArm::Complete => "Complete",
            AnalysisArm::Naive => "Naive",
            AnalysisArm::Mi(t) => t.label(),
        }
    }

    fn stream_id(self) -> u64 {
        match self {
            AnalysisArm::Complete => 0,
            AnalysisArm::Naive => 1,
            AnalysisArm::Mi(Technique::Pmm) => 2,
            AnalysisArm::Mi(Technique::LogReg) => 3,
            AnalysisArm::Mi(Technique::Norm) => 4,
        }
    }
}

impl fmt::Display for AnalysisArm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AnalysisArm {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "complete" | "full" => Ok(AnalysisArm::Complete),
            "naive" | "cc" => Ok(AnalysisArm::Naive),
            other => other.parse().map(AnalysisArm::Mi).map_err(|_| UnknownName(s.into())),
        }
    }
}

/// Settings shared by every replicate of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudySettings {
    pub arms: Vec<AnalysisArm>,
    pub methods: Vec<VarianceMethod>,
    /// Template for the MI arms; technique and seed are set per arm.
    pub imputation: ImputationSpec,
    pub level: f64,
    /// Redraws allowed for an imputation whose disease column has fewer than
    /// two subjects in a class.
    pub max_redraws: usize,
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            arms: AnalysisArm::ALL.to_vec(),
            methods: VarianceMethod::ALL.to_vec(),
            imputation: ImputationSpec::new(Technique::Pmm, 0),
            level: 0.95,
            max_redraws: 10,
        }
    }
}

/// One (replicate, arm, variance method) outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub scenario_id: u64,
    pub replicate: u64,
    pub arm: AnalysisArm,
    pub method: VarianceMethod,
    pub point: f64,
    /// Variance as estimated, before clamping negatives to zero.
    pub raw_variance: f64,
    /// `None` when the arm could not produce an interval.
    pub ci: Option<ConfidenceInterval>,
    pub failure_reason: Option<String>,
}

impl ReplicateResult {
    pub fn valid(&self) -> bool {
        self.ci.is_some()
    }

    fn invalid(scenario_id: u64, replicate: u64, arm: AnalysisArm, method: VarianceMethod, reason: String) -> Self {
        Self {
            scenario_id,
            replicate,
            arm,
            method,
            point: f64::NAN,
            raw_variance: f64::NAN,
            ci: None,
            failure_reason: Some(reason),
        }
    }
}

/// Point estimate and raw variance for each requested method on one
/// completed dataset. Fails when either disease class has fewer than two
/// subjects.
fn estimates(data: &StudyDataset, methods: &[VarianceMethod]) -> Result<(f64, Vec<f64>), String> {
    let scores = data.grouped_scores().map_err(|e| e.to_string())?;
    let stats = AucStatistics::new(&scores);
    let vars = methods
        .iter()
        .map(|&m| stats.variance(m))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    Ok((stats.theta(), vars))
}

fn single_dataset_results(
    scenario_id: u64,
    replicate: u64,
    arm: AnalysisArm,
    data: &StudyDataset,
    settings: &StudySettings,
) -> Vec<ReplicateResult> {
    match estimates(data, &settings.methods) {
        Ok((theta, vars)) => settings
            .methods
            .iter()
            .zip(vars)
            .map(|(&method, raw)| {
                let ci = wald_ci(theta, raw.max(0.0), settings.level, f64::INFINITY);
                ReplicateResult {
                    scenario_id,
                    replicate,
                    arm,
                    method,
                    point: theta,
                    raw_variance: raw,
                    failure_reason: ci.as_ref().err().map(|e| e.to_string()),
                    ci: ci.ok(),
                }
            })
            .collect(),
        Err(reason) => settings
            .methods
            .iter()
            .map(|&m| ReplicateResult::invalid(scenario_id, replicate, arm, m, reason.clone()))
            .collect(),
    }
}

/// Per-imputation `(θ̂, V̂ per method)` for `m` usable imputations.
fn imputed_estimates(
    data: &StudyDataset,
    spec: &ImputationSpec,
    settings: &StudySettings,
) -> Result<Vec<(f64, Vec<f64>)>, String> {
    let mut imputer = Imputer::new(data, spec).map_err(|e: ImputeError| e.to_string())?;
    let mut out = Vec::with_capacity(spec.m);
    for _ in 0..spec.m {
        let mut attempt = 0;
        loop {
            let completed = imputer.draw().map_err(|e| e.to_string())?;
            match estimates(&completed, &settings.methods) {
                Ok(est) => {
                    out.push(est);
                    break;
                }
                Err(reason) if attempt >= settings.max_redraws => {
                    return Err(alloc::format!(
                        "imputation degenerate after {} redraws: {reason}",
                        attempt
                    ));
                }
                Err(_) => attempt += 1,
            }
        }
    }
    Ok(out)
}

fn mi_results(
    scenario_id: u64,
    replicate: u64,
    technique: Technique,
    data: &StudyDataset,
    settings: &StudySettings,
    seed: u64,
) -> Vec<ReplicateResult> {
    let arm = AnalysisArm::Mi(technique);
    let spec = ImputationSpec {
        technique,
        seed,
        ..settings.imputation.clone()
    };
    let per_imputation = match imputed_estimates(data, &spec, settings) {
        Ok(v) => v,
        Err(reason) => {
            return settings
                .methods
                .iter()
                .map(|&m| ReplicateResult::invalid(scenario_id, replicate, arm, m, reason.clone()))
                .collect()
        }
    };
    let thetas: Vec<f64> = per_imputation.iter().map(|(t, _)| *t).collect();
    settings
        .methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let raw: Vec<f64> = per_imputation.iter().map(|(_, v)| v[k]).collect();
            let clamped: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
            match (
                pool(&thetas, &raw, settings.level),
                pool(&thetas, &clamped, settings.level),
            ) {
                (Ok(unclamped), Ok(pooled)) => ReplicateResult {
                    scenario_id,
                    replicate,
                    arm,
                    method,
                    point: pooled.theta_bar,
                    raw_variance: unclamped.total_v,
                    ci: Some(pooled.ci),
                    failure_reason: None,
                },
                (_, Err(e)) | (Err(e), _) => {
                    ReplicateResult::invalid(scenario_id, replicate, arm, method, e.to_string())
                }
            }
        })
        .collect()
}

/// Analyses of one dataset under every arm in `settings`. `full` has every
/// disease status observed; `observed` has the unverified ones missing.
pub fn analyze_replicate(
    scenario_id: u64,
    replicate: u64,
    full: Option<&StudyDataset>,
    observed: &StudyDataset,
    settings: &StudySettings,
    seed: u64,
) -> Vec<ReplicateResult> {
    let mut out = Vec::with_capacity(settings.arms.len() * settings.methods.len());
    for &arm in &settings.arms {
        match arm {
            AnalysisArm::Complete => match full {
                Some(full) => out.extend(single_dataset_results(scenario_id, replicate, arm, full, settings)),
                None => out.extend(settings.methods.iter().map(|&m| {
                    ReplicateResult::invalid(scenario_id, replicate, arm, m, "full data unavailable".into())
                })),
            },
            AnalysisArm::Naive => out.extend(single_dataset_results(
                scenario_id,
                replicate,
                arm,
                &observed.complete_cases(),
                settings,
            )),
            AnalysisArm::Mi(t) => {
                let arm_seed = derive_seed(seed, &[tag::ARM, arm.stream_id()]);
                out.extend(mi_results(scenario_id, replicate, t, observed, settings, arm_seed))
            }
        }
    }
    out
}

/// Generates replicate `replicate` of `scenario` and analyzes it. The data
/// stream and the imputation streams derive from `(master_seed, scenario id,
/// replicate)` only.
pub fn run_replicate(
    scenario: &ScenarioConfig,
    replicate: u64,
    settings: &StudySettings,
    master_seed: u64,
) -> Vec<ReplicateResult> {
    let mut rng = stream(master_seed, &[tag::DATA, scenario.id, replicate]);
    let sample = SimulatedSample::generate(scenario.n, &scenario.params, &scenario.missing, &mut rng);
    let seed = derive_seed(master_seed, &[tag::IMPUTE, scenario.id, replicate]);
    match (sample.full_dataset(), sample.observed_dataset()) {
        (Ok(full), Ok(observed)) => analyze_replicate(scenario.id, replicate, Some(&full), &observed, settings, seed),
        (Err(e), _) | (_, Err(e)) => settings
            .arms
            .iter()
            .flat_map(|&arm| settings.methods.iter().map(move |&m| (arm, m)))
            .map(|(arm, m)| ReplicateResult::invalid(scenario.id, replicate, arm, m, e.to_string()))
            .collect(),
    }
}

/// Scenario attributes a summary is keyed by.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioKey {
    pub scenario_id: u64,
    pub theta: f64,
    pub phi: f64,
    pub rho: f64,
    pub n: usize,
}

impl From<&ScenarioConfig> for ScenarioKey {
    fn from(s: &ScenarioConfig) -> Self {
        Self {
            scenario_id: s.id,
            theta: s.target_theta,
            phi: s.target_phi,
            rho: s.target_rho,
            n: s.n,
        }
    }
}

/// Coverage metrics for one (scenario, arm, method) cell. Rates are over
/// valid replicates only; a cell with none has NaN metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub key: ScenarioKey,
    pub arm: AnalysisArm,
    pub method: VarianceMethod,
    pub cp: f64,
    pub lncp: f64,
    pub rncp: f64,
    /// Mean interval length after truncation to `[0, 1]`.
    pub cil: f64,
    pub bias: f64,
    pub mse: f64,
    pub n_valid: usize,
    pub n_invalid: usize,
}

impl EvalSummary {
    pub fn is_empty(&self) -> bool {
        self.n_valid == 0
    }
}

#[derive(Default)]
struct Accumulator {
    covered: usize,
    left: usize,
    right: usize,
    length: f64,
    error: f64,
    sq_error: f64,
    valid: usize,
    invalid: usize,
}

/// Summarizes `results` against the true AUC of each scenario. Results whose
/// scenario is missing from `scenarios` are ignored. Output is sorted by
/// scenario id, arm and method, so it does not depend on result order.
pub fn evaluate(results: &[ReplicateResult], scenarios: &[ScenarioKey]) -> Vec<EvalSummary> {
    let lookup: BTreeMap<u64, ScenarioKey> = scenarios.iter().map(|k| (k.scenario_id, *k)).collect();
    let mut cells: BTreeMap<(u64, AnalysisArm, VarianceMethod), Accumulator> = BTreeMap::new();
    for r in results {
        let Some(key) = lookup.get(&r.scenario_id) else {
            continue;
        };
        let acc = cells.entry((r.scenario_id, r.arm, r.method)).or_default();
        match &r.ci {
            Some(ci) => {
                let theta = key.theta;
                acc.valid += 1;
                if ci.upper < theta {
                    acc.left += 1;
                } else if ci.lower > theta {
                    acc.right += 1;
                } else {
                    acc.covered += 1;
                }
                acc.length += ci.truncated_length();
                acc.error += r.point - theta;
                acc.sq_error += (r.point - theta) * (r.point - theta);
            }
            None => acc.invalid += 1,
        }
    }
    cells
        .into_iter()
        .map(|((id, arm, method), acc)| {
            let v = acc.valid as f64;
            let rate = |k: usize| if acc.valid == 0 { f64::NAN } else { k as f64 / v };
            let mean = |s: f64| if acc.valid == 0 { f64::NAN } else { s / v };
            EvalSummary {
                key: lookup[&id],
                arm,
                method,
                cp: rate(acc.covered),
                lncp: rate(acc.left),
                rncp: rate(acc.right),
                cil: mean(acc.length),
                bias: mean(acc.error),
                mse: mean(acc.sq_error),
                n_valid: acc.valid,
                n_invalid: acc.invalid,
            }
        })
        .collect()
}

/// `Σ|CPᵢ − nominal| / n_s` over a set of settings.
pub fn mae(cps: &[f64], nominal: f64) -> f64 {
    cps.iter().map(|cp| (cp - nominal).abs()).sum::<f64>() / cps.len() as f64
}

/// Unweighted mean of each metric over a group of cells (e.g. all sample
/// sizes and prevalences at one AUC). Empty cells are skipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragedSummary {
    pub cp: f64,
    pub lncp: f64,
    pub rncp: f64,
    pub cil: f64,
    pub bias: f64,
    pub mse: f64,
    pub cells: usize,
    pub n_valid: usize,
    pub n_invalid: usize,
}

pub fn average<'a>(cells: impl IntoIterator<Item = &'a EvalSummary>) -> AveragedSummary {
    let mut s = AveragedSummary {
        cp: 0.0,
        lncp: 0.0,
        rncp: 0.0,
        cil: 0.0,
        bias: 0.0,
        mse: 0.0,
        cells: 0,
        n_valid: 0,
        n_invalid: 0,
    };
    for c in cells {
        s.n_valid += c.n_valid;
        s.n_invalid += c.n_invalid;
        if c.is_empty() {
            continue;
        }
        s.cells += 1;
        s.cp += c.cp;
        s.lncp += c.lncp;
        s.rncp += c.rncp;
        s.cil += c.cil;
        s.bias += c.bias;
        s.mse += c.mse;
    }
    let k = s.cells as f64;
    for v in [&mut s.cp, &mut s.lncp, &mut s.rncp, &mut s.cil, &mut s.bias, &mut s.mse] {
        *v = if s.cells == 0 { f64::NAN } else { *v / k };
    }
    s
}
