//! The four subcommands, callable without going through argument parsing.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rocmi_core::study::{analyze_replicate, evaluate, AnalysisArm, EvalSummary, ReplicateResult, ScenarioKey};

use crate::config::RunConfig;
use crate::data_io::{describe, load_dataset, DescribeTable};
use crate::report::{mse_table, noncoverage_table, performance_table, rhos, write_summary_csv};
use crate::runner::{build_scenarios, calibrate, read_results, run_study, thread_pool, write_calibration, ResultsSink};

pub const RUN_MANIFEST: &str = "run_manifest.txt";
pub const CALIBRATION_CSV: &str = "calibration.csv";
pub const RESULTS_CSV: &str = "results.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const ANALYSIS_CSV: &str = "analysis.csv";
pub const TABLES_DIR: &str = "tables";

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Writes the resolved config, which re-runs the same command when passed
/// back through `--config`.
fn write_run_manifest(cfg: &RunConfig, command: &str, extra: &[String]) -> Result<()> {
    let mut w = create(&cfg.run.out.join(RUN_MANIFEST))?;
    writeln!(w, "# rocmi {} {}", env!("CARGO_PKG_VERSION"), command)?;
    for line in extra {
        writeln!(w, "# {line}")?;
    }
    w.write_all(cfg.to_toml()?.as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn cmd_calibrate(cfg: &RunConfig) -> Result<PathBuf> {
    ensure_dir(&cfg.run.out)?;
    let pool = thread_pool(cfg.run.threads)?;
    let cal = pool.install(|| calibrate(cfg))?;
    let path = cfg.run.out.join(CALIBRATION_CSV);
    write_calibration(&path, &cal)?;
    write_run_manifest(cfg, "calibrate", &[])?;
    Ok(path)
}

fn write_tables(dir: &Path, summaries: &[EvalSummary], nominal: f64) -> Result<()> {
    let tables = dir.join(TABLES_DIR);
    ensure_dir(&tables)?;
    for rho in rhos(summaries) {
        let tag = format!("{}", (rho * 100.0).round() as i64);
        fs::write(
            tables.join(format!("performance_rho{tag}.txt")),
            performance_table(summaries, rho, nominal),
        )?;
        fs::write(
            tables.join(format!("noncoverage_rho{tag}.txt")),
            noncoverage_table(summaries, rho),
        )?;
        fs::write(tables.join(format!("mse_rho{tag}.txt")), mse_table(summaries, rho))?;
    }
    Ok(())
}

fn summarize(dir: &Path, results: &[ReplicateResult], keys: &[ScenarioKey], nominal: f64) -> Result<Vec<EvalSummary>> {
    let summaries = evaluate(results, keys);
    write_summary_csv(&summaries, create(&dir.join(SUMMARY_CSV))?)?;
    write_tables(dir, &summaries, nominal)?;
    Ok(summaries)
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<EvalSummary>> {
    let out = &cfg.run.out;
    ensure_dir(out)?;
    let pool = thread_pool(cfg.run.threads)?;
    let cal = pool.install(|| calibrate(cfg))?;
    write_calibration(&out.join(CALIBRATION_CSV), &cal)?;
    let scenarios = build_scenarios(cfg, &cal);
    let keys: Vec<ScenarioKey> = scenarios.iter().map(ScenarioKey::from).collect();
    let lines: Vec<String> = scenarios
        .iter()
        .map(|s| {
            format!(
                "scenario {} rho={} phi={} theta={} n={} beta1={} t_threshold={}",
                s.id, s.target_rho, s.target_phi, s.target_theta, s.n, s.params.beta1, s.missing.t_threshold
            )
        })
        .collect();
    write_run_manifest(cfg, "simulate", &lines)?;

    let settings = cfg.study_settings()?;
    let mut sink = ResultsSink::create(&out.join(RESULTS_CSV))?;
    let mut all = Vec::new();
    run_study(
        &scenarios,
        &settings,
        cfg.run.replicates,
        cfg.run.seed,
        &pool,
        |batch| {
            sink.append(batch, &keys)?;
            all.extend_from_slice(batch);
            Ok(())
        },
    )?;
    sink.finish()?;
    summarize(out, &all, &keys, cfg.analysis.level)
}

/// Rebuilds summary and tables from an existing results file.
pub fn cmd_report(cfg: &RunConfig) -> Result<Vec<EvalSummary>> {
    let out = &cfg.run.out;
    let (results, keys) = read_results(&out.join(RESULTS_CSV), cfg.analysis.level)?;
    summarize(out, &results, &keys, cfg.analysis.level)
}

/// Naive and multiply-imputed intervals for the configured dataset.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<Vec<ReplicateResult>> {
    let Some(manifest) = &cfg.dataset else {
        bail!("analyze needs a [dataset] section in the config");
    };
    let out = &cfg.run.out;
    ensure_dir(out)?;
    let data = load_dataset(manifest)?;
    let disease = data.disease();
    let ones = disease.observed_values().filter(|&v| v == 1.0).count();
    if ones == 0 || ones == disease.observed_count() {
        bail!("disease column {:?} has a single observed class", disease.name);
    }
    let summary = describe(&data);
    fs::write(
        out.join("describe.txt"),
        DescribeTable {
            rows: &summary,
            n_rows: data.n_rows(),
        }
        .to_string(),
    )?;

    let mut settings = cfg.study_settings()?;
    if !data.is_complete() {
        settings.arms.retain(|a| *a != AnalysisArm::Complete);
    }
    let full = data.is_complete().then_some(&data);
    let results = analyze_replicate(0, 0, full, &data, &settings, cfg.run.seed);

    let mut w = csv::Writer::from_writer(create(&out.join(ANALYSIS_CSV))?);
    w.write_record([
        "arm",
        "ci_method",
        "point",
        "lower",
        "upper",
        "variance",
        "df",
        "valid",
        "failure_reason",
    ])?;
    for r in &results {
        let (lo, hi, df) =
            r.ci.as_ref()
                .map_or((f64::NAN, f64::NAN, f64::NAN), |c| (c.lower, c.upper, c.df));
        w.write_record([
            r.arm.label().to_string(),
            r.method.label().to_string(),
            r.point.to_string(),
            lo.to_string(),
            hi.to_string(),
            r.raw_variance.to_string(),
            df.to_string(),
            r.valid().to_string(),
            r.failure_reason.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    write_run_manifest(cfg, "analyze", &[])?;
    Ok(results)
}
