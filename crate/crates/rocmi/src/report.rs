//! Summary CSV and the text tables.

use std::fmt::Write as _;
use std::io::Write;

use anyhow::Result;
use rocmi_core::study::{average, mae, AnalysisArm, EvalSummary};
use rocmi_core::VarianceMethod;
use serde::Serialize;

#[derive(Debug, Serialize)]
struct SummaryRow<'a> {
    arm: &'a str,
    ci_method: &'a str,
    theta: f64,
    phi: f64,
    rho: f64,
    n: usize,
    cp: f64,
    lncp: f64,
    rncp: f64,
    cil: f64,
    bias: f64,
    mse: f64,
    n_valid: usize,
    n_invalid: usize,
}

const SUMMARY_HEADER: [&str; 14] = [
    "arm",
    "ci_method",
    "theta",
    "phi",
    "rho",
    "n",
    "cp",
    "lncp",
    "rncp",
    "cil",
    "bias",
    "mse",
    "n_valid",
    "n_invalid",
];

pub fn write_summary_csv<W: Write>(summaries: &[EvalSummary], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(SUMMARY_HEADER)?;
    for s in summaries {
        w.serialize(SummaryRow {
            arm: s.arm.label(),
            ci_method: s.method.label(),
            theta: s.key.theta,
            phi: s.key.phi,
            rho: s.key.rho,
            n: s.key.n,
            cp: s.cp,
            lncp: s.lncp,
            rncp: s.rncp,
            cil: s.cil,
            bias: s.bias,
            mse: s.mse,
            n_valid: s.n_valid,
            n_invalid: s.n_invalid,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Distinct values in first-seen order after sorting.
fn distinct(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

pub fn rhos(summaries: &[EvalSummary]) -> Vec<f64> {
    distinct(summaries.iter().map(|s| s.key.rho).collect())
}

/// `.949` style: three decimals without the leading zero.
fn fmt3(v: f64) -> String {
    if v.is_nan() {
        return "  -  ".into();
    }
    let s = format!("{v:.3}");
    match s.strip_prefix("0.") {
        Some(rest) => format!(".{rest}"),
        None => match s.strip_prefix("-0.") {
            Some(rest) => format!("-.{rest}"),
            None => s,
        },
    }
}

struct Block<'a> {
    arm: AnalysisArm,
    method: VarianceMethod,
    cells: Vec<Vec<&'a EvalSummary>>,
}

fn blocks<'a>(summaries: &'a [EvalSummary], rho: f64, thetas: &[f64]) -> Vec<Block<'a>> {
    let mut arms: Vec<AnalysisArm> = summaries.iter().map(|s| s.arm).collect();
    arms.sort();
    arms.dedup();
    let mut methods: Vec<VarianceMethod> = summaries.iter().map(|s| s.method).collect();
    methods.sort();
    methods.dedup();
    let mut out = Vec::new();
    for &arm in &arms {
        for &method in &methods {
            let cells: Vec<Vec<&EvalSummary>> = thetas
                .iter()
                .map(|&t| {
                    summaries
                        .iter()
                        .filter(|s| s.arm == arm && s.method == method && s.key.rho == rho && s.key.theta == t)
                        .collect()
                })
                .collect();
            if cells.iter().any(|c| !c.is_empty()) {
                out.push(Block { arm, method, cells });
            }
        }
    }
    out
}

fn header(out: &mut String, groups: &[&str], thetas: &[f64]) {
    let _ = write!(out, "{:<9}{:<5}", "MI", "CI");
    for name in groups {
        let _ = write!(out, "| {:<width$}", name, width = thetas.len() * 7);
    }
    out.push('\n');
    let _ = write!(out, "{:<14}", "");
    for _ in groups {
        out.push_str("| ");
        for t in thetas {
            let _ = write!(out, "{:<7}", format!("{t}"));
        }
    }
    out.push('\n');
}

/// CP, MAE(CP) and CIL by θ for one ρ, averaged over prevalence and sample
/// size. MAE is taken over those same cells against `nominal`.
pub fn performance_table(summaries: &[EvalSummary], rho: f64, nominal: f64) -> String {
    let thetas = distinct(
        summaries
            .iter()
            .filter(|s| s.key.rho == rho)
            .map(|s| s.key.theta)
            .collect(),
    );
    let mut out = format!("Performance of CIs by imputation and CI method, rho = {rho}\n");
    header(&mut out, &["CP", "MAE (CP)", "CIL"], &thetas);
    let mut last_arm = None;
    for b in blocks(summaries, rho, &thetas) {
        if last_arm != Some(b.arm) {
            out.push_str(&"-".repeat(14 + 3 * (2 + 7 * thetas.len())));
            out.push('\n');
            last_arm = Some(b.arm);
        }
        let _ = write!(out, "{:<9}{:<5}", b.arm.label(), b.method.label());
        let avgs: Vec<_> = b.cells.iter().map(|c| average(c.iter().copied())).collect();
        out.push_str("| ");
        for a in &avgs {
            let _ = write!(out, "{:<7}", fmt3(a.cp));
        }
        out.push_str("| ");
        for c in &b.cells {
            let cps: Vec<f64> = c.iter().filter(|s| !s.is_empty()).map(|s| s.cp).collect();
            let v = if cps.is_empty() { f64::NAN } else { mae(&cps, nominal) };
            let _ = write!(out, "{:<7}", fmt3(v));
        }
        out.push_str("| ");
        for a in &avgs {
            let _ = write!(out, "{:<7}", fmt3(a.cil));
        }
        out.push('\n');
    }
    out
}

/// LNCP and RNCP by θ for one ρ, averaged over prevalence and sample size.
pub fn noncoverage_table(summaries: &[EvalSummary], rho: f64) -> String {
    let thetas = distinct(
        summaries
            .iter()
            .filter(|s| s.key.rho == rho)
            .map(|s| s.key.theta)
            .collect(),
    );
    let mut out = format!("Non-coverage probabilities by imputation and CI method, rho = {rho}\n");
    header(&mut out, &["LNCP", "RNCP"], &thetas);
    let mut last_arm = None;
    for b in blocks(summaries, rho, &thetas) {
        if last_arm != Some(b.arm) {
            out.push_str(&"-".repeat(14 + 2 * (2 + 7 * thetas.len())));
            out.push('\n');
            last_arm = Some(b.arm);
        }
        let _ = write!(out, "{:<9}{:<5}", b.arm.label(), b.method.label());
        let avgs: Vec<_> = b.cells.iter().map(|c| average(c.iter().copied())).collect();
        out.push_str("| ");
        for a in &avgs {
            let _ = write!(out, "{:<7}", fmt3(a.lncp));
        }
        out.push_str("| ");
        for a in &avgs {
            let _ = write!(out, "{:<7}", fmt3(a.rncp));
        }
        out.push('\n');
    }
    out
}

/// MSE of the point estimate by arm, θ and n (one row per arm and n),
/// averaged over prevalence, for one ρ.
pub fn mse_table(summaries: &[EvalSummary], rho: f64) -> String {
    let sel: Vec<&EvalSummary> = summaries
        .iter()
        .filter(|s| s.key.rho == rho && s.method == VarianceMethod::DeLong)
        .collect();
    let thetas = distinct(sel.iter().map(|s| s.key.theta).collect());
    let mut ns: Vec<usize> = sel.iter().map(|s| s.key.n).collect();
    ns.sort();
    ns.dedup();
    let mut arms: Vec<AnalysisArm> = sel.iter().map(|s| s.arm).collect();
    arms.sort();
    arms.dedup();
    let mut out = format!("MSE of the AUC estimate, rho = {rho}\n{:<9}{:<6}", "MI", "n");
    for t in &thetas {
        let _ = write!(out, "{:<9}", format!("{t}"));
    }
    out.push('\n');
    for arm in arms {
        for &n in &ns {
            let _ = write!(out, "{:<9}{:<6}", arm.label(), n);
            for &t in &thetas {
                let a = average(
                    sel.iter()
                        .copied()
                        .filter(|s| s.arm == arm && s.key.n == n && s.key.theta == t),
                );
                let _ = write!(
                    out,
                    "{:<9}",
                    if a.mse.is_nan() {
                        "-".into()
                    } else {
                        format!("{:.5}", a.mse)
                    }
                );
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_summary_is_header_only() {
        let mut buf = Vec::new();
        write_summary_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
    }

    #[test]
    fn three_decimals() {
        assert_eq!(fmt3(0.9494), ".949");
        assert_eq!(fmt3(1.0), "1.000");
        assert_eq!(fmt3(-0.0123), "-.012");
    }
}
