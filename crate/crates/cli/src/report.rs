//! CSV and summary emission. All floats are printed with 17 significant
//! digits in scientific notation so outputs are bit-stable across runs.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use compactwave::diagnostics::{EnergyLedger, ErrorNorms, SeedForm, StabilityBoundCheck};
use compactwave::grid::{Field, TimeMesh};
use compactwave::scheme::RunReport;
use compactwave::stability::StabilityCertificate;
use compactwave::study::StudyReport;

use crate::fmt_f64;

pub fn write_ledger_csv(path: &Path, ledger: &EnergyLedger) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "level,time,kinetic,correction,potential,work,residual")?;
    for r in &ledger.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.level,
            fmt_f64(r.time),
            fmt_f64(r.kinetic),
            fmt_f64(r.correction),
            fmt_f64(r.potential),
            fmt_f64(r.work),
            fmt_f64(r.residual)
        )?;
    }
    Ok(())
}

pub fn write_errors_csv(path: &Path, errors: &ErrorNorms, tmesh: &TimeMesh) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "level,time,l2_error,energy_error")?;
    for (m, (l2, en)) in errors
        .per_level_l2
        .iter()
        .zip(&errors.per_level_energy)
        .enumerate()
    {
        writeln!(
            w,
            "{},{},{},{}",
            m,
            fmt_f64(tmesh.node(m)),
            fmt_f64(*l2),
            fmt_f64(*en)
        )?;
    }
    Ok(())
}

pub fn write_snapshot_csv(path: &Path, field: &Field) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    let dim = field.grid().dim();
    let mut header = String::from("node");
    for k in 1..=dim {
        header.push_str(&format!(",x{k}"));
    }
    header.push_str(",value");
    writeln!(w, "{header}")?;
    let data = field.as_slice();
    let mut result = Ok(());
    field.grid().visit_nodes(|lin, _, coords| {
        if result.is_err() {
            return;
        }
        let mut line = lin.to_string();
        for c in coords {
            line.push(',');
            line.push_str(&fmt_f64(*c));
        }
        line.push(',');
        line.push_str(&fmt_f64(data[lin]));
        result = writeln!(w, "{line}");
    });
    result
}

pub fn write_orders_csv(path: &Path, study: &StudyReport) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(
        w,
        "level,cells,h_max,dt,steps,energy_error,l2_error,order_energy,order_l2"
    )?;
    for r in &study.rows {
        let cells = r
            .cells
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join("x");
        let fmt_opt = |o: Option<f64>| o.map(fmt_f64).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.level,
            cells,
            fmt_f64(r.h_max),
            fmt_f64(r.dt),
            r.steps,
            fmt_f64(r.energy_error),
            fmt_f64(r.l2_error),
            fmt_opt(r.order_energy),
            fmt_opt(r.order_l2)
        )?;
    }
    Ok(())
}

pub fn certificate_toml(cert: &StabilityCertificate) -> String {
    let mut out = String::new();
    out.push_str(&format!("method = \"{}\"\n", cert.method.as_str()));
    out.push_str(&format!("condition1_ok = {}\n", cert.condition1_ok));
    out.push_str(&format!(
        "condition1_slack = {}\n",
        fmt_f64(cert.condition1_slack)
    ));
    out.push_str(&format!("condition2_ok = {}\n", cert.condition2_ok));
    out.push_str(&format!(
        "condition2_slack = {}\n",
        fmt_f64(cert.condition2_slack)
    ));
    out.push_str(&format!("lambda_max = {}\n", fmt_f64(cert.lambda_max)));
    out.push_str(&format!(
        "sufficient_dt = {}\n",
        fmt_f64(cert.sufficient_dt)
    ));
    out
}

fn bound_toml(bound: &StabilityBoundCheck) -> String {
    let mut out = String::new();
    out.push_str(&format!("lhs_max = {}\n", fmt_f64(bound.lhs_max)));
    out.push_str(&format!("rhs = {}\n", fmt_f64(bound.rhs)));
    out.push_str(&format!("alt_lhs_max = {}\n", fmt_f64(bound.alt_lhs_max)));
    out.push_str(&format!("alt_rhs = {}\n", fmt_f64(bound.alt_rhs)));
    out.push_str(&format!("holds = {}\n", bound.holds()));
    out
}

/// Builds the `[report]` block of a run summary.
pub fn report_toml(report: &RunReport, perturbation_sup: Option<f64>) -> String {
    let mut out = String::new();
    out.push_str("[report]\n");
    out.push_str(&format!("steps = {}\n", report.steps));
    out.push_str(&format!("dt = {}\n", fmt_f64(report.dt)));
    out.push_str(&format!("final_sup = {}\n", fmt_f64(report.final_sup)));
    out.push_str(&format!("line_solves = {}\n", report.line_solves));
    if let Some(r) = report.scalar_residual_max {
        out.push_str(&format!("scalar_residual_max = {}\n", fmt_f64(r)));
    }
    if let Some(p) = perturbation_sup {
        out.push_str(&format!("bk_perturbation_sup = {}\n", fmt_f64(p)));
    }
    out.push_str("\n[report.certificate]\n");
    out.push_str(&certificate_toml(&report.certificate));
    if let Some(errors) = &report.errors {
        out.push_str("\n[report.errors]\n");
        out.push_str(&format!("max_energy = {}\n", fmt_f64(errors.energy)));
        out.push_str(&format!("max_l2 = {}\n", fmt_f64(errors.l2)));
        out.push_str(&format!("max_sup = {}\n", fmt_f64(errors.sup)));
    }
    if let Some(ledger) = &report.energy {
        out.push_str("\n[report.energy]\n");
        out.push_str(&format!("rows = {}\n", ledger.rows.len()));
        out.push_str(&format!(
            "seed_pattern = {}\n",
            fmt_f64(ledger.seed_pattern)
        ));
        out.push_str(&format!(
            "seed_literal = {}\n",
            fmt_f64(ledger.seed_literal)
        ));
        out.push_str(&format!(
            "seed_from_data = {}\n",
            fmt_f64(ledger.seed_from_data)
        ));
        out.push_str(&format!(
            "matched_seed = \"{}\"\n",
            match ledger.matched_seed() {
                SeedForm::Pattern => "pattern",
                SeedForm::Literal => "literal",
            }
        ));
        out.push_str(&format!(
            "relative_drift = {}\n",
            fmt_f64(ledger.relative_drift())
        ));
        let max_residual = ledger
            .residuals(SeedForm::Pattern)
            .iter()
            .fold(0.0f64, |m, r| m.max(r.abs()));
        out.push_str(&format!("max_residual = {}\n", fmt_f64(max_residual)));
    }
    if let Some(bound) = &report.stability_bound {
        out.push_str("\n[report.stability_bound]\n");
        out.push_str(&bound_toml(bound));
    }
    out
}

/// Builds the `[report]` block of a convergence summary.
pub fn study_toml(study: &StudyReport) -> String {
    let mut out = String::new();
    out.push_str("[report]\n");
    out.push_str(&format!("levels = {}\n", study.rows.len()));
    out.push_str(&format!("slope_energy = {}\n", fmt_f64(study.slope_energy)));
    out.push_str(&format!("slope_l2 = {}\n", fmt_f64(study.slope_l2)));
    out
}
