//! Report files: trajectories, cost tables, iteration CDFs, summaries and a manifest.
//!
//! Output is byte-stable for a fixed report: floats use the shortest
//! round-trip representation and files are listed in emission order.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::experiment::{Report, RunReport};
use super::SimError;

/// Output format of the per-experiment files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Name of the manifest written to the output directory.
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    files: &'a [String],
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Serialized name of a unit enum variant.
fn tag(v: impl Serialize) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        other => format!("{other:?}"),
    }
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Trajectory CSV of one run.
pub fn trajectory_csv(run: &RunReport) -> String {
    let k = run.trajectory.first().map_or(0, |r| r.b.len());
    let named = |p: &str| {
        (1..=k)
            .map(|i| format!("{p}_{i}"))
            .collect::<Vec<_>>()
            .join(",")
    };
    let mut out = format!(
        "t,cost,iterations,{},{},{},{},E,G,E_o,p\n",
        named("lambda_ke"),
        named("lambda_kh"),
        named("B"),
        named("W")
    );
    for r in &run.trajectory {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.cost,
            r.iterations,
            join(&r.lambda_ke),
            join(&r.lambda_kh),
            join(&r.b),
            join(&r.w),
            r.e,
            r.g,
            r.e_o,
            r.p
        );
    }
    out
}

/// One row per run: totals, iteration summary, violations and bound margin.
pub fn cost_table_csv(report: &Report) -> String {
    let mut out = String::from(
        "label,mode,ablation,spread_ratio,sigma,rho,total_cost,mean_cost,mean_iterations,median_iterations,unconverged,band_violations,unbalanced,bound_margin\n",
    );
    for r in &report.runs {
        let v = r.violations;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.label,
            tag(r.mode),
            tag(r.ablation),
            r.spread_ratio.map_or(String::new(), |x| x.to_string()),
            r.sigma,
            r.rho,
            r.total_cost,
            r.mean_cost,
            r.mean_iterations,
            r.median_iterations,
            r.unconverged,
            v.battery + v.tank + v.soc,
            v.unbalanced,
            r.bound.map_or(String::new(), |b| b.margin.to_string()),
        );
    }
    out
}

/// `(iterations, fraction)` pairs of every run.
pub fn cdf_csv(report: &Report) -> String {
    let mut out = String::from("label,iterations,fraction\n");
    for r in &report.runs {
        for (x, y) in &r.cdf {
            let _ = writeln!(out, "{},{x},{y}", r.label);
        }
    }
    out
}

/// Headline figures of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub total_cost: f64,
    pub mean_iterations: f64,
    /// `None` when the bound was not checked.
    pub bound_holds: Option<bool>,
}

/// Summary of every run of a report.
pub fn summary(report: &Report) -> Vec<RunSummary> {
    report
        .runs
        .iter()
        .map(|r| RunSummary {
            label: r.label.clone(),
            total_cost: r.total_cost,
            mean_iterations: r.mean_iterations,
            bound_holds: r.bound.map(|b| b.margin >= 0.0),
        })
        .collect()
}

fn write(dir: &Path, name: String, body: &str, files: &mut Vec<String>) -> Result<(), SimError> {
    let path = dir.join(&name);
    std::fs::write(&path, body).map_err(|e| SimError::io(&path, e))?;
    files.push(name);
    Ok(())
}

/// Writes every report to `out_dir` and returns the manifest path.
///
/// An empty list still writes a manifest, with no files.
pub fn emit_report(
    reports: &[Report],
    format: Format,
    out_dir: &Path,
) -> Result<PathBuf, SimError> {
    std::fs::create_dir_all(out_dir).map_err(|e| SimError::io(out_dir, e))?;
    let mut files = Vec::new();
    for rep in reports {
        let name = slug(&rep.name);
        match format {
            Format::Json => {
                let body = serde_json::to_string_pretty(rep).expect("report serializes");
                write(out_dir, format!("{name}.json"), &body, &mut files)?;
            }
            Format::Csv => {
                write(
                    out_dir,
                    format!("{name}_costs.csv"),
                    &cost_table_csv(rep),
                    &mut files,
                )?;
                write(
                    out_dir,
                    format!("{name}_cdf.csv"),
                    &cdf_csv(rep),
                    &mut files,
                )?;
                let body = serde_json::to_string_pretty(&summary(rep)).expect("summary serializes");
                write(out_dir, format!("{name}_summary.json"), &body, &mut files)?;
                for run in &rep.runs {
                    write(
                        out_dir,
                        format!("{name}_{}_trajectory.csv", slug(&run.label)),
                        &trajectory_csv(run),
                        &mut files,
                    )?;
                }
            }
        }
    }
    let manifest = out_dir.join(MANIFEST);
    let body =
        serde_json::to_string_pretty(&Manifest { files: &files }).expect("manifest serializes");
    std::fs::write(&manifest, body).map_err(|e| SimError::io(&manifest, e))?;
    Ok(manifest)
}
