use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::experiments::{Outcome, Table};

pub fn write_table(dir: &Path, t: &Table) -> Result<()> {
    let path = dir.join(format!("{}.csv", t.name));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(&t.header)?;
    for row in &t.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn checks_json(out: &Outcome) -> Value {
    let failed = out.checks.iter().filter(|c| !c.pass).count();
    json!({
        "total": out.checks.len(),
        "passed": out.checks.len() - failed,
        "failed": failed,
    })
}

/// CSV per table, extra artifacts, and `summary.json`.
pub fn emit(dir: &Path, cfg: &RunConfig, out: &Outcome) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut files = Vec::new();
    for t in &out.tables {
        write_table(dir, t)?;
        files.push(format!("{}.csv", t.name));
    }
    for (name, body) in &out.files {
        fs::write(dir.join(name), body).with_context(|| format!("cannot write {name}"))?;
        files.push(name.clone());
    }
    let summary = json!({
        "schema_version": cfg.schema_version,
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "status": if out.passed() { "pass" } else { "fail" },
        "assertions": checks_json(out),
        "first_failure": out.first_failure(),
        "checks": out.checks,
        "metrics": out.metrics,
        "flags": out.flags,
        "files": files,
    });
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(())
}

pub struct SweepPoint {
    pub value: f64,
    /// `Ok` for a completed run; `Err` carries the status and message.
    pub result: std::result::Result<Outcome, (&'static str, String)>,
}

/// One row per point: status, assertion counts and every metric seen in any
/// point (empty where a point lacks it).
pub fn emit_sweep(dir: &Path, cfg: &RunConfig, axis: &str, points: &[SweepPoint]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let keys: BTreeSet<&String> = points
        .iter()
        .filter_map(|p| p.result.as_ref().ok())
        .flat_map(|o| o.metrics.keys())
        .collect();
    let mut header = vec!["point", "axis", "value", "status", "passed", "failed", "detail"];
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(dir.join("sweep.csv"))
        .context("cannot write sweep.csv")?;
    header.extend(keys.iter().map(|k| k.as_str()));
    w.write_record(&header)?;
    let mut rows = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let mut row = vec![i.to_string(), axis.to_string(), bloomlab::lattice::fmt_f64(p.value)];
        match &p.result {
            Ok(o) => {
                let failed = o.checks.iter().filter(|c| !c.pass).count();
                row.push(if failed == 0 { "pass" } else { "fail" }.into());
                row.push((o.checks.len() - failed).to_string());
                row.push(failed.to_string());
                row.push(o.first_failure().map(|c| format!("{}: {}", c.name, c.detail)).unwrap_or_default());
                for k in &keys {
                    row.push(o.metrics.get(*k).map(|v| bloomlab::lattice::fmt_f64(*v)).unwrap_or_default());
                }
            }
            Err((status, msg)) => {
                row.extend([status.to_string(), "0".into(), "0".into(), msg.clone()]);
                row.extend(keys.iter().map(|_| String::new()));
            }
        }
        w.write_record(&row)?;
        rows.push(json!({
            "point": i,
            "value": p.value,
            "status": row[3],
        }));
    }
    w.flush()?;
    let ok = points.iter().all(|p| p.result.as_ref().is_ok_and(|o| o.passed()));
    let summary = json!({
        "schema_version": cfg.schema_version,
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "axis": axis,
        "status": if ok { "pass" } else { "fail" },
        "points": rows,
        "files": ["sweep.csv"],
    });
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(())
}
