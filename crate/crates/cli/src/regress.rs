use std::fmt;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use crate::config::RegressTolerances;
use crate::report::{RESULT_FILE, TIMING_FILE};

/// The golden directory has no run result. Maps to exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct MissingGolden(pub String);

impl fmt::Display for MissingGolden {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "missing golden: {}", self.0)
    }
}

impl std::error::Error for MissingGolden {}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Drift {
    pub file: String,
    pub field: String,
    pub golden: String,
    pub fresh: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct DiffReport {
    pub drift: Vec<Drift>,
    /// Shape differences: missing files or fields, row counts, headers.
    pub structural: Vec<String>,
}

impl DiffReport {
    pub fn is_empty(&self) -> bool {
        self.drift.is_empty() && self.structural.is_empty()
    }
}

impl fmt::Display for DiffReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return writeln!(f, "no drift");
        }
        for s in &self.structural {
            writeln!(f, "structural {s}")?;
        }
        for d in &self.drift {
            writeln!(f, "drift {} {}: golden {} fresh {}", d.file, d.field, d.golden, d.fresh)?;
        }
        Ok(())
    }
}

fn close(a: f64, b: f64, (rel, abs): (f64, f64)) -> bool {
    a == b || (a - b).abs() <= abs + rel * a.abs().max(b.abs())
}

fn short(v: &Value) -> String {
    let s = v.to_string();
    if s.len() > 60 {
        format!("{}...", &s[..57])
    } else {
        s
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn compare_json(file: &str, path: &str, g: &Value, f: &Value, tol: &RegressTolerances, out: &mut DiffReport) {
    match (g, f) {
        (Value::Number(a), Value::Number(b)) => {
            let (a, b) = (a.as_f64().unwrap_or(f64::NAN), b.as_f64().unwrap_or(f64::NAN));
            if !close(a, b, tol.for_path(path)) {
                out.drift.push(Drift {
                    file: file.into(),
                    field: path.into(),
                    golden: format!("{a:e}"),
                    fresh: format!("{b:e}"),
                });
            }
        }
        (Value::Object(a), Value::Object(b)) => {
            for (k, va) in a {
                match b.get(k) {
                    Some(vb) => compare_json(file, &join(path, k), va, vb, tol, out),
                    None => out.structural.push(format!("{file}: field {} missing in fresh", join(path, k))),
                }
            }
            for k in b.keys().filter(|k| !a.contains_key(*k)) {
                out.structural.push(format!("{file}: field {} missing in golden", join(path, k)));
            }
        }
        (Value::Array(a), Value::Array(b)) => {
            if a.len() != b.len() {
                out.structural
                    .push(format!("{file}: {path} has {} entries in golden, {} in fresh", a.len(), b.len()));
            } else {
                for (i, (va, vb)) in a.iter().zip(b).enumerate() {
                    compare_json(file, &format!("{path}[{i}]"), va, vb, tol, out);
                }
            }
        }
        (a, b) if std::mem::discriminant(a) != std::mem::discriminant(b) => {
            out.structural.push(format!("{file}: {path} changed type ({} vs {})", short(a), short(b)));
        }
        (a, b) => {
            if a != b {
                out.drift.push(Drift {
                    file: file.into(),
                    field: path.into(),
                    golden: short(a),
                    fresh: short(b),
                });
            }
        }
    }
}

fn read_csv(path: &Path) -> Result<(csv::StringRecord, Vec<csv::StringRecord>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = r.headers()?.clone();
    let rows = r.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((header, rows))
}

fn compare_csv(name: &str, golden: &Path, fresh: &Path, tol: &RegressTolerances, out: &mut DiffReport) -> Result<()> {
    let (gh, grows) = read_csv(golden)?;
    let (fh, frows) = read_csv(fresh)?;
    if gh != fh {
        out.structural.push(format!("{name}: header {gh:?} vs {fh:?}"));
        return Ok(());
    }
    if grows.len() != frows.len() {
        out.structural
            .push(format!("{name}: row count {} in golden, {} in fresh", grows.len(), frows.len()));
        return Ok(());
    }
    for (i, (a, b)) in grows.iter().zip(&frows).enumerate() {
        for (j, (x, y)) in a.iter().zip(b.iter()).enumerate() {
            let field = format!("row {}, {}", i + 1, &gh[j]);
            let same = match (x.parse::<f64>(), y.parse::<f64>()) {
                (Ok(p), Ok(q)) => close(p, q, tol.for_path(&gh[j])),
                _ => x == y,
            };
            if !same {
                out.drift.push(Drift {
                    file: name.into(),
                    field,
                    golden: x.into(),
                    fresh: y.into(),
                });
            }
        }
    }
    Ok(())
}

/// Compares a fresh run directory against a golden one using the
/// tolerances recorded in the golden result.
pub fn regress(golden: &Path, fresh: &Path) -> Result<DiffReport> {
    let golden_result = golden.join(RESULT_FILE);
    if !golden_result.is_file() {
        return Err(MissingGolden(golden_result.display().to_string()).into());
    }
    let g: Value = serde_json::from_str(&std::fs::read_to_string(&golden_result)?)
        .with_context(|| format!("parsing {}", golden_result.display()))?;
    let tol: RegressTolerances = g
        .get("regress")
        .map(|v| serde_json::from_value(v.clone()))
        .transpose()?
        .unwrap_or_default();

    let mut out = DiffReport::default();
    let mut names: Vec<String> = std::fs::read_dir(golden)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().map(String::from))
        .filter(|n| n != TIMING_FILE && (n.ends_with(".json") || n.ends_with(".csv")))
        .collect();
    names.sort();
    for name in &names {
        let fp = fresh.join(name);
        if !fp.is_file() {
            out.structural.push(format!("{name}: missing in fresh"));
            continue;
        }
        if name.ends_with(".json") {
            let gv: Value = serde_json::from_str(&std::fs::read_to_string(golden.join(name))?)?;
            let fv: Value = serde_json::from_str(&std::fs::read_to_string(&fp)?)
                .with_context(|| format!("parsing {}", fp.display()))?;
            compare_json(name, "", &gv, &fv, &tol, &mut out);
        } else {
            compare_csv(name, &golden.join(name), &fp, &tol, &mut out)?;
        }
    }
    if fresh.is_dir() {
        for e in std::fs::read_dir(fresh)?.filter_map(|e| e.ok()) {
            if let Some(n) = e.file_name().to_str() {
                if n.ends_with(".csv") && !names.iter().any(|m| m == n) {
                    out.structural.push(format!("{n}: missing in golden"));
                }
            }
        }
    }
    Ok(out)
}
