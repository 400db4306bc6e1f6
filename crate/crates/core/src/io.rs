//! CSV and JSON export. Floats are written with 17 significant digits.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eternal::{EternalSolution, Route};
use crate::evolution::{EvolutionTrace, SupProfile};
use crate::grid::{CylinderWindow, Grid};
use crate::verify::ContractionReport;

/// Round-trippable float formatting.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn spatial_headers(grid: &Grid) -> Vec<&'static str> {
    if grid.dim() == 1 {
        vec!["y1"]
    } else {
        vec!["y1", "y2"]
    }
}

/// Long-format trace: one row per `(t, node)`, every `stride`-th slice.
pub fn write_trace_csv<W: Write>(out: W, trace: &EvolutionTrace, stride: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let grid = trace.grid();
    let mut header = vec!["t"];
    header.extend(spatial_headers(grid));
    header.push("value");
    w.write_record(&header)?;
    for k in (0..trace.len()).step_by(stride.max(1)) {
        let t = fmt_f64(trace.time(k));
        for (node, &v) in trace.slice(k).iter().enumerate() {
            let mut row = vec![t.clone()];
            row.extend(grid.coords(node).iter().map(|&c| fmt_f64(c)));
            row.push(fmt_f64(v));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_profile_csv<W: Write>(out: W, profile: &SupProfile) -> Result<()> {
    write_columns_csv(out, &["t", "u_hat"], &[&profile.times, &profile.values])
}

/// Writes equal-length columns under the given headers.
pub fn write_columns_csv<W: Write>(out: W, headers: &[&str], columns: &[&[f64]]) -> Result<()> {
    if headers.len() != columns.len() {
        return Err(Error::Io(format!(
            "{} headers for {} columns",
            headers.len(),
            columns.len()
        )));
    }
    let rows = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != rows) {
        return Err(Error::Io("columns have different lengths".into()));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(headers)?;
    for r in 0..rows {
        w.write_record(columns.iter().map(|c| fmt_f64(c[r])))?;
    }
    w.flush()?;
    Ok(())
}

/// `j, K_j, L_j` series.
pub fn write_contraction_csv<W: Write>(out: W, report: &ContractionReport) -> Result<()> {
    let j: Vec<f64> = report.j.iter().map(|&j| j as f64).collect();
    write_columns_csv(out, &["j", "K_j", "L_j"], &[&j, &report.k_j, &report.l_j])
}

/// Metadata written next to an exported eternal solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EternalHeader {
    pub route: Route,
    pub rate: f64,
    pub normalization: f64,
    pub dim: usize,
    pub h: Vec<f64>,
    pub nodes: usize,
    pub origin: Vec<f64>,
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
}

/// Writes `<stem>.json` (header) and `<stem>.csv` (samples on `window`).
pub fn export_eternal(dir: &Path, stem: &str, w: &EternalSolution, window: &CylinderWindow, stride: usize) -> Result<EternalHeader> {
    let trace = w.sample(window)?;
    let grid = w.grid();
    let header = EternalHeader {
        route: w.route,
        rate: w.rate,
        normalization: w.normalization()?,
        dim: grid.dim(),
        h: grid.h().to_vec(),
        nodes: grid.len(),
        origin: grid.coords(grid.origin_node()).to_vec(),
        t_start: window.t_start,
        t_end: window.t_end,
        dt: window.dt,
    };
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&header)?)?;
    let file = std::fs::File::create(dir.join(format!("{stem}.csv")))?;
    write_trace_csv(std::io::BufWriter::new(file), &trace, stride)?;
    Ok(header)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{Scheme, SourceTag};
    use crate::grid::{build_grid, SpatialDomain};
    use std::sync::Arc;

    #[test]
    fn float_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn trace_csv_shape() {
        let g = Arc::new(build_grid(&SpatialDomain::interval(-1.0, 1.0).unwrap(), 0.5).unwrap());
        let tr = EvolutionTrace::from_parts(g, 0.0, 0.5, vec![1.0; 9], Scheme::ImplicitEuler, SourceTag::Zero).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &tr, 1).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,y1,value");
        assert_eq!(lines.len(), 1 + 9);
    }

    #[test]
    fn column_mismatch() {
        let mut buf = Vec::new();
        assert!(write_columns_csv(&mut buf, &["a", "b"], &[&[1.0], &[1.0, 2.0]]).is_err());
        assert!(write_columns_csv(&mut buf, &["a"], &[&[1.0], &[1.0]]).is_err());
    }
}
