//! Bounded eternal solutions of the forced problem by exhaustion from the
//! far past, and the decomposition `u = u0 + a w` of positive solutions.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eternal::EternalSolution;
use crate::evolution::{EvolutionTrace, Scheme, SourceTag, Stepper};
use crate::grid::{CylinderWindow, Grid};
use crate::operator::{sliding_norm, CoefficientSpec, SourceSpec};

/// Relative variation of `sup |u_N|` across `N` accepted as a uniform bound.
pub const UNIFORM_BOUND_VARIATION: f64 = 0.05;

/// Zero data at `t = -n`, stepped to `t = n`. Returns the full trace.
pub fn exhaustion_solve(
    spec: &CoefficientSpec,
    f: &SourceSpec,
    grid: &Arc<Grid>,
    n: f64,
    dt: f64,
    scheme: Scheme,
) -> Result<EvolutionTrace> {
    Ok(exhaustion_stream(spec, f, grid, n, dt, scheme, (-n, n))?.1)
}

/// Runs the exhaustion solve keeping only `[keep.0, keep.1]`; returns the
/// global `sup |u|` together with the kept sub-trace.
fn exhaustion_stream(
    spec: &CoefficientSpec,
    f: &SourceSpec,
    grid: &Arc<Grid>,
    n: f64,
    dt: f64,
    scheme: Scheme,
    keep: (f64, f64),
) -> Result<(f64, EvolutionTrace)> {
    if !(n > 0.0) {
        return Err(Error::InvalidTruncation(format!("N must be positive, got {n}")));
    }
    let window = CylinderWindow::new(-n, n, dt)?;
    let stepper = Stepper::new(spec, f, grid, dt, scheme)?;
    let on_axis = |t: f64| {
        let s = (t + n) / dt;
        ((s - s.round()).abs() <= 1e-6 && t >= -n - 1e-9 && t <= n + 1e-9).then(|| s.round() as usize)
    };
    let (Some(ka), Some(kb)) = (on_axis(keep.0), on_axis(keep.1)) else {
        return Err(Error::InvalidTruncation(format!(
            "window [{}, {}] is not on the time axis of [-{n}, {n}] with dt = {dt}",
            keep.0, keep.1
        )));
    };
    let nodes = grid.len();
    let mut u = vec![0.0; nodes];
    let mut kept = Vec::with_capacity(nodes * (kb - ka + 1));
    let mut sup = 0.0f64;
    if ka == 0 {
        kept.extend_from_slice(&u);
    }
    for k in 0..window.steps {
        u = stepper.advance(&u, window.time(k)).map_err(|e| Error::StepFailed {
            step: k,
            reason: e.to_string(),
        })?;
        sup = u.iter().fold(sup, |m, v| m.max(v.abs()));
        if (ka..=kb).contains(&(k + 1)) {
            kept.extend_from_slice(&u);
        }
    }
    let trace = EvolutionTrace::from_parts(grid.clone(), window.time(ka), dt, kept, scheme, SourceTag::of(f))?;
    Ok((sup, trace))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExhaustionResult {
    pub n_list: Vec<f64>,
    pub sup_norms: Vec<f64>,
    pub source_norm: f64,
    /// `sup |u_N| / ||f||` per `N`; `None` when `f = 0`.
    pub c0_estimates: Vec<Option<f64>>,
    /// `(max - min) / max` of `sup |u_N|` across `N`.
    pub uniform_variation: f64,
    pub uniform_bound: bool,
    /// `sup_{(-W, W)} |u_{N_i} - u_{N_{i+1}}|`, one per consecutive pair.
    pub differences: Vec<f64>,
    /// Fitted geometric ratio of successive differences; `None` with a
    /// single difference.
    pub cauchy_ratio: Option<f64>,
    pub half_width: f64,
    /// The largest-`N` solve restricted to `(-W, W)`.
    #[serde(skip)]
    pub limit: Option<EvolutionTrace>,
}

/// Exhaustion solves for each `N` (in parallel) compared on `(-W, W)`.
pub fn exhaustion_limit(
    spec: &CoefficientSpec,
    f: &SourceSpec,
    grid: &Arc<Grid>,
    n_list: &[f64],
    half_width: f64,
    dt: f64,
    scheme: Scheme,
) -> Result<ExhaustionResult> {
    if n_list.len() < 2 {
        return Err(Error::InvalidTruncation("need at least two truncation lengths".into()));
    }
    if n_list.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::InvalidTruncation("truncation lengths must increase strictly".into()));
    }
    if !(half_width > 0.0) || n_list[0] < 2.0 * half_width {
        return Err(Error::InvalidTruncation(format!(
            "smallest N = {} must be at least 2W = {}",
            n_list[0],
            2.0 * half_width
        )));
    }
    let runs: Vec<(f64, EvolutionTrace)> = n_list
        .par_iter()
        .map(|&n| exhaustion_stream(spec, f, grid, n, dt, scheme, (-half_width, half_width)))
        .collect::<Result<_>>()?;

    let n_max = *n_list.last().unwrap_or(&0.0);
    let source_norm = if f.is_zero() {
        0.0
    } else {
        sliding_norm(f, (-n_max, n_max), grid, dt)?
    };
    let sup_norms: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let c0_estimates = sup_norms
        .iter()
        .map(|&s| (source_norm > 0.0).then(|| s / source_norm))
        .collect();
    let hi = sup_norms.iter().copied().fold(0.0f64, f64::max);
    let lo = sup_norms.iter().copied().fold(f64::INFINITY, f64::min);
    let uniform_variation = if hi > 0.0 { (hi - lo) / hi } else { 0.0 };

    let differences: Vec<f64> = runs
        .windows(2)
        .map(|p| {
            p[0].1
                .raw_values()
                .iter()
                .zip(p[1].1.raw_values())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        })
        .collect();
    let cauchy_ratio = geometric_ratio(&differences);
    if let Some(ratio) = cauchy_ratio.filter(|r| !(*r < 1.0)) {
        return Err(Error::NoCauchyDecay { ratio });
    }
    let limit = runs.into_iter().last().map(|r| r.1);
    Ok(ExhaustionResult {
        n_list: n_list.to_vec(),
        sup_norms,
        source_norm,
        c0_estimates,
        uniform_variation,
        uniform_bound: uniform_variation <= UNIFORM_BOUND_VARIATION,
        differences,
        cauchy_ratio,
        half_width,
        limit,
    })
}

/// Geometric mean of successive ratios; zero when every entry vanishes.
fn geometric_ratio(d: &[f64]) -> Option<f64> {
    if d.iter().all(|&x| x == 0.0) {
        return Some(0.0);
    }
    if d.len() < 2 {
        return None;
    }
    if d.contains(&0.0) {
        return Some(if d.last() == Some(&0.0) { 0.0 } else { f64::INFINITY });
    }
    let steps = (d.len() - 1) as f64;
    Some(((d[d.len() - 1] / d[0]).ln() / steps).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    /// `(u - u0) / w` at `(origin, 1)`.
    pub a: f64,
    /// Range of `(u - u0) / w` over the window.
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// `(ratio_max - ratio_min) / |a|`, or the absolute range when `a = 0`.
    pub spread: f64,
    /// `sup |u - u0 - a w|`.
    pub residual: f64,
}

/// Tolerance below zero allowed for `u - u0` before it is reported.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-10;

/// Writes a positive solution `u` of the forced problem as `u0 + a w`.
pub fn decompose(u: &EvolutionTrace, u0: &EvolutionTrace, w: &EternalSolution) -> Result<DecompositionReport> {
    let window = CylinderWindow::new(u.t_start(), u.t_end(), u.dt())?;
    let wt = w.sample(&window)?;
    decompose_traces(u, u0, &wt)
}

pub fn decompose_traces(u: &EvolutionTrace, u0: &EvolutionTrace, w: &EvolutionTrace) -> Result<DecompositionReport> {
    u.check_compatible(u0)?;
    u.check_compatible(w)?;
    if w.raw_values().iter().any(|&v| !(v > 0.0)) {
        return Err(Error::NonPositive);
    }
    let scale = u0.raw_values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let diff: Vec<f64> = u.raw_values().iter().zip(u0.raw_values()).map(|(a, b)| a - b).collect();
    let min_value = diff.iter().copied().fold(f64::INFINITY, f64::min);
    if min_value < -NEGATIVITY_TOLERANCE * scale {
        return Err(Error::NegativeCoefficient { min_value });
    }
    let k1 = u.index_of(1.0).ok_or(Error::OutsideWindow {
        t: 1.0,
        start: u.t_start(),
        end: u.t_end(),
    })?;
    let at = k1 * u.nodes() + u.grid().origin_node();
    let a = diff[at] / w.raw_values()[at];
    let (ratio_min, ratio_max) = diff
        .iter()
        .zip(w.raw_values())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), (d, w)| {
            (l.min(d / w), h.max(d / w))
        });
    let spread = if a != 0.0 {
        (ratio_max - ratio_min) / a.abs()
    } else {
        ratio_max - ratio_min
    };
    let residual = diff
        .iter()
        .zip(w.raw_values())
        .fold(0.0f64, |m, (d, w)| m.max((d - a * w).abs()));
    Ok(DecompositionReport {
        a,
        ratio_min,
        ratio_max,
        spread,
        residual,
    })
}

/// `u0 + a w` on the time axis of `u0`.
pub fn synthesize(u0: &EvolutionTrace, w: &EternalSolution, a: f64) -> Result<EvolutionTrace> {
    let window = CylinderWindow::new(u0.t_start(), u0.t_end(), u0.dt())?;
    let wt = w.sample(&window)?;
    u0.axpy(a, &wt)
}
