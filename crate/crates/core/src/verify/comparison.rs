use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eternal::EternalSolution;
use crate::evolution::EvolutionTrace;
use crate::grid::CylinderWindow;

fn require_positive(trace: &EvolutionTrace) -> Result<()> {
    if trace.raw_values().iter().all(|&v| v > 0.0) {
        Ok(())
    } else {
        Err(Error::NonPositive)
    }
}

fn origin_value_at_one(trace: &EvolutionTrace) -> Result<f64> {
    let k = trace.index_of(1.0).ok_or(Error::OutsideWindow {
        t: 1.0,
        start: trace.t_start(),
        end: trace.t_end(),
    })?;
    Ok(trace.value(trace.grid().origin_node(), k))
}

/// Two-sided comparison of positive solutions normalised at `(origin, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// `max(u / v, v / u)` over samples with `t >= 0`.
    pub c_star: f64,
    /// Extremes of `u / v` over the whole trace.
    pub quotient_min: f64,
    pub quotient_max: f64,
    /// `quotient_max / quotient_min`, the global ratio spread.
    pub quotient_spread: f64,
    /// Largest `sup_{(t0 - 2, t0 + 2)} w / w(origin, t0)` over both traces;
    /// `None` when the trace is shorter than four time units.
    pub harnack_constant: Option<f64>,
    pub harnack_samples: usize,
}

/// Comparison constants for two positive solutions on one time axis.
pub fn comparison_constant(u: &EvolutionTrace, v: &EvolutionTrace) -> Result<ComparisonReport> {
    u.check_compatible(v)?;
    require_positive(u)?;
    require_positive(v)?;
    let su = 1.0 / origin_value_at_one(u)?;
    let sv = 1.0 / origin_value_at_one(v)?;
    let mut c_star = 1.0f64;
    let mut qmin = f64::INFINITY;
    let mut qmax = 0.0f64;
    for k in 0..u.len() {
        let forward = u.time(k) >= -1e-9 * u.dt();
        for (&a, &b) in u.slice(k).iter().zip(v.slice(k)) {
            let q = (a * su) / (b * sv);
            qmin = qmin.min(q);
            qmax = qmax.max(q);
            if forward {
                c_star = c_star.max(q).max(1.0 / q);
            }
        }
    }
    let (hu, nu) = harnack(u);
    let (hv, _) = harnack(v);
    Ok(ComparisonReport {
        c_star,
        quotient_min: qmin,
        quotient_max: qmax,
        quotient_spread: qmax / qmin,
        harnack_constant: (nu > 0).then(|| hu.max(hv)),
        harnack_samples: nu,
    })
}

/// Sliding-window maximum of the slice supremum over `(t0 - 2, t0 + 2)`
/// divided by the origin value at `t0`.
fn harnack(trace: &EvolutionTrace) -> (f64, usize) {
    let half = (2.0 / trace.dt()).round() as usize;
    let n = trace.len();
    if n < 2 * half + 1 {
        return (f64::NAN, 0);
    }
    let o = trace.grid().origin_node();
    let sup: Vec<f64> = trace
        .slices()
        .map(|s| s.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let mut best = 0.0f64;
    let mut window: VecDeque<usize> = VecDeque::new();
    let mut count = 0;
    for k in 0..n {
        while window.back().is_some_and(|&j| sup[j] <= sup[k]) {
            window.pop_back();
        }
        window.push_back(k);
        if k < 2 * half {
            continue;
        }
        while window.front().is_some_and(|&j| j + 2 * half < k) {
            window.pop_front();
        }
        let centre = k - half;
        best = best.max(sup[window[0]] / trace.value(o, centre));
        count += 1;
    }
    (best, count)
}

/// Ratio statistics of two solutions expected to be proportional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleReport {
    /// Mean ratio `u / v` over the sampled cylinder.
    pub k: f64,
    pub min: f64,
    pub max: f64,
    /// `(max - min) / |k|`.
    pub spread: f64,
    pub samples: usize,
}

pub fn proportionality_traces(u: &EvolutionTrace, v: &EvolutionTrace) -> Result<ScaleReport> {
    u.check_compatible(v)?;
    require_positive(v)?;
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for (&a, &b) in u.raw_values().iter().zip(v.raw_values()) {
        let r = a / b;
        let next = sum + r;
        carry += if sum.abs() >= r.abs() { (sum - next) + r } else { (r - next) + sum };
        sum = next;
        min = min.min(r);
        max = max.max(r);
    }
    let sum = sum + carry;
    let samples = u.raw_values().len();
    let k = sum / samples as f64;
    Ok(ScaleReport {
        k,
        min,
        max,
        spread: (max - min) / k.abs(),
        samples,
    })
}

/// Samples both eternal solutions on `window` and measures `u / v`.
pub fn proportionality(u: &EternalSolution, v: &EternalSolution, window: &CylinderWindow) -> Result<ScaleReport> {
    proportionality_traces(&u.sample(window)?, &v.sample(window)?)
}
