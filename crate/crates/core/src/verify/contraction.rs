use serde::{Deserialize, Serialize};

use super::linear_fit;
use crate::error::{Error, Result};
use crate::eternal::EternalSolution;
use crate::evolution::EvolutionTrace;
use crate::grid::CylinderWindow;

/// Default distance between `j_max` and the horizon `J`.
pub const DEFAULT_TAIL: usize = 6;

/// Relative change of `K_j` or `L_j` under a doubled tail that marks the
/// horizon as too short.
const TAIL_SENSITIVITY: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub j: Vec<usize>,
    pub horizon: f64,
    /// `max u / w` over `[j, J]`.
    pub k_j: Vec<f64>,
    /// `min u / w` over `[j, J]`.
    pub l_j: Vec<f64>,
    pub k: f64,
    /// Successive gap ratios `(K_{j+1} - L_{j+1}) / (K_j - L_j)`.
    pub gap_ratios: Vec<f64>,
    /// Fitted geometric contraction factor of the gaps.
    pub zeta: f64,
    pub monotone: bool,
    /// `-ln zeta`.
    pub envelope_rate: f64,
    /// Smallest `C` with `|u - K w| <= C e^{-rate t} w` for sampled `t >= 1`.
    pub envelope_constant: f64,
    pub envelope_violations: usize,
    /// Largest relative change of `K_j`, `L_j` when the tail is doubled;
    /// `None` when the trace does not reach the doubled horizon.
    pub tail_change: Option<f64>,
    pub tail_sensitive: bool,
    pub passed: bool,
}

/// `K_j / L_j` contraction of `u` against the eternal solution `w`, sampled
/// on the time axis of `u`.
pub fn kl_contraction(
    u: &EvolutionTrace,
    w: &EternalSolution,
    j_max: usize,
    horizon: usize,
) -> Result<ContractionReport> {
    let window = CylinderWindow::new(u.t_start(), u.t_end(), u.dt())?;
    let wt = w.sample(&window)?;
    kl_contraction_traces(u, &wt, j_max, horizon)
}

pub fn kl_contraction_traces(
    u: &EvolutionTrace,
    w: &EvolutionTrace,
    j_max: usize,
    horizon: usize,
) -> Result<ContractionReport> {
    u.check_compatible(w)?;
    if j_max == 0 || horizon < j_max + 2 {
        return Err(Error::HorizonTooShort {
            horizon: horizon as f64,
            required: (j_max.max(1) + 2) as f64,
        });
    }
    let horizon_t = horizon as f64;
    if u.t_end() < horizon_t - 1e-9 {
        return Err(Error::HorizonTooShort {
            horizon: u.t_end(),
            required: horizon_t,
        });
    }
    if u.t_start() > 1.0 + 1e-9 {
        return Err(Error::OutsideWindow {
            t: 1.0,
            start: u.t_start(),
            end: u.t_end(),
        });
    }
    if u.raw_values().iter().chain(w.raw_values()).any(|&v| !(v > 0.0)) {
        return Err(Error::NonPositive);
    }

    let (lo, hi): (Vec<f64>, Vec<f64>) = (0..u.len())
        .map(|k| {
            u.slice(k)
                .iter()
                .zip(w.slice(k))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), (&a, &b)| {
                    (l.min(a / b), h.max(a / b))
                })
        })
        .unzip();
    let index = |t: f64| (((t - u.t_start()) / u.dt()).round().max(0.0) as usize).min(u.len() - 1);
    let extremes = |j: usize, end: f64| {
        let (a, b) = (index(j as f64), index(end));
        let k = hi[a..=b].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let l = lo[a..=b].iter().copied().fold(f64::INFINITY, f64::min);
        (k, l)
    };

    let js: Vec<usize> = (1..=j_max).collect();
    let (k_j, l_j): (Vec<f64>, Vec<f64>) = js.iter().map(|&j| extremes(j, horizon_t)).unzip();
    let k = 0.5 * (k_j[j_max - 1] + l_j[j_max - 1]);
    let tol = 1e-12;
    let monotone = k_j.windows(2).all(|p| p[1] <= p[0] * (1.0 + tol))
        && l_j.windows(2).all(|p| p[1] >= p[0] * (1.0 - tol));

    let gaps: Vec<f64> = k_j.iter().zip(&l_j).map(|(a, b)| a - b).collect();
    let gap_ratios: Vec<f64> = gaps.windows(2).map(|g| g[1] / g[0]).collect();
    let scale = k.abs().max(f64::MIN_POSITIVE);
    let positive: Vec<(f64, f64)> = js
        .iter()
        .zip(&gaps)
        .filter(|(_, &g)| g > 1e-14 * scale)
        .map(|(&j, &g)| (j as f64, g.ln()))
        .collect();
    let zeta = if positive.len() < 2 {
        0.0
    } else {
        let (xs, ys): (Vec<f64>, Vec<f64>) = positive.into_iter().unzip();
        linear_fit(&xs, &ys).map_or(0.0, |(slope, _, _)| slope.exp())
    };
    let envelope_rate = if zeta > 0.0 { -zeta.ln() } else { f64::INFINITY };

    let mut envelope_constant = 0.0f64;
    let mut envelope_violations = 0;
    for kk in index(1.0)..u.len() {
        let t = u.time(kk);
        let m = (t.floor() as usize).clamp(1, j_max);
        let width = gaps[m - 1];
        for (&a, &b) in u.slice(kk).iter().zip(w.slice(kk)) {
            let dev = (a / b - k).abs();
            if dev > width * (1.0 + 1e-9) + tol * scale {
                envelope_violations += 1;
            }
            if envelope_rate.is_finite() {
                envelope_constant = envelope_constant.max(dev * (envelope_rate * t).exp());
            }
        }
    }

    let extended = horizon_t + (horizon - j_max) as f64;
    let tail_change = (u.t_end() >= extended - 1e-9).then(|| {
        js.iter()
            .enumerate()
            .map(|(i, &j)| {
                let (ke, le) = extremes(j, extended);
                ((ke - k_j[i]).abs() / k_j[i].abs()).max((le - l_j[i]).abs() / l_j[i].abs())
            })
            .fold(0.0f64, f64::max)
    });
    let tail_sensitive = tail_change.is_some_and(|c| c > TAIL_SENSITIVITY);
    let passed = monotone && zeta < 1.0 && envelope_violations == 0 && !tail_sensitive;
    Ok(ContractionReport {
        j: js,
        horizon: horizon_t,
        k_j,
        l_j,
        k,
        gap_ratios,
        zeta,
        monotone,
        envelope_rate,
        envelope_constant,
        envelope_violations,
        tail_change,
        tail_sensitive,
        passed,
    })
}
