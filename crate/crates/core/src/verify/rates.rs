use serde::{Deserialize, Serialize};

use super::linear_fit;
use crate::error::{Error, Result};
use crate::evolution::SupProfile;

/// Exponential bracket of a positive, non-increasing `u_hat` around a
/// reference time, with the constants derived from unit-step ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub reference_time: f64,
    /// `true` when no samples precede the reference time.
    pub one_sided: bool,
    pub theta: f64,
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub c: f64,
    pub c_prime: f64,
    /// Negated log-slope of `u_hat` after the reference time.
    pub forward_rate: Option<f64>,
    /// Negated log-slope of `u_hat` before the reference time.
    pub backward_rate: Option<f64>,
    pub forward_residual: Option<f64>,
    pub backward_residual: Option<f64>,
    pub samples: usize,
    pub bracket_violations: usize,
}

/// Unit-step ratio constants, log-linear rate fits on either side of
/// `split`, and a pointwise check of the bracket at every sample. When
/// `split` is not sampled the first sample at or after it is used.
pub fn fit_rates(profile: &SupProfile, split: f64) -> Result<RateReport> {
    if profile.values.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::NonPositiveProfile);
    }
    let dt = profile.dt().ok_or(Error::EmptyTrace)?;
    let unit = (1.0 / dt).round() as usize;
    if unit == 0 || ((unit as f64) * dt - 1.0).abs() > 1e-6 || profile.len() <= unit {
        return Err(Error::InvalidWindow(format!(
            "profile spacing {dt} must divide one time unit and span more than one unit"
        )));
    }
    let v = &profile.values;
    let mut theta = f64::NEG_INFINITY;
    let mut eta = f64::INFINITY;
    for k in unit..v.len() {
        let r = v[k - unit] / v[k];
        theta = theta.max(r - 1.0);
        eta = eta.min(r - 1.0);
    }
    let (alpha, beta) = ((1.0 + theta).ln(), (1.0 + eta).ln());
    let (c, c_prime) = (1.0 / (1.0 + eta), 1.0 + theta);

    let r = profile
        .times
        .iter()
        .position(|&t| t >= split - 1e-9 * dt)
        .unwrap_or(profile.len() - 1);
    let t_ref = profile.times[r];
    let one_sided = r == 0;
    let u_ref = v[r];

    let fit = |range: std::ops::Range<usize>| {
        let xs: Vec<f64> = profile.times[range.clone()].to_vec();
        let ys: Vec<f64> = v[range].iter().map(|x| x.ln()).collect();
        linear_fit(&xs, &ys)
    };
    let forward = fit(r..v.len());
    let backward = fit(0..r + 1);

    let slack = 1e-12;
    let bracket_violations = profile
        .times
        .iter()
        .zip(v)
        .filter(|(&t, &u)| {
            let tau = t - t_ref;
            let (lo, hi) = if tau < 0.0 {
                let s = -tau;
                (c * u_ref * (beta * s).exp(), c_prime * u_ref * (alpha * s).exp())
            } else {
                (u_ref * (-alpha * tau).exp() / c_prime, u_ref * (-beta * tau).exp() / c)
            };
            u < lo * (1.0 - slack) || u > hi * (1.0 + slack)
        })
        .count();

    Ok(RateReport {
        reference_time: t_ref,
        one_sided,
        theta,
        eta,
        alpha,
        beta,
        c,
        c_prime,
        forward_rate: forward.map(|f| -f.0),
        backward_rate: backward.map(|f| -f.0),
        forward_residual: forward.map(|f| f.2),
        backward_residual: backward.map(|f| f.2),
        samples: v.len(),
        bracket_violations,
    })
}
