//! Measured counterparts of the structural estimates: one-step decay, maximum
//! principles, rate brackets, comparison constants, the `K_j / L_j`
//! contraction and proportionality of positive solutions.
//!
//! Every report serialises to JSON; series go to CSV through [`crate::io`].

mod comparison;
mod contraction;
mod decay;
mod rates;

pub use comparison::{comparison_constant, proportionality, proportionality_traces, ComparisonReport, ScaleReport};
pub use contraction::{kl_contraction, kl_contraction_traces, ContractionReport, DEFAULT_TAIL};
pub use decay::{
    check_decay_qplus, check_decay_step, check_max_principle, DecayReport, MaxPrincipleReport, MaxPrincipleScope,
    QPlusEnvelopeReport,
};
pub use rates::{fit_rates, RateReport};

/// Ordinary least squares `y = slope * x + intercept`, returning
/// `(slope, intercept, rms residual)`.
pub(crate) fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    Some((slope, intercept, (rss / nf).sqrt()))
}
