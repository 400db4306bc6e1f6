use serde::{Deserialize, Serialize};

use super::linear_fit;
use crate::error::{Error, Result};
use crate::evolution::{sup_profile, EvolutionTrace, SourceTag};
use crate::operator::{slab_norm, sliding_norm, SourceSpec};

fn check_source(trace: &EvolutionTrace, f: &SourceSpec) -> Result<()> {
    if SourceTag::of(f) != trace.source {
        return Err(Error::Incompatible(format!(
            "trace was produced with source {:?} but {:?} was supplied",
            trace.source,
            SourceTag::of(f)
        )));
    }
    Ok(())
}

/// Measured one-step decay `u_hat(t0 + 1) <= (1 - delta) u_hat(t0)`, or the
/// affine version with a source term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub t0: Vec<f64>,
    /// `u_hat(t0 + 1) / u_hat(t0)`; `None` where `u_hat(t0) = 0`.
    pub ratios: Vec<Option<f64>>,
    /// Slab norms of `f` over `(t0, t0 + 2)`; all zero when `f = 0`.
    pub slab_norms: Vec<f64>,
    /// Steps skipped because `u_hat(t0) = 0` (trivially satisfied).
    pub trivial_steps: usize,
    /// `None` when every step was trivial.
    pub delta: Option<f64>,
    /// Coefficient of the slab norm in the affine bound.
    pub source_coefficient: Option<f64>,
    pub violations: usize,
}

/// One-step decay over each integer `t0` with `(t0, t0 + 2)` inside the
/// trace. Needs at least three time units.
pub fn check_decay_step(trace: &EvolutionTrace, f: &SourceSpec) -> Result<DecayReport> {
    check_source(trace, f)?;
    let length = trace.t_end() - trace.t_start();
    if length < 3.0 - 1e-9 {
        return Err(Error::WindowTooShort {
            length,
            required: 3.0,
        });
    }
    let profile = sup_profile(trace)?;
    let first = trace.t_start().ceil() as i64;
    let last = (trace.t_end() - 2.0 + 1e-9).floor() as i64;
    let mut t0s = Vec::new();
    let mut pairs = Vec::new();
    let mut norms = Vec::new();
    for t0 in first..=last {
        let t0 = t0 as f64;
        let (Some(a), Some(b)) = (trace.index_of(t0), trace.index_of(t0 + 1.0)) else {
            return Err(Error::InvalidWindow(format!(
                "integer time {t0} is not on the trace time axis"
            )));
        };
        t0s.push(t0);
        pairs.push((profile.values[a], profile.values[b]));
        norms.push(slab_norm(f, t0, trace.grid(), trace.dt())?);
    }
    let ratios: Vec<Option<f64>> = pairs
        .iter()
        .map(|&(a, b)| (a > 0.0).then(|| b / a))
        .collect();
    let trivial_steps = ratios.iter().filter(|r| r.is_none()).count();

    let (delta, source_coefficient, violations) = if f.is_zero() {
        let worst = ratios.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        let delta = worst.is_finite().then_some(1.0 - worst);
        let violations = match delta {
            Some(d) if d > 0.0 => 0,
            Some(_) => ratios.iter().flatten().filter(|&&r| r >= 1.0).count(),
            None => 0,
        };
        (delta, None, violations)
    } else {
        let (p, q) = affine_bound(&pairs, &norms);
        let violations = pairs
            .iter()
            .zip(&norms)
            .filter(|(&(a, b), &s)| b > p * a + q * s + 1e-12 * b.abs().max(1.0))
            .count();
        (Some(1.0 - p), Some(q), violations)
    };
    Ok(DecayReport {
        t0: t0s,
        ratios,
        slab_norms: norms,
        trivial_steps,
        delta,
        source_coefficient,
        violations,
    })
}

/// Least-squares `b ~ p a + q s`, with `q` then raised until the bound holds
/// at every sample.
fn affine_bound(pairs: &[(f64, f64)], norms: &[f64]) -> (f64, f64) {
    let (mut saa, mut sas, mut sss, mut sab, mut ssb) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&(a, b), &s) in pairs.iter().zip(norms) {
        saa += a * a;
        sas += a * s;
        sss += s * s;
        sab += a * b;
        ssb += s * b;
    }
    let det = saa * sss - sas * sas;
    let p = if det.abs() > 1e-12 * (saa * sss).max(f64::MIN_POSITIVE) {
        ((sab * sss - ssb * sas) / det).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = pairs
        .iter()
        .zip(norms)
        .filter(|(_, &s)| s > 0.0)
        .map(|(&(a, b), &s)| (b - p * a) / s)
        .fold(0.0f64, f64::max);
    (p, q)
}

/// Which part of the parabolic boundary carries data for the maximum
/// principle check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxPrincipleScope {
    /// The whole cylinder: the lateral boundary is the only boundary.
    FullQ,
    /// A forward cylinder whose bottom is the first slice of the trace.
    QPlus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleReport {
    pub scope: MaxPrincipleScope,
    pub sup_u_plus: f64,
    pub boundary_sup_plus: f64,
    pub source_norm: f64,
    /// `(sup u+ - boundary sup) / ||f||`, when `f` is nonzero.
    pub empirical_constant: Option<f64>,
    pub passed: bool,
}

/// `sup u+ <= sup_boundary u+ + C ||f||`. With `f = 0` the bound must hold
/// with no slack; otherwise the constant is measured.
pub fn check_max_principle(
    trace: &EvolutionTrace,
    f: &SourceSpec,
    scope: MaxPrincipleScope,
) -> Result<MaxPrincipleReport> {
    check_source(trace, f)?;
    let sup_u_plus = trace.raw_values().iter().fold(0.0f64, |m, &v| m.max(v));
    let boundary_sup_plus = match scope {
        MaxPrincipleScope::FullQ => 0.0,
        MaxPrincipleScope::QPlus => trace.slice(0).iter().fold(0.0f64, |m, &v| m.max(v)),
    };
    let (source_norm, empirical_constant, passed) = if f.is_zero() {
        let passed = sup_u_plus <= boundary_sup_plus * (1.0 + 1e-12) + 1e-14;
        (0.0, None, passed)
    } else {
        let norm = sliding_norm(f, (trace.t_start(), trace.t_end()), trace.grid(), trace.dt())?;
        let excess = (sup_u_plus - boundary_sup_plus).max(0.0);
        let c = (norm > 0.0).then(|| excess / norm);
        (norm, c, c.is_some_and(f64::is_finite))
    };
    Ok(MaxPrincipleReport {
        scope,
        sup_u_plus,
        boundary_sup_plus,
        source_norm,
        empirical_constant,
        passed,
    })
}

/// Forward-cylinder envelope `u_hat(t) <= C0 e^{-alpha (t - t0)} u_hat(t0) + C1 ||f||`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QPlusEnvelopeReport {
    pub t0: f64,
    pub u_hat0: f64,
    /// Plateau value approached by `u_hat`; zero when `f = 0`.
    pub floor: f64,
    pub source_norm: f64,
    pub c1: Option<f64>,
    pub alpha: f64,
    /// Constant from the log-linear fit.
    pub c0_fit: f64,
    /// Smallest constant making the envelope hold at every sample.
    pub c0: f64,
    pub fit_residual: f64,
}

/// Fits the forward-cylinder envelope. The first time unit is excluded from
/// the fit; with a source the trace must have settled onto its plateau.
pub fn check_decay_qplus(trace: &EvolutionTrace, f: &SourceSpec) -> Result<QPlusEnvelopeReport> {
    check_source(trace, f)?;
    let profile = sup_profile(trace)?;
    let t0 = trace.t_start();
    let length = trace.t_end() - t0;
    if length < 3.0 - 1e-9 {
        return Err(Error::WindowTooShort {
            length,
            required: 3.0,
        });
    }
    let u_hat0 = profile.values[0];
    let n = profile.len();
    let source_norm = if f.is_zero() {
        0.0
    } else {
        sliding_norm(f, (t0, trace.t_end()), trace.grid(), trace.dt())?
    };
    let vmax = profile.values.iter().copied().fold(0.0f64, f64::max);
    if vmax == 0.0 {
        return Ok(QPlusEnvelopeReport {
            t0,
            u_hat0,
            floor: 0.0,
            source_norm,
            c1: (source_norm > 0.0).then_some(0.0),
            alpha: 0.0,
            c0_fit: 0.0,
            c0: 0.0,
            fit_residual: 0.0,
        });
    }

    let floor = if f.is_zero() {
        0.0
    } else {
        let end = profile.values[n - 1];
        let quarter = profile.values[n - 1 - (n - 1) / 4];
        let spread = (u_hat0 - end).abs().max(end.abs());
        if (end - quarter).abs() > 1e-3 * spread {
            return Err(Error::PlateauNotReached);
        }
        end
    };
    let c1 = (source_norm > 0.0).then(|| floor / source_norm);

    let fit_end = if f.is_zero() { trace.t_end() } else { t0 + 1.0 + (length - 1.0) / 2.0 };
    let base = profile.values[profile.index_of(t0 + 1.0).unwrap_or(0)];
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in profile.times.iter().zip(&profile.values) {
        let excess = (v - floor).abs();
        if t < t0 + 1.0 - 1e-9 || t > fit_end + 1e-9 || excess <= 1e-10 * (base - floor).abs() {
            continue;
        }
        xs.push(t - t0);
        ys.push(excess.ln());
    }
    let scale = if u_hat0 > 0.0 { u_hat0 } else { vmax };
    let (alpha, c0_fit, fit_residual) = match linear_fit(&xs, &ys) {
        Some((slope, intercept, rms)) => (-slope, intercept.exp() / scale, rms),
        None => (0.0, 1.0, 0.0),
    };
    let c0 = profile
        .times
        .iter()
        .zip(&profile.values)
        .map(|(&t, &v)| (v - floor).max(0.0) * (alpha * (t - t0)).exp() / scale)
        .fold(0.0f64, f64::max);
    Ok(QPlusEnvelopeReport {
        t0,
        u_hat0,
        floor,
        source_norm,
        c1,
        alpha,
        c0_fit,
        c0,
        fit_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{evolve, FieldSlice, Scheme};
    use crate::grid::{build_grid, CylinderWindow, SpatialDomain};
    use crate::operator::CoefficientSpec;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn grid() -> Arc<crate::grid::Grid> {
        Arc::new(build_grid(&SpatialDomain::interval(-PI / 2.0, PI / 2.0).unwrap(), PI / 40.0).unwrap())
    }

    fn run(f: &SourceSpec, init: impl Fn(&[f64]) -> f64, window: (f64, f64)) -> EvolutionTrace {
        let g = grid();
        let w = CylinderWindow::new(window.0, window.1, 0.01).unwrap();
        let u0 = FieldSlice::from_fn(&g, window.0, init);
        evolve(&CoefficientSpec::heat(1), f, &g, &u0, &w, Scheme::ImplicitEuler).unwrap()
    }

    #[test]
    fn heat_mode_decays_by_exp_minus_rate() {
        let tr = run(&SourceSpec::zero(), |y| y[0].cos(), (0.0, 5.0));
        let r = check_decay_step(&tr, &SourceSpec::zero()).unwrap();
        assert_eq!(r.t0, vec![0.0, 1.0, 2.0, 3.0]);
        let d = r.delta.unwrap();
        assert!((d - (1.0 - (-1.0f64).exp())).abs() < 0.01, "{d}");
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn zero_solution_is_trivial() {
        let tr = run(&SourceSpec::zero(), |_| 0.0, (0.0, 4.0));
        let r = check_decay_step(&tr, &SourceSpec::zero()).unwrap();
        assert_eq!(r.trivial_steps, r.t0.len());
        assert!(r.delta.is_none());
        let q = check_decay_qplus(&tr, &SourceSpec::zero()).unwrap();
        assert_eq!((q.c0, q.alpha, q.floor), (0.0, 0.0, 0.0));
    }

    #[test]
    fn short_window_rejected() {
        let tr = run(&SourceSpec::zero(), |y| y[0].cos(), (0.0, 2.0));
        assert!(matches!(
            check_decay_step(&tr, &SourceSpec::zero()),
            Err(Error::WindowTooShort { .. })
        ));
    }

    #[test]
    fn source_mismatch_rejected() {
        let tr = run(&SourceSpec::zero(), |y| y[0].cos(), (0.0, 4.0));
        let f = SourceSpec::new("cos(y)".parse().unwrap());
        assert!(matches!(check_decay_step(&tr, &f), Err(Error::Incompatible(_))));
    }

    #[test]
    fn forced_affine_bound_holds() {
        let f = SourceSpec::new("cos(y)".parse().unwrap());
        let tr = run(&f, |_| 0.0, (0.0, 6.0));
        let r = check_decay_step(&tr, &f).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.source_coefficient.unwrap() > 0.0);
    }

    #[test]
    fn max_principle_homogeneous() {
        let tr = run(&SourceSpec::zero(), |y| y[0].cos(), (0.0, 3.0));
        let r = check_max_principle(&tr, &SourceSpec::zero(), MaxPrincipleScope::QPlus).unwrap();
        assert!(r.passed);
        let r = check_max_principle(&tr, &SourceSpec::zero(), MaxPrincipleScope::FullQ).unwrap();
        assert!(!r.passed);
    }

    #[test]
    fn qplus_rate_matches_mode() {
        let tr = run(&SourceSpec::zero(), |y| y[0].cos(), (0.0, 8.0));
        let r = check_decay_qplus(&tr, &SourceSpec::zero()).unwrap();
        assert!((r.alpha - 1.0).abs() < 0.01, "{}", r.alpha);
        assert!(r.c0 >= r.c0_fit * (1.0 - 1e-9));
    }

    #[test]
    fn qplus_needs_plateau() {
        let f = SourceSpec::new("cos(y)".parse().unwrap());
        let tr = run(&f, |_| 0.0, (0.0, 3.0));
        assert!(matches!(check_decay_qplus(&tr, &f), Err(Error::PlateauNotReached)));
        let tr = run(&f, |_| 0.0, (0.0, 20.0));
        let r = check_decay_qplus(&tr, &f).unwrap();
        assert!((r.floor - 1.0).abs() < 0.01);
        assert!((r.alpha - 1.0).abs() < 0.02, "{}", r.alpha);
    }
}
