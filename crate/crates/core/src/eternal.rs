//! Positive eternal solutions `w`, normalised so that `w(origin, 1) = 1`.
//!
//! Three constructions are provided, matched to the time dependence of the
//! operator:
//!
//! * [`principal_eigenpair`]: autonomous operators, `w = e^{-rate (t-1)} phi`;
//! * [`floquet_principal`]: time-periodic operators, power iteration on the
//!   one-period map;
//! * [`far_past`]: any operator, evolution from a distant past with per-step
//!   renormalisation at the origin node.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{EvolutionTrace, FieldSlice, Scheme, SourceTag, Stepper};
use crate::grid::{CylinderWindow, Grid};
use crate::linalg::LinearSolver;
use crate::operator::{assemble, CoefficientSpec, SourceSpec};

/// Reference time of the normalisation `w(origin, T_REF) = 1`.
pub const T_REF: f64 = 1.0;
pub const MAX_EIGEN_ITERS: usize = 100_000;
pub const MAX_FLOQUET_PERIODS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Eigenpair,
    Floquet,
    FarPast,
}

/// Principal eigenvalue and positive eigenvector of the spatial operator.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalPair {
    pub rate: f64,
    /// Normalised to 1 at the origin node.
    pub profile: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Inverse power iteration on the assembled operator.
///
/// The operator is a nonsingular M-matrix, so its inverse is nonnegative and
/// the dominant eigenvector of the inverse is the positive principal one.
pub fn principal_eigenpair(spec: &CoefficientSpec, grid: &Grid, tol: f64) -> Result<PrincipalPair> {
    if !spec.is_autonomous() {
        return Err(Error::NotAutonomous);
    }
    if !(tol > 0.0) {
        return Err(Error::NoConvergence {
            iterations: 0,
            increment: f64::NAN,
        });
    }
    let a = assemble(spec, grid, 0.0)?.matrix;
    let solver = LinearSolver::new(a.clone())?;
    let origin = grid.origin_node();
    let n = grid.len();
    let mut x = vec![1.0; n];
    let mut lambda = f64::INFINITY;
    let mut increment = f64::INFINITY;
    for iteration in 1..=MAX_EIGEN_ITERS {
        let y = solver.solve(&x, None)?;
        let xy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        let lambda_new = xy / yy;
        let scale = y
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(1.0);
        x = y.iter().map(|v| v / scale).collect();
        increment = (lambda_new - lambda).abs();
        lambda = lambda_new;
        if increment <= tol * lambda.abs() {
            let mut phi = x.clone();
            let pivot = phi[origin];
            if pivot == 0.0 {
                return Err(Error::SignFailure { ratio: 0.0 });
            }
            phi.iter_mut().for_each(|v| *v /= pivot);
            let aphi = a.mul_vec(&phi);
            let residual = aphi
                .iter()
                .zip(&phi)
                .map(|(l, r)| (l - lambda * r).abs())
                .fold(0.0, f64::max);
            if residual > tol * lambda.abs() {
                continue;
            }
            let min = phi.iter().copied().fold(f64::INFINITY, f64::min);
            let max = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if min <= 0.0 {
                return Err(Error::SignFailure { ratio: min / max });
            }
            return Ok(PrincipalPair {
                rate: lambda,
                profile: phi,
                iterations: iteration,
                residual,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_EIGEN_ITERS,
        increment,
    })
}

/// How a separable solution `e^{-rate t} phi` is advanced in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeModel {
    /// Exact semi-discrete flow: rate equals the eigenvalue.
    Continuous,
    /// The fully discrete flow of a time stepper: the per-step factor of
    /// the scheme applied to the eigenvector.
    Discrete { scheme: Scheme, dt: f64 },
}

impl TimeModel {
    /// Effective exponential rate for eigenvalue `lambda`.
    pub fn rate(&self, lambda: f64) -> f64 {
        match *self {
            TimeModel::Continuous => lambda,
            TimeModel::Discrete { scheme, dt } => -step_factor(scheme, dt, lambda).ln() / dt,
        }
    }
}

/// Amplification of an eigenvector with eigenvalue `lambda` over one step.
pub fn step_factor(scheme: Scheme, dt: f64, lambda: f64) -> f64 {
    match scheme {
        Scheme::ImplicitEuler => 1.0 / (1.0 + dt * lambda),
        Scheme::CrankNicolson => (1.0 - 0.5 * dt * lambda) / (1.0 + 0.5 * dt * lambda),
    }
}

#[derive(Debug, Clone)]
enum Representation {
    Separable {
        profile: Vec<f64>,
    },
    Periodic {
        period: f64,
        dt: f64,
        multiplier: f64,
        /// Slices on `[0, period]`, normalised with the global scale.
        family: Vec<Vec<f64>>,
    },
    Windowed {
        trace: EvolutionTrace,
        step_factors: Vec<f64>,
    },
}

/// A positive solution on `Omega x R` (or on a stored window for the far-past
/// route), normalised to 1 at `(origin node, T_REF)`.
#[derive(Debug, Clone)]
pub struct EternalSolution {
    pub route: Route,
    /// Exponential decay rate per unit time.
    pub rate: f64,
    grid: Arc<Grid>,
    repr: Representation,
    pub scheme: Option<Scheme>,
}

impl EternalSolution {
    pub fn from_eigenpair(grid: Arc<Grid>, pair: &PrincipalPair, model: TimeModel) -> Result<Self> {
        if pair.profile.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::NonPositiveProfile);
        }
        let origin = grid.origin_node();
        let profile: Vec<f64> = pair.profile.iter().map(|v| v / pair.profile[origin]).collect();
        let scheme = match model {
            TimeModel::Continuous => None,
            TimeModel::Discrete { scheme, .. } => Some(scheme),
        };
        Ok(Self {
            route: Route::Eigenpair,
            rate: model.rate(pair.rate),
            grid,
            repr: Representation::Separable { profile },
            scheme,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// `(start, end)` of the stored window, `None` for full-line solutions.
    pub fn window(&self) -> Option<(f64, f64)> {
        match &self.repr {
            Representation::Windowed { trace, .. } => Some((trace.t_start(), trace.t_end())),
            _ => None,
        }
    }

    /// Per-step renormalisation factors (far-past route only).
    pub fn step_factors(&self) -> Option<&[f64]> {
        match &self.repr {
            Representation::Windowed { step_factors, .. } => Some(step_factors),
            _ => None,
        }
    }

    /// Coefficient period (Floquet route only).
    pub fn period(&self) -> Option<f64> {
        match &self.repr {
            Representation::Periodic { period, .. } => Some(*period),
            _ => None,
        }
    }

    /// Per-period multiplier (Floquet route only).
    pub fn multiplier(&self) -> Option<f64> {
        match &self.repr {
            Representation::Periodic { multiplier, .. } => Some(*multiplier),
            _ => None,
        }
    }

    /// Nodal values at time `t`.
    pub fn slice_at(&self, t: f64) -> Result<Vec<f64>> {
        match &self.repr {
            Representation::Separable { profile } => {
                let s = (-self.rate * (t - T_REF)).exp();
                Ok(profile.iter().map(|v| v * s).collect())
            }
            Representation::Periodic {
                dt,
                multiplier,
                family,
                ..
            } => {
                let (q, k) = periodic_index(t, *dt, family.len() - 1)?;
                let s = multiplier.powi(q as i32);
                Ok(family[k].iter().map(|v| v * s).collect())
            }
            Representation::Windowed { trace, .. } => {
                let k = trace.index_of(t).ok_or(Error::OutsideWindow {
                    t,
                    start: trace.t_start(),
                    end: trace.t_end(),
                })?;
                Ok(trace.slice(k).to_vec())
            }
        }
    }

    pub fn value(&self, node: usize, t: f64) -> Result<f64> {
        Ok(self.slice_at(t)?[node])
    }

    /// `w(origin, T_REF)`; equals 1 up to rounding.
    pub fn normalization(&self) -> Result<f64> {
        self.value(self.grid.origin_node(), T_REF)
    }

    /// Samples the solution on a window as a homogeneous trace.
    pub fn sample(&self, window: &CylinderWindow) -> Result<EvolutionTrace> {
        if let Representation::Windowed { trace, .. } = &self.repr {
            if (window.dt - trace.dt()).abs() <= 1e-12 * window.dt {
                return trace.restrict(window.t_start, window.t_end);
            }
            return Err(Error::Incompatible("far-past solutions are sampled on their own time axis".into()));
        }
        let n = self.grid.len();
        let mut values = Vec::with_capacity(n * (window.steps + 1));
        for k in 0..=window.steps {
            values.extend(self.slice_at(window.time(k))?);
        }
        EvolutionTrace::from_parts(
            self.grid.clone(),
            window.t_start,
            window.dt,
            values,
            self.scheme.unwrap_or_default(),
            SourceTag::Zero,
        )
    }

    pub fn min_value_on(&self, window: &CylinderWindow) -> Result<f64> {
        let tr = self.sample(window)?;
        Ok(tr.raw_values().iter().copied().fold(f64::INFINITY, f64::min))
    }
}

/// Splits time `t` into `(whole periods, step within the period)`.
fn periodic_index(t: f64, dt: f64, steps: usize) -> Result<(i64, usize)> {
    let s = t / dt;
    let idx = s.round();
    if (s - idx).abs() > 1e-6 {
        return Err(Error::OutsideWindow {
            t,
            start: f64::NEG_INFINITY,
            end: f64::INFINITY,
        });
    }
    let idx = idx as i64;
    let steps = steps as i64;
    Ok((idx.div_euclid(steps), idx.rem_euclid(steps) as usize))
}

/// Floquet data of a time-periodic operator.
#[derive(Debug, Clone)]
pub struct FloquetResult {
    /// Mean decay rate `-ln(rho) / T`.
    pub mean_rate: f64,
    /// Per-period multiplier.
    pub multiplier: f64,
    pub periods: usize,
    pub solution: EternalSolution,
}

/// Power iteration on the one-period evolution map `P`.
///
/// Each sweep evolves one period with `f = 0` and renormalises to 1 at the
/// origin node; iteration stops when successive profiles agree within `tol`
/// in the max norm.
pub fn floquet_principal(
    spec: &CoefficientSpec,
    grid: &Arc<Grid>,
    period: f64,
    dt: f64,
    tol: f64,
    scheme: Scheme,
) -> Result<FloquetResult> {
    let steps_f = period / dt;
    let steps = steps_f.round();
    if !(period > 0.0) || steps < 1.0 || (steps_f - steps).abs() > 1e-9 * steps {
        return Err(Error::PeriodMismatch { period, dt });
    }
    let steps = steps as usize;
    let zero = SourceSpec::zero();
    let stepper = Stepper::new(spec, &zero, grid, dt, scheme)?;
    let origin = grid.origin_node();
    let time = |k: usize| period * k as f64 / steps as f64;

    let run_period = |u0: &[f64], keep: bool| -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let mut family = Vec::new();
        if keep {
            family.push(u0.to_vec());
        }
        let mut u = u0.to_vec();
        for k in 0..steps {
            u = stepper.advance(&u, time(k))?;
            if keep {
                family.push(u.clone());
            }
        }
        Ok((u, family))
    };

    let mut u = vec![1.0; grid.len()];
    let mut periods = 0;
    let mut change = f64::INFINITY;
    while change > tol {
        if periods >= MAX_FLOQUET_PERIODS {
            return Err(Error::NoConvergence {
                iterations: periods,
                increment: change,
            });
        }
        let (v, _) = run_period(&u, false)?;
        periods += 1;
        let pivot = v[origin];
        if !(pivot > 0.0) {
            return Err(Error::NonPositiveProfile);
        }
        let v: Vec<f64> = v.iter().map(|x| x / pivot).collect();
        change = v.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        u = v;
    }
    let (end, family) = run_period(&u, true)?;
    let multiplier = end[origin];
    if !(multiplier > 0.0) || family.iter().flatten().any(|&v| !(v > 0.0)) {
        return Err(Error::NonPositiveProfile);
    }
    // normalise so that w(origin, T_REF) = 1
    let (q, k) = periodic_index(T_REF, dt, steps)?;
    let scale = 1.0 / (multiplier.powi(q as i32) * family[k][origin]);
    let family: Vec<Vec<f64>> = family
        .into_iter()
        .map(|s| s.into_iter().map(|v| v * scale).collect())
        .collect();
    let mean_rate = -multiplier.ln() / period;
    Ok(FloquetResult {
        mean_rate,
        multiplier,
        periods,
        solution: EternalSolution {
            route: Route::Floquet,
            rate: mean_rate,
            grid: grid.clone(),
            repr: Representation::Periodic {
                period,
                dt,
                multiplier,
                family,
            },
            scheme: Some(scheme),
        },
    })
}

/// Options of the far-past construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FarPastOptions {
    pub t_back: f64,
    /// Upper limit of the automatic doubling of `t_back`.
    pub max_t_back: f64,
    pub seed_tol: f64,
    pub scheme: Scheme,
    /// Seed used by the internal two-seed check; defaults to a constant slice.
    pub check_seed: Option<Vec<f64>>,
}

impl Default for FarPastOptions {
    fn default() -> Self {
        Self {
            t_back: 20.0,
            max_t_back: 80.0,
            seed_tol: 1e-6,
            scheme: Scheme::ImplicitEuler,
            check_seed: None,
        }
    }
}

/// Result of one far-past run from one seed.
struct FarPastRun {
    trace: EvolutionTrace,
    step_factors: Vec<f64>,
}

fn far_past_single(
    spec: &CoefficientSpec,
    grid: &Arc<Grid>,
    t_back: f64,
    window: &CylinderWindow,
    seed: &[f64],
    scheme: Scheme,
) -> Result<FarPastRun> {
    let dt = window.dt;
    let begin = window.t_start - t_back;
    let lead_f = t_back / dt;
    let lead = lead_f.round();
    if (lead_f - lead).abs() > 1e-9 * lead.max(1.0) {
        return Err(Error::InvalidWindow(format!(
            "T_back = {t_back} is not a multiple of dt = {dt}"
        )));
    }
    let lead = lead as usize;
    let ref_f = (T_REF - begin) / dt;
    let ref_step = ref_f.round();
    if ref_step < 0.0 || (ref_f - ref_step).abs() > 1e-6 {
        return Err(Error::InvalidWindow(format!(
            "normalisation time {T_REF} is not on the time axis starting at {begin} with dt = {dt}"
        )));
    }
    let ref_step = ref_step as usize;
    let last_step = (lead + window.steps).max(ref_step);

    let zero = SourceSpec::zero();
    let stepper = Stepper::new(spec, &zero, grid, dt, scheme)?;
    let origin = grid.origin_node();
    let n = grid.len();

    let mut u: Vec<f64> = seed.to_vec();
    let pivot = u[origin];
    if !(pivot > 0.0) {
        return Err(Error::NonPositiveProfile);
    }
    u.iter_mut().for_each(|v| *v /= pivot);
    // log of the accumulated amplification since `begin`
    let mut log_amp = 0.0;
    let mut log_amp_ref = if ref_step == 0 { Some(0.0) } else { None };
    let mut stored = Vec::with_capacity(n * (window.steps + 1));
    let mut logs = Vec::with_capacity(window.steps + 1);
    let mut step_factors = Vec::with_capacity(window.steps);
    if lead == 0 {
        stored.extend_from_slice(&u);
        logs.push(0.0);
    }
    for k in 0..last_step {
        let t = begin + k as f64 * dt;
        let mut v = stepper.advance(&u, t).map_err(|e| Error::StepFailed {
            step: k,
            reason: e.to_string(),
        })?;
        let factor = v[origin];
        if !(factor > 0.0) {
            return Err(Error::NonPositiveProfile);
        }
        v.iter_mut().for_each(|x| *x /= factor);
        log_amp += factor.ln();
        u = v;
        let step_no = k + 1;
        if step_no == ref_step {
            log_amp_ref = Some(log_amp);
        }
        if step_no >= lead && step_no <= lead + window.steps {
            stored.extend_from_slice(&u);
            logs.push(log_amp);
            if step_no > lead {
                step_factors.push(factor);
            }
        }
    }
    let log_ref = log_amp_ref.expect("reference step reached");
    for (k, l) in logs.iter().enumerate() {
        let s = (l - log_ref).exp();
        stored[k * n..(k + 1) * n].iter_mut().for_each(|v| *v *= s);
    }
    if stored.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::NonPositiveProfile);
    }
    let trace = EvolutionTrace::from_parts(grid.clone(), window.t_start, dt, stored, scheme, SourceTag::Zero)?;
    Ok(FarPastRun { trace, step_factors })
}

/// Largest per-slice relative max-norm difference of two traces.
pub fn relative_trace_difference(a: &EvolutionTrace, b: &EvolutionTrace) -> f64 {
    a.slices()
        .zip(b.slices())
        .map(|(x, y)| {
            let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let diff = x.iter().zip(y).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
            if scale > 0.0 {
                diff / scale
            } else {
                diff
            }
        })
        .fold(0.0, f64::max)
}

/// Far-past construction on `window`: evolve from `window.t_start - t_back`
/// with renormalisation at the origin node, then rescale to `w(origin, 1) = 1`.
///
/// A second run from an independent seed must agree within `seed_tol`;
/// otherwise `t_back` is doubled up to `max_t_back`.
pub fn far_past(
    spec: &CoefficientSpec,
    grid: &Arc<Grid>,
    window: &CylinderWindow,
    seed: &FieldSlice,
    opts: &FarPastOptions,
) -> Result<EternalSolution> {
    if seed.values.len() != grid.len() {
        return Err(Error::SliceLength {
            got: seed.values.len(),
            expected: grid.len(),
        });
    }
    if seed.values.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::NonPositiveProfile);
    }
    if !(opts.t_back >= window.length()) {
        return Err(Error::InvalidWindow(format!(
            "T_back = {} must be at least the window length {}",
            opts.t_back,
            window.length()
        )));
    }
    let check_seed = match &opts.check_seed {
        Some(s) => s.clone(),
        None => default_check_seed(&seed.values, grid.origin_node()),
    };
    let mut t_back = opts.t_back;
    loop {
        let (primary, secondary) = rayon::join(
            || far_past_single(spec, grid, t_back, window, &seed.values, opts.scheme),
            || far_past_single(spec, grid, t_back, window, &check_seed, opts.scheme),
        );
        let (primary, secondary) = (primary?, secondary?);
        let difference = relative_trace_difference(&primary.trace, &secondary.trace);
        if difference <= opts.seed_tol {
            let tail = primary.step_factors.len() / 4;
            let rates: Vec<f64> = primary.step_factors[primary.step_factors.len() - tail.max(1)..]
                .iter()
                .map(|f| -f.ln() / window.dt)
                .collect();
            let rate = rates.iter().sum::<f64>() / rates.len() as f64;
            return Ok(EternalSolution {
                route: Route::FarPast,
                rate,
                grid: grid.clone(),
                repr: Representation::Windowed {
                    trace: primary.trace,
                    step_factors: primary.step_factors,
                },
                scheme: Some(opts.scheme),
            });
        }
        if 2.0 * t_back > opts.max_t_back {
            return Err(Error::SeedSensitivity {
                difference,
                tolerance: opts.seed_tol,
                t_back,
            });
        }
        t_back *= 2.0;
    }
}

fn default_check_seed(seed: &[f64], origin: usize) -> Vec<f64> {
    let pivot = seed[origin];
    let flat = seed.iter().all(|v| (v / pivot - 1.0).abs() < 1e-9);
    if flat {
        (0..seed.len()).map(|i| 1.0 + 0.5 * (i as f64).sin()).collect()
    } else {
        vec![1.0; seed.len()]
    }
}
