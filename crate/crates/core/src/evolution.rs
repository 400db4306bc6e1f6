//! Implicit time stepping of `u_t + A(t) u = f` with zero lateral data, and
//! the sup-profile `u_hat(t) = max_y u(y, t)^+`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CylinderWindow, Grid};
use crate::linalg::{Csr, LinearSolver};
use crate::operator::{assemble, CoefficientSpec, SourceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    ImplicitEuler,
    CrankNicolson,
}

/// Nodal values of `u(., t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSlice {
    pub t: f64,
    pub values: Vec<f64>,
}

impl FieldSlice {
    pub fn new(t: f64, values: Vec<f64>) -> Self {
        Self { t, values }
    }

    pub fn zeros(grid: &Grid, t: f64) -> Self {
        Self::new(t, vec![0.0; grid.len()])
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(grid: &Grid, t: f64, f: F) -> Self {
        Self::new(t, grid.sample(f))
    }

    pub fn sup_positive(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v))
    }
}

/// Whether the trace was driven by a source term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "expr", rename_all = "snake_case")]
pub enum SourceTag {
    Zero,
    Forced(String),
}

impl SourceTag {
    pub fn of(f: &SourceSpec) -> Self {
        if f.is_zero() {
            Self::Zero
        } else {
            Self::Forced(f.f.to_string())
        }
    }
}

/// Time-ordered slices at uniform spacing on one grid.
#[derive(Debug, Clone)]
pub struct EvolutionTrace {
    grid: Arc<Grid>,
    t0: f64,
    dt: f64,
    values: Vec<f64>,
    pub scheme: Scheme,
    pub source: SourceTag,
}

impl EvolutionTrace {
    /// Assembles a trace from flat row-major slice data.
    pub fn from_parts(
        grid: Arc<Grid>,
        t0: f64,
        dt: f64,
        values: Vec<f64>,
        scheme: Scheme,
        source: SourceTag,
    ) -> Result<Self> {
        let n = grid.len();
        if values.is_empty() || !values.len().is_multiple_of(n) {
            return Err(Error::SliceLength {
                got: values.len(),
                expected: n,
            });
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidWindow(format!("dt must be positive, got {dt}")));
        }
        Ok(Self {
            grid,
            t0,
            dt,
            values,
            scheme,
            source,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn t_start(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.len() - 1)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.time(k))
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn field_slice(&self, k: usize) -> FieldSlice {
        FieldSlice::new(self.time(k), self.slice(k).to_vec())
    }

    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.grid.len())
    }

    pub fn value(&self, node: usize, k: usize) -> f64 {
        self.values[k * self.grid.len() + node]
    }

    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_homogeneous(&self) -> bool {
        self.source == SourceTag::Zero
    }

    /// Index of the sample at time `t`, if `t` lies on the time axis.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let s = (t - self.t0) / self.dt;
        let k = s.round();
        if k < 0.0 || (s - k).abs() > 1e-6 || k as usize >= self.len() {
            None
        } else {
            Some(k as usize)
        }
    }

    /// Sub-trace over `[t_a, t_b]` (both on the time axis).
    pub fn restrict(&self, t_a: f64, t_b: f64) -> Result<Self> {
        let outside = |t: f64| Error::OutsideWindow {
            t,
            start: self.t_start(),
            end: self.t_end(),
        };
        let a = self.index_of(t_a).ok_or_else(|| outside(t_a))?;
        let b = self.index_of(t_b).ok_or_else(|| outside(t_b))?;
        let n = self.grid.len();
        Ok(Self {
            grid: self.grid.clone(),
            t0: self.time(a),
            dt: self.dt,
            values: self.values[a * n..(b + 1) * n].to_vec(),
            scheme: self.scheme,
            source: self.source.clone(),
        })
    }

    /// Every `stride`-th slice, starting with the first.
    pub fn subsample(&self, stride: usize) -> Self {
        let stride = stride.max(1);
        let n = self.grid.len();
        let mut values = Vec::with_capacity(self.values.len() / stride + n);
        for k in (0..self.len()).step_by(stride) {
            values.extend_from_slice(self.slice(k));
        }
        Self {
            grid: self.grid.clone(),
            t0: self.t0,
            dt: self.dt * stride as f64,
            values,
            scheme: self.scheme,
            source: self.source.clone(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `self + s * other` on a shared time axis.
    pub fn axpy(&self, s: f64, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (v, w) in out.values.iter_mut().zip(&other.values) {
            *v += s * w;
        }
        Ok(out)
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.grid.len() != other.grid.len() || self.grid.h() != other.grid.h() {
            return Err(Error::Incompatible("different grids".into()));
        }
        if self.len() != other.len()
            || (self.dt - other.dt).abs() > 1e-12 * self.dt
            || (self.t0 - other.t0).abs() > 1e-9
        {
            return Err(Error::Incompatible(format!(
                "time axes differ: [{}, {}]/{} vs [{}, {}]/{}",
                self.t_start(),
                self.t_end(),
                self.dt,
                other.t_start(),
                other.t_end(),
                other.dt
            )));
        }
        Ok(())
    }
}

/// Prepared single-step integrator. Autonomous operators are assembled and
/// factorised once.
pub struct Stepper<'a> {
    spec: &'a CoefficientSpec,
    source: &'a SourceSpec,
    grid: &'a Grid,
    dt: f64,
    scheme: Scheme,
    cached: Option<(Csr, LinearSolver)>,
}

impl<'a> Stepper<'a> {
    pub fn new(
        spec: &'a CoefficientSpec,
        source: &'a SourceSpec,
        grid: &'a Grid,
        dt: f64,
        scheme: Scheme,
    ) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidWindow(format!("dt must be positive, got {dt}")));
        }
        let cached = if spec.is_autonomous() {
            let a = assemble(spec, grid, 0.0)?.matrix;
            let m = Self::implicit_matrix(&a, dt, scheme);
            Some((a, LinearSolver::new(m)?))
        } else {
            None
        };
        Ok(Self {
            spec,
            source,
            grid,
            dt,
            scheme,
            cached,
        })
    }

    fn implicit_matrix(a: &Csr, dt: f64, scheme: Scheme) -> Csr {
        match scheme {
            Scheme::ImplicitEuler => a.shifted(1.0, dt),
            Scheme::CrankNicolson => a.shifted(1.0, 0.5 * dt),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances `u_old` from `t_old` to `t_old + dt`.
    pub fn advance(&self, u_old: &[f64], t_old: f64) -> Result<Vec<f64>> {
        let dt = self.dt;
        let t_new = t_old + dt;
        let mut rhs = match self.scheme {
            Scheme::ImplicitEuler => u_old.to_vec(),
            Scheme::CrankNicolson => {
                let a_old = match &self.cached {
                    Some((a, _)) => a.mul_vec(u_old),
                    None => assemble(self.spec, self.grid, t_old)?.matrix.mul_vec(u_old),
                };
                u_old.iter().zip(&a_old).map(|(u, au)| u - 0.5 * dt * au).collect()
            }
        };
        if !self.source.is_zero() {
            let tf = match self.scheme {
                Scheme::ImplicitEuler => t_new,
                Scheme::CrankNicolson => t_old + 0.5 * dt,
            };
            for (r, y) in rhs.iter_mut().zip(self.grid.nodes()) {
                *r += dt * self.source.eval(y, tf);
            }
        }
        match &self.cached {
            Some((_, solver)) => solver.solve(&rhs, Some(u_old)),
            None => {
                let a = assemble(self.spec, self.grid, t_new)?.matrix;
                LinearSolver::new(Self::implicit_matrix(&a, dt, self.scheme))?.solve(&rhs, Some(u_old))
            }
        }
    }
}

/// One implicit step:
///
/// * implicit Euler: `(I + dt A(t+dt)) u_new = u_old + dt f(t+dt)`
/// * Crank-Nicolson: `(I + dt/2 A(t+dt)) u_new = (I - dt/2 A(t)) u_old + dt f(t+dt/2)`
pub fn step(
    spec: &CoefficientSpec,
    f: &SourceSpec,
    grid: &Grid,
    slice: &FieldSlice,
    dt: f64,
    scheme: Scheme,
) -> Result<FieldSlice> {
    if slice.values.len() != grid.len() {
        return Err(Error::SliceLength {
            got: slice.values.len(),
            expected: grid.len(),
        });
    }
    let stepper = Stepper::new(spec, f, grid, dt, scheme)?;
    let values = stepper.advance(&slice.values, slice.t)?;
    Ok(FieldSlice::new(slice.t + dt, values))
}

/// Integrates over the window, returning `window.steps + 1` slices.
pub fn evolve(
    spec: &CoefficientSpec,
    f: &SourceSpec,
    grid: &Arc<Grid>,
    initial: &FieldSlice,
    window: &CylinderWindow,
    scheme: Scheme,
) -> Result<EvolutionTrace> {
    if (initial.t - window.t_start).abs() > 1e-9 * window.length().max(1.0) {
        return Err(Error::InitialTimeMismatch {
            slice: initial.t,
            window: window.t_start,
        });
    }
    if initial.values.len() != grid.len() {
        return Err(Error::SliceLength {
            got: initial.values.len(),
            expected: grid.len(),
        });
    }
    let stepper = Stepper::new(spec, f, grid, window.dt, scheme)?;
    let n = grid.len();
    let mut values = Vec::with_capacity(n * (window.steps + 1));
    values.extend_from_slice(&initial.values);
    let mut u = initial.values.clone();
    for k in 0..window.steps {
        u = stepper
            .advance(&u, window.time(k))
            .map_err(|e| Error::StepFailed {
                step: k,
                reason: e.to_string(),
            })?;
        values.extend_from_slice(&u);
    }
    EvolutionTrace::from_parts(
        grid.clone(),
        window.t_start,
        window.dt,
        values,
        scheme,
        SourceTag::of(f),
    )
}

/// `u_hat(t)` samples with `m(u) = min u_hat` over the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupProfile {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub m_u: f64,
    pub homogeneous: bool,
}

impl SupProfile {
    /// Builds a profile from explicit samples; negative entries are clipped.
    pub fn from_series(times: Vec<f64>, values: Vec<f64>, homogeneous: bool) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::EmptyTrace);
        }
        let values: Vec<f64> = values.into_iter().map(|v| v.max(0.0)).collect();
        let m_u = values.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self {
            times,
            values,
            m_u,
            homogeneous,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Uniform sample spacing (first gap).
    pub fn dt(&self) -> Option<f64> {
        (self.times.len() > 1).then(|| self.times[1] - self.times[0])
    }

    pub fn index_of(&self, t: f64) -> Option<usize> {
        let dt = self.dt()?;
        let s = (t - self.times[0]) / dt;
        let k = s.round();
        (k >= 0.0 && (s - k).abs() <= 1e-6 && (k as usize) < self.len()).then_some(k as usize)
    }

    pub fn value_at(&self, t: f64) -> Option<f64> {
        self.index_of(t).map(|k| self.values[k])
    }
}

pub fn sup_profile(trace: &EvolutionTrace) -> Result<SupProfile> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let values = trace
        .slices()
        .map(|s| s.iter().fold(0.0f64, |m, &v| m.max(v)))
        .collect();
    SupProfile::from_series(trace.times().collect(), values, trace.is_homogeneous())
}

/// Options for [`profile_checks`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileCheckOptions {
    /// Minimum relative decrease per sample counted as strict.
    pub tol: f64,
    /// `u_hat(t_end) <= eps_tail * u_hat(t_start)` flags `m(u) -> 0`.
    pub eps_tail: f64,
}

impl Default for ProfileCheckOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            eps_tail: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub samples: usize,
    pub strictly_decreasing: bool,
    pub violations: usize,
    pub first_violation: Option<f64>,
    /// Sampled modulus of continuity `max |u_hat(t+dt) - u_hat(t)|`.
    pub omega: f64,
    pub dt: f64,
    pub tail_ratio: f64,
    pub m_u: f64,
    pub tail_to_zero: bool,
}

/// Monotonicity and continuity diagnostics of a homogeneous sup-profile.
///
/// A step counts as strictly decreasing when
/// `u_hat(t + dt) < (1 - tol) u_hat(t)`.
pub fn profile_checks(profile: &SupProfile, opts: ProfileCheckOptions) -> Result<ProfileReport> {
    if !profile.homogeneous {
        return Err(Error::NotHomogeneous);
    }
    if profile.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let v = &profile.values;
    let mut violations = 0;
    let mut first_violation = None;
    let mut omega = 0.0f64;
    for k in 1..v.len() {
        omega = omega.max((v[k] - v[k - 1]).abs());
        if !(v[k] < v[k - 1] * (1.0 - opts.tol)) {
            violations += 1;
            first_violation.get_or_insert(profile.times[k]);
        }
    }
    let (first, last) = (v[0], v[v.len() - 1]);
    let tail_ratio = if first > 0.0 { last / first } else { f64::NAN };
    Ok(ProfileReport {
        samples: v.len(),
        strictly_decreasing: violations == 0,
        violations,
        first_violation,
        omega,
        dt: profile.dt().unwrap_or(0.0),
        tail_ratio,
        m_u: profile.m_u,
        tail_to_zero: last <= opts.eps_tail * first,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, SpatialDomain};
    use crate::expr::Expr;
    use std::f64::consts::PI;

    fn line(h: f64) -> Arc<Grid> {
        Arc::new(build_grid(&SpatialDomain::interval(-PI / 2.0, PI / 2.0).unwrap(), h).unwrap())
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let g = line(PI / 20.0);
        let spec = CoefficientSpec::heat(1);
        let s = step(&spec, &SourceSpec::zero(), &g, &FieldSlice::zeros(&g, 0.0), 0.1, Scheme::ImplicitEuler).unwrap();
        assert!(s.values.iter().all(|&v| v == 0.0));
        assert!((s.t - 0.1).abs() < 1e-15);
    }

    #[test]
    fn initial_time_must_match() {
        let g = line(PI / 20.0);
        let w = CylinderWindow::new(0.0, 1.0, 0.1).unwrap();
        let r = evolve(&CoefficientSpec::heat(1), &SourceSpec::zero(), &g, &FieldSlice::zeros(&g, 0.5), &w, Scheme::ImplicitEuler);
        assert!(matches!(r, Err(Error::InitialTimeMismatch { .. })));
    }

    #[test]
    fn negative_trace_has_zero_profile() {
        let g = line(PI / 20.0);
        let w = CylinderWindow::new(0.0, 1.0, 0.1).unwrap();
        let init = FieldSlice::from_fn(&g, 0.0, |y| -y[0].cos());
        let tr = evolve(&CoefficientSpec::heat(1), &SourceSpec::zero(), &g, &init, &w, Scheme::ImplicitEuler).unwrap();
        let p = sup_profile(&tr).unwrap();
        assert!(p.values.iter().all(|&v| v == 0.0));
        assert_eq!(p.m_u, 0.0);
    }

    #[test]
    fn profile_checks_flags_constant_and_forced() {
        let times: Vec<f64> = (0..10).map(|k| k as f64 * 0.1).collect();
        let flat = SupProfile::from_series(times.clone(), vec![1.0; 10], true).unwrap();
        let r = profile_checks(&flat, ProfileCheckOptions::default()).unwrap();
        assert!(!r.strictly_decreasing);
        assert_eq!(r.violations, 9);
        let forced = SupProfile::from_series(times.clone(), vec![1.0; 10], false).unwrap();
        assert!(matches!(profile_checks(&forced, ProfileCheckOptions::default()), Err(Error::NotHomogeneous)));
        let decay = SupProfile::from_series(
            (0..=200).map(|k| k as f64 * 0.1).collect(),
            (0..=200).map(|k| (-(k as f64) * 0.1).exp()).collect(),
            true,
        )
        .unwrap();
        let r = profile_checks(&decay, ProfileCheckOptions::default()).unwrap();
        assert!(r.strictly_decreasing && r.tail_to_zero);
        assert!((r.omega - (1.0 - (-0.1f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn source_tagging() {
        assert_eq!(SourceTag::of(&SourceSpec::zero()), SourceTag::Zero);
        let f = SourceSpec::new(Expr::parse("cos(y)").unwrap());
        assert!(matches!(SourceTag::of(&f), SourceTag::Forced(_)));
    }

    #[test]
    fn restrict_and_subsample() {
        let g = line(PI / 10.0);
        let w = CylinderWindow::new(0.0, 1.0, 0.1).unwrap();
        let init = FieldSlice::from_fn(&g, 0.0, |y| y[0].cos());
        let tr = evolve(&CoefficientSpec::heat(1), &SourceSpec::zero(), &g, &init, &w, Scheme::ImplicitEuler).unwrap();
        assert_eq!(tr.len(), 11);
        let r = tr.restrict(0.3, 0.6).unwrap();
        assert_eq!(r.len(), 4);
        assert_eq!(r.slice(0), tr.slice(3));
        let s = tr.subsample(5);
        assert_eq!(s.len(), 3);
        assert_eq!(s.slice(2), tr.slice(10));
        assert!(tr.restrict(0.3, 1.5).is_err());
    }
}
