//! Coefficient data of the parabolic operator, its validation against the
//! uniform parabolicity assumptions, the discrete spatial operator, and the
//! slab / sliding norms of the source.
//!
//! The spatial part acts as
//!
//! ```text
//! A u = -a_ij D_ij u + b_i D_i u + c u          (nondivergence)
//! A u = -D_i (a_ij D_j u) + b_i D_i u + c u     (divergence)
//! ```
//!
//! so that the evolution equation reads `u_t + A u = f`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, Var};
use crate::grid::{CylinderWindow, Grid};
use crate::linalg::Csr;

/// Number of random unit directions sampled per point in the ellipticity check.
pub const RANDOM_DIRECTIONS: usize = 16;
const VALIDATION_SEED: u64 = 0x5eed_e1e1;
const BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    #[default]
    Nondivergence,
    Divergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeDependence {
    Autonomous,
    Periodic { period: f64 },
    General,
}

/// Operator data `a_ij, b_i, c` with declared ellipticity bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    pub a: Vec<Vec<Expr>>,
    pub b: Vec<Expr>,
    pub c: Expr,
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub upper: f64,
    #[serde(default)]
    pub form: Form,
    /// Declared period for time-periodic coefficients.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
}

impl CoefficientSpec {
    /// `a = I`, `b = 0`, `c = 0`, `lambda = Lambda = 1`.
    pub fn heat(dim: usize) -> Self {
        let a = (0..dim)
            .map(|i| (0..dim).map(|j| Expr::Const(if i == j { 1.0 } else { 0.0 })).collect())
            .collect();
        Self {
            a,
            b: vec![Expr::Const(0.0); dim],
            c: Expr::Const(0.0),
            lambda: 1.0,
            upper: 1.0,
            form: Form::Nondivergence,
            period: None,
        }
    }

    pub fn with_c(mut self, c: Expr) -> Self {
        self.c = c;
        self
    }

    pub fn with_b(mut self, b: Vec<Expr>) -> Self {
        self.b = b;
        self
    }

    pub fn with_a(mut self, a: Vec<Vec<Expr>>) -> Self {
        self.a = a;
        self
    }

    pub fn with_bounds(mut self, lambda: f64, upper: f64) -> Self {
        self.lambda = lambda;
        self.upper = upper;
        self
    }

    pub fn with_form(mut self, form: Form) -> Self {
        self.form = form;
        self
    }

    pub fn with_period(mut self, period: f64) -> Self {
        self.period = Some(period);
        self
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    fn exprs(&self) -> impl Iterator<Item = &Expr> {
        self.a.iter().flatten().chain(self.b.iter()).chain(std::iter::once(&self.c))
    }

    pub fn time_dependence(&self) -> TimeDependence {
        if !self.exprs().any(|e| e.depends_on(Var::T)) {
            TimeDependence::Autonomous
        } else if let Some(period) = self.period {
            TimeDependence::Periodic { period }
        } else {
            TimeDependence::General
        }
    }

    pub fn is_autonomous(&self) -> bool {
        self.time_dependence() == TimeDependence::Autonomous
    }
}

/// Source term `f(y, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub f: Expr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_bound: Option<f64>,
}

impl SourceSpec {
    pub fn zero() -> Self {
        Self::new(Expr::Const(0.0))
    }

    pub fn new(f: Expr) -> Self {
        Self {
            f,
            declared_bound: None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.f.is_zero()
    }

    pub fn eval(&self, y: &[f64], t: f64) -> f64 {
        self.f.eval(y, t)
    }

    /// Nodal values at time `t`.
    pub fn sample(&self, grid: &Grid, t: f64) -> Vec<f64> {
        grid.sample(|y| self.f.eval(y, t))
    }
}

/// Extreme values observed for one assumption during validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub assumption: String,
    pub passed: bool,
    pub worst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
    pub sample_points: usize,
    pub sample_times: usize,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn unit_directions(dim: usize) -> Vec<Vec<f64>> {
    let mut dirs: Vec<Vec<f64>> = (0..dim)
        .map(|k| (0..dim).map(|j| if j == k { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(VALIDATION_SEED);
    for _ in 0..RANDOM_DIRECTIONS {
        if dim == 1 {
            dirs.push(vec![if rng.gen::<bool>() { 1.0 } else { -1.0 }]);
        } else {
            let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            dirs.push(vec![angle.cos(), angle.sin()]);
        }
    }
    dirs
}

/// Unit eigenvectors of a symmetric 2x2 matrix.
fn eigenvectors_2x2(p: f64, q: f64, r: f64) -> [[f64; 2]; 2] {
    let angle = 0.5 * (2.0 * q).atan2(p - r);
    let (s, c) = angle.sin_cos();
    [[c, s], [-s, c]]
}

/// Points where coefficients are sampled: nodes, plus the flux half-points
/// for the divergence form.
fn sample_points(spec: &CoefficientSpec, grid: &Grid) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = grid.nodes().map(<[f64]>::to_vec).collect();
    if spec.form == Form::Divergence {
        for node in 0..grid.len() {
            let y = grid.coords(node);
            for (k, hk) in grid.h().iter().enumerate() {
                for sign in [-0.5, 0.5] {
                    let mut p = y.to_vec();
                    p[k] += sign * hk;
                    pts.push(p);
                }
            }
        }
    }
    pts
}

/// Checks symmetry, ellipticity bounds, the mixed-term restriction, the drift
/// bound and the sign and bound of `c` at every node and sample time.
///
/// Returns the first violated assumption as an error.
pub fn validate(spec: &CoefficientSpec, grid: &Grid, times: &[f64]) -> Result<ValidationReport> {
    let dim = grid.dim();
    if spec.dim() != dim || spec.a.len() != dim || spec.a.iter().any(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch {
            spec: spec.dim(),
            grid: dim,
        });
    }
    if times.is_empty() {
        return Err(Error::NoSampleTimes);
    }
    let dirs = unit_directions(dim);
    let points = sample_points(spec, grid);
    let (lambda, upper) = (spec.lambda, spec.upper);
    let mut worst_low = f64::INFINITY;
    let mut worst_high = f64::NEG_INFINITY;
    let mut worst_mixed = 0.0f64;
    let mut worst_b = 0.0f64;
    let mut min_c = f64::INFINITY;
    let mut max_c = f64::NEG_INFINITY;

    for &t in times {
        for y in &points {
            let a: Vec<Vec<f64>> = spec
                .a
                .iter()
                .map(|row| row.iter().map(|e| e.eval(y, t)).collect())
                .collect();
            let b: Vec<f64> = spec.b.iter().map(|e| e.eval(y, t)).collect();
            let c = spec.c.eval(y, t);
            if a.iter().flatten().chain(&b).chain(std::iter::once(&c)).any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteCoefficient { y: y.clone(), t });
            }
            if dim == 2 {
                let scale = a[0][1].abs().max(a[1][0].abs()).max(1.0);
                if (a[0][1] - a[1][0]).abs() > 1e-12 * scale {
                    return Err(Error::Asymmetric { y: y.clone(), t });
                }
            }
            let mut xis = dirs.clone();
            if dim == 2 {
                for v in eigenvectors_2x2(a[0][0], a[0][1], a[1][1]) {
                    xis.push(v.to_vec());
                }
            }
            for xi in &xis {
                let q: f64 = (0..dim)
                    .flat_map(|i| (0..dim).map(move |j| (i, j)))
                    .map(|(i, j)| a[i][j] * xi[i] * xi[j])
                    .sum();
                let norm2: f64 = xi.iter().map(|x| x * x).sum();
                let ratio = q / norm2;
                worst_low = worst_low.min(ratio);
                worst_high = worst_high.max(ratio);
                if ratio < lambda * (1.0 - BOUND_SLACK) || ratio > upper * (1.0 + BOUND_SLACK) {
                    return Err(Error::EllipticityViolated {
                        y: y.clone(),
                        t,
                        xi: xi.clone(),
                        value: q,
                        lambda,
                        upper,
                    });
                }
            }
            if dim == 2 {
                let bound = a[0][0].min(a[1][1]);
                worst_mixed = worst_mixed.max(a[0][1].abs() / bound);
                if a[0][1].abs() > bound * (1.0 + BOUND_SLACK) {
                    return Err(Error::MixedTermTooLarge {
                        y: y.clone(),
                        t,
                        a12: a[0][1],
                        bound,
                    });
                }
            }
            for (component, &bi) in b.iter().enumerate() {
                worst_b = worst_b.max(bi.abs());
                if bi.abs() > upper * (1.0 + BOUND_SLACK) {
                    return Err(Error::DriftTooLarge {
                        y: y.clone(),
                        t,
                        component,
                        value: bi,
                        upper,
                    });
                }
            }
            min_c = min_c.min(c);
            max_c = max_c.max(c);
            if c < 0.0 {
                return Err(Error::NegativeC { y: y.clone(), t, value: c });
            }
            if c > upper * (1.0 + BOUND_SLACK) {
                return Err(Error::CTooLarge {
                    y: y.clone(),
                    t,
                    value: c,
                    upper,
                });
            }
        }
    }
    let check = |name: &str, worst: f64| AssumptionCheck {
        assumption: name.to_string(),
        passed: true,
        worst,
    };
    Ok(ValidationReport {
        checks: vec![
            check("symmetry a_ij = a_ji", 0.0),
            check("lambda |xi|^2 <= a(xi, xi)", worst_low),
            check("a(xi, xi) <= Lambda |xi|^2", worst_high),
            check("|a_12| <= min(a_11, a_22)", worst_mixed),
            check("|b_i| <= Lambda", worst_b),
            check("c >= 0", min_c),
            check("c <= Lambda", max_c),
        ],
        sample_points: points.len(),
        sample_times: times.len(),
    })
}

/// Assembled spatial operator at a fixed time.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub matrix: Csr,
    pub t: f64,
    pub form: Form,
    pub m_matrix: bool,
}

impl DiscreteOperator {
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(u)
    }
}

struct RowBuilder<'g> {
    grid: &'g Grid,
    node: usize,
    entries: Vec<(usize, f64)>,
}

impl RowBuilder<'_> {
    /// Adds `value` to the column of the lattice neighbour at `offset`;
    /// neighbours on the boundary carry zero data and are dropped.
    fn add(&mut self, offset: [i64; 2], value: f64) -> Result<()> {
        let base = self.grid.lattice_index(self.node);
        let key = [base[0] + offset[0], base[1] + offset[1]];
        match self.grid.node_at(key) {
            Some(col) => {
                self.entries.push((col, value));
                Ok(())
            }
            None => {
                let p = self.grid.lattice_point(key);
                if self.grid.domain().contains_strict(&p[..self.grid.dim()]) {
                    Err(Error::StencilOutOfDomain { node: self.node })
                } else {
                    Ok(())
                }
            }
        }
    }
}

fn axis_offset(k: usize, sign: i64) -> [i64; 2] {
    let mut o = [0, 0];
    o[k] = sign;
    o
}

/// Assembles the discrete spatial operator at time `t`.
///
/// Second-order terms use central differences (flux differences at
/// half-points in divergence form); mixed terms use the sign-adapted 7-point
/// stencil; drift terms are upwinded; `c` goes on the diagonal.
pub fn assemble(spec: &CoefficientSpec, grid: &Grid, t: f64) -> Result<DiscreteOperator> {
    let dim = grid.dim();
    if spec.dim() != dim {
        return Err(Error::DimensionMismatch {
            spec: spec.dim(),
            grid: dim,
        });
    }
    let h = grid.h();
    let mut rows = Vec::with_capacity(grid.len());
    for node in 0..grid.len() {
        let y = grid.coords(node);
        let mut row = RowBuilder {
            grid,
            node,
            entries: Vec::with_capacity(9),
        };
        let mut diag = spec.c.eval(y, t);
        let mut drift: Vec<f64> = spec.b.iter().map(|e| e.eval(y, t)).collect();

        for k in 0..dim {
            let h2 = h[k] * h[k];
            match spec.form {
                Form::Nondivergence => {
                    let akk = spec.a[k][k].eval(y, t);
                    diag += 2.0 * akk / h2;
                    row.add(axis_offset(k, -1), -akk / h2)?;
                    row.add(axis_offset(k, 1), -akk / h2)?;
                }
                Form::Divergence => {
                    let mut lo = y.to_vec();
                    let mut hi = y.to_vec();
                    lo[k] -= 0.5 * h[k];
                    hi[k] += 0.5 * h[k];
                    let a_lo = spec.a[k][k].eval(&lo, t);
                    let a_hi = spec.a[k][k].eval(&hi, t);
                    diag += (a_lo + a_hi) / h2;
                    row.add(axis_offset(k, -1), -a_lo / h2)?;
                    row.add(axis_offset(k, 1), -a_hi / h2)?;
                }
            }
        }

        if dim == 2 {
            let a12 = spec.a[0][1].eval(y, t);
            if spec.form == Form::Divergence && spec.a[0][1].as_constant().is_none() {
                // -d1(a12 d2 u) - d2(a12 d1 u) = -2 a12 d12 u - (d1 a12) d2 u - (d2 a12) d1 u
                for k in 0..2 {
                    let mut lo = y.to_vec();
                    let mut hi = y.to_vec();
                    lo[k] -= 0.5 * h[k];
                    hi[k] += 0.5 * h[k];
                    let grad = (spec.a[0][1].eval(&hi, t) - spec.a[0][1].eval(&lo, t)) / h[k];
                    drift[1 - k] -= grad;
                }
            }
            if a12 != 0.0 {
                let s = a12.abs() / (h[0] * h[1]);
                diag -= 2.0 * s;
                for k in 0..2 {
                    row.add(axis_offset(k, -1), s)?;
                    row.add(axis_offset(k, 1), s)?;
                }
                if a12 > 0.0 {
                    row.add([1, 1], -s)?;
                    row.add([-1, -1], -s)?;
                } else {
                    row.add([1, -1], -s)?;
                    row.add([-1, 1], -s)?;
                }
            }
        }

        for (k, &bk) in drift.iter().enumerate() {
            if bk > 0.0 {
                diag += bk / h[k];
                row.add(axis_offset(k, -1), -bk / h[k])?;
            } else if bk < 0.0 {
                diag -= bk / h[k];
                row.add(axis_offset(k, 1), bk / h[k])?;
            }
        }
        row.entries.push((node, diag));
        rows.push(row.entries);
    }
    let matrix = Csr::from_rows(rows);
    let m_matrix = matrix.is_m_matrix_pattern();
    Ok(DiscreteOperator {
        matrix,
        t,
        form: spec.form,
        m_matrix,
    })
}

/// Midpoint quadrature nodes over the lattice cells covering the domain.
pub fn cell_centers(grid: &Grid) -> Vec<Vec<f64>> {
    let dim = grid.dim();
    let h = grid.h()[0];
    let (lo, hi) = grid.domain().bounding_box();
    let counts: Vec<i64> = (0..dim).map(|k| ((hi[k] - lo[k]) / h).round() as i64).collect();
    let mut pts = Vec::new();
    if dim == 1 {
        for i in 0..counts[0] {
            pts.push(vec![lo[0] + (i as f64 + 0.5) * h]);
        }
    } else {
        for j in 0..counts[1] {
            for i in 0..counts[0] {
                let p = vec![lo[0] + (i as f64 + 0.5) * h, lo[1] + (j as f64 + 0.5) * h];
                if grid.domain().contains_strict(&p) {
                    pts.push(p);
                }
            }
        }
    }
    pts
}

/// `sum_cells |f|^(n+1) h^n` at a fixed time.
fn spatial_power_sum(f: &SourceSpec, cells: &[Vec<f64>], cell_volume: f64, p: f64, t: f64) -> f64 {
    cells.iter().map(|y| f.eval(y, t).abs().powf(p)).sum::<f64>() * cell_volume
}

fn time_samples(length: f64, dt: f64) -> Result<usize> {
    Ok(CylinderWindow::new(0.0, length, dt)?.steps)
}

/// Discrete `L^(n+1)` norm of `f` on the slab `Omega x (t_start, t_start + 2)`
/// by midpoint quadrature in space (lattice cells) and time.
pub fn slab_norm(f: &SourceSpec, t_start: f64, grid: &Grid, dt: f64) -> Result<f64> {
    if f.is_zero() {
        return Ok(0.0);
    }
    let steps = time_samples(2.0, dt)?;
    let cells = cell_centers(grid);
    let dim = grid.dim();
    let volume = grid.h()[0].powi(dim as i32);
    let p = (dim + 1) as f64;
    let total: f64 = (0..steps)
        .map(|k| {
            let tau = t_start + (k as f64 + 0.5) * dt;
            spatial_power_sum(f, &cells, volume, p, tau)
        })
        .sum::<f64>()
        * dt;
    Ok(total.powf(1.0 / p))
}

/// Sliding norm over `t_range`: maximum slab norm over slab starts spaced by
/// `dt`. Returns `(value, start of the maximising slab)`.
pub fn sliding_norm_argmax(
    f: &SourceSpec,
    t_range: (f64, f64),
    grid: &Grid,
    dt: f64,
) -> Result<(f64, f64)> {
    let (a, b) = t_range;
    let length = b - a;
    if !(length >= 2.0 - 1e-12) {
        return Err(Error::WindowTooShort {
            length,
            required: 2.0,
        });
    }
    if f.is_zero() {
        return Ok((0.0, a));
    }
    if !f.f.depends_on(Var::T) {
        return Ok((slab_norm(f, a, grid, dt)?, a));
    }
    let total = time_samples(length, dt)?;
    let per_slab = time_samples(2.0, dt)?;
    let cells = cell_centers(grid);
    let dim = grid.dim();
    let volume = grid.h()[0].powi(dim as i32);
    let p = (dim + 1) as f64;
    let mut prefix = Vec::with_capacity(total + 1);
    prefix.push(0.0);
    for k in 0..total {
        let tau = a + (k as f64 + 0.5) * dt;
        let s = spatial_power_sum(f, &cells, volume, p, tau) * dt;
        prefix.push(prefix[k] + s);
    }
    let mut best = (f64::NEG_INFINITY, a);
    for i in 0..=(total - per_slab) {
        let v = (prefix[i + per_slab] - prefix[i]).max(0.0);
        if v > best.0 {
            best = (v, a + i as f64 * dt);
        }
    }
    Ok((best.0.powf(1.0 / p), best.1))
}

/// `sup_t ||f||_{L^(n+1)(Q_(t, t+2))}` sampled over `t_range`.
pub fn sliding_norm(f: &SourceSpec, t_range: (f64, f64), grid: &Grid, dt: f64) -> Result<f64> {
    sliding_norm_argmax(f, t_range, grid, dt).map(|(v, _)| v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, SpatialDomain};
    use std::f64::consts::PI;

    fn line(h: f64) -> Grid {
        build_grid(&SpatialDomain::interval(-PI / 2.0, PI / 2.0).unwrap(), h).unwrap()
    }

    fn square(h: f64) -> Grid {
        let s = PI / 2.0;
        build_grid(
            &SpatialDomain::polygon(vec![[-s, -s], [s, -s], [s, s], [-s, s]]).unwrap(),
            h,
        )
        .unwrap()
    }

    #[test]
    fn heat_validates() {
        let g = line(PI / 16.0);
        let r = validate(&CoefficientSpec::heat(1), &g, &[0.0]).unwrap();
        assert!(r.passed());
    }

    #[test]
    fn rotated_diagonal_validates() {
        // R diag(1, 2) R^T with a 45 degree rotation = [[1.5, 0.5], [0.5, 1.5]]
        let spec = CoefficientSpec::heat(2)
            .with_a(vec![vec![1.5.into(), 0.5.into()], vec![0.5.into(), 1.5.into()]])
            .with_bounds(1.0, 2.0);
        let g = square(PI / 8.0);
        assert!(validate(&spec, &g, &[0.0]).unwrap().passed());
        let tight = spec.clone().with_bounds(1.1, 2.0);
        assert!(matches!(validate(&tight, &g, &[0.0]), Err(Error::EllipticityViolated { .. })));
    }

    #[test]
    fn negative_c_rejected() {
        let spec = CoefficientSpec::heat(1).with_c((-0.1).into());
        assert!(matches!(validate(&spec, &line(PI / 8.0), &[0.0]), Err(Error::NegativeC { .. })));
    }

    #[test]
    fn drift_and_c_bounds() {
        let g = line(PI / 8.0);
        let spec = CoefficientSpec::heat(1).with_b(vec![2.0.into()]);
        assert!(matches!(validate(&spec, &g, &[0.0]), Err(Error::DriftTooLarge { .. })));
        let spec = CoefficientSpec::heat(1).with_c(Expr::parse("1 + t").unwrap());
        assert!(matches!(validate(&spec, &g, &[0.0, 0.5]), Err(Error::CTooLarge { .. })));
        assert!(matches!(validate(&spec, &g, &[]), Err(Error::NoSampleTimes)));
    }

    #[test]
    fn mixed_term_restriction() {
        let spec = CoefficientSpec::heat(2)
            .with_a(vec![vec![1.0.into(), 0.9.into()], vec![0.9.into(), 3.0.into()]])
            .with_bounds(0.1, 4.0);
        assert!(validate(&spec, &square(PI / 8.0), &[0.0]).unwrap().passed());
        let spec = CoefficientSpec::heat(2)
            .with_a(vec![vec![1.0.into(), 1.2.into()], vec![1.2.into(), 3.0.into()]])
            .with_bounds(0.1, 4.0);
        assert!(matches!(validate(&spec, &square(PI / 8.0), &[0.0]), Err(Error::MixedTermTooLarge { .. })));
    }

    #[test]
    fn asymmetric_rejected() {
        let spec = CoefficientSpec::heat(2)
            .with_a(vec![vec![1.0.into(), 0.1.into()], vec![0.0.into(), 1.0.into()]]);
        assert!(matches!(validate(&spec, &square(PI / 8.0), &[0.0]), Err(Error::Asymmetric { .. })));
    }

    #[test]
    fn diagonal_shift() {
        let g = line(PI / 20.0);
        let spec = CoefficientSpec::heat(1).with_b(vec![Expr::parse("0.5*sin(y)").unwrap()]);
        let a0 = assemble(&spec, &g, 0.0).unwrap().matrix;
        let a1 = assemble(&spec.clone().with_c(0.7.into()), &g, 0.0).unwrap().matrix;
        for i in 0..g.len() {
            for j in 0..g.len() {
                let expect = a0.get(i, j) + if i == j { 0.7 } else { 0.0 };
                assert!((a1.get(i, j) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forms_agree_for_constant_coefficients() {
        let g = square(PI / 6.0);
        let spec = CoefficientSpec::heat(2)
            .with_a(vec![vec![1.5.into(), (-0.5).into()], vec![(-0.5).into(), 1.5.into()]])
            .with_bounds(1.0, 2.0)
            .with_b(vec![0.3.into(), (-0.2).into()]);
        let nd = assemble(&spec, &g, 0.0).unwrap();
        let dv = assemble(&spec.clone().with_form(Form::Divergence), &g, 0.0).unwrap();
        assert_eq!(nd.matrix.to_dense(), dv.matrix.to_dense());
        assert!(nd.m_matrix && dv.m_matrix);
    }

    #[test]
    fn upwinding_gives_m_matrix() {
        let g = square(PI / 8.0);
        let spec = CoefficientSpec::heat(2)
            .with_a(vec![
                vec![Expr::parse("1.5 + 0.5*sin(y1)").unwrap(), Expr::parse("0.4*cos(y2)").unwrap()],
                vec![Expr::parse("0.4*cos(y2)").unwrap(), Expr::parse("1.5").unwrap()],
            ])
            .with_bounds(0.5, 2.5)
            .with_b(vec![Expr::parse("sin(y2 + t)").unwrap(), Expr::parse("-0.8").unwrap()])
            .with_c(Expr::parse("0.5 + 0.5*cos(y1)").unwrap());
        validate(&spec, &g, &[0.0, 0.3]).unwrap();
        for form in [Form::Nondivergence, Form::Divergence] {
            let op = assemble(&spec.clone().with_form(form), &g, 0.3).unwrap();
            assert!(op.m_matrix, "{form:?}");
        }
    }

    #[test]
    fn slab_norm_closed_forms() {
        let g = line(PI / 200.0);
        assert_eq!(slab_norm(&SourceSpec::zero(), 0.0, &g, 1e-2).unwrap(), 0.0);
        let one = SourceSpec::new(1.0.into());
        let v = slab_norm(&one, 0.0, &g, 1e-2).unwrap();
        assert!((v - (2.0 * PI).sqrt()).abs() <= 1e-6);
        // sin on (0, pi) is cos on the shifted interval
        let s = SourceSpec::new(Expr::parse("cos(y)").unwrap());
        let v = slab_norm(&s, 0.0, &g, 1e-2).unwrap();
        assert!((v - PI.sqrt()).abs() <= 1e-6);
    }

    #[test]
    fn sliding_norm_requires_two_units() {
        let g = line(PI / 20.0);
        let s = SourceSpec::new(1.0.into());
        assert!(matches!(
            sliding_norm(&s, (0.0, 1.5), &g, 0.01),
            Err(Error::WindowTooShort { .. })
        ));
        let stationary = sliding_norm(&s, (-3.0, 3.0), &g, 0.01).unwrap();
        assert!((stationary - slab_norm(&s, 0.7, &g, 0.01).unwrap()).abs() < 1e-12);
        assert_eq!(sliding_norm(&SourceSpec::zero(), (0.0, 4.0), &g, 0.01).unwrap(), 0.0);
    }
}
