//! Sparse matrices and the two linear solvers used by the time steppers:
//! a tridiagonal direct solve for 1D grids and ILU(0)-preconditioned
//! BiCGSTAB for 2D grids.

use crate::error::{Error, Result};

/// Relative residual every solve must reach.
pub const SOLVE_RTOL: f64 = 1e-12;
/// Iteration cap of the Krylov solver.
pub const MAX_KRYLOV_ITERS: usize = 10_000;

/// Compressed sparse row matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    /// Builds from per-row `(col, value)` lists; duplicates are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                debug_assert!(c < n);
                if cols.len() > *row_ptr.last().unwrap() && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_rows((0..n).map(|i| vec![(i, 1.0)]).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *yi = s;
        }
    }

    /// `alpha * I + beta * self`, keeping the sparsity pattern (plus the diagonal).
    pub fn shifted(&self, alpha: f64, beta: f64) -> Self {
        let rows = (0..self.n)
            .map(|i| {
                let mut row: Vec<(usize, f64)> = self.row(i).map(|(c, v)| (c, beta * v)).collect();
                row.push((i, alpha));
                row
            })
            .collect();
        Self::from_rows(rows)
    }

    /// Sign-pattern predicate: positive diagonal, nonpositive off-diagonal
    /// and nonnegative row sums (weak diagonal dominance). Together with
    /// irreducibility of the grid stencil this makes the matrix a
    /// nonsingular M-matrix.
    pub fn is_m_matrix_pattern(&self) -> bool {
        (0..self.n).all(|i| {
            let mut diag = 0.0;
            let mut off = 0.0;
            for (c, v) in self.row(i) {
                if c == i {
                    diag = v;
                } else if v > 0.0 {
                    return false;
                } else {
                    off += v;
                }
            }
            diag > 0.0 && diag + off >= -1e-12 * diag
        })
    }

    /// Returns `(lower, diag, upper)` if the matrix is tridiagonal.
    pub fn tridiagonal(&self) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let n = self.n;
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 0..n {
            for (c, v) in self.row(i) {
                if c == i {
                    diag[i] = v;
                } else if c + 1 == i {
                    lower[i] = v;
                } else if c == i + 1 {
                    upper[i] = v;
                } else {
                    return None;
                }
            }
        }
        Some((lower, diag, upper))
    }

    /// Dense copy, row-major. Intended for small test oracles.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| {
                let mut r = vec![0.0; self.n];
                for (c, v) in self.row(i) {
                    r[c] = v;
                }
                r
            })
            .collect()
    }
}

/// Thomas algorithm for `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]`.
/// `lower[0]` and `upper[n-1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    TridiagonalLu::new(lower, diag, upper)?.solve(rhs)
}

/// Precomputed Thomas elimination, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    lower: Vec<f64>,
    upper_mod: Vec<f64>,
    pivot: Vec<f64>,
}

impl TridiagonalLu {
    pub fn new(lower: &[f64], diag: &[f64], upper: &[f64]) -> Result<Self> {
        let n = diag.len();
        if lower.len() != n || upper.len() != n {
            return Err(Error::SolveFailed(format!(
                "band lengths {}, {n}, {} must all equal {n}",
                lower.len(),
                upper.len()
            )));
        }
        let mut upper_mod = vec![0.0; n];
        let mut pivot = vec![0.0; n];
        for i in 0..n {
            let p = if i == 0 {
                diag[0]
            } else {
                diag[i] - lower[i] * upper_mod[i - 1]
            };
            if p == 0.0 || !p.is_finite() {
                return Err(Error::SolveFailed(format!("zero pivot in row {i}")));
            }
            pivot[i] = p;
            upper_mod[i] = if i + 1 < n { upper[i] / p } else { 0.0 };
        }
        Ok(Self {
            lower: lower.to_vec(),
            upper_mod,
            pivot,
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.pivot.len();
        if rhs.len() != n {
            return Err(Error::SliceLength {
                got: rhs.len(),
                expected: n,
            });
        }
        let mut x = vec![0.0; n];
        for i in 0..n {
            let prev = if i == 0 { 0.0 } else { self.lower[i] * x[i - 1] };
            x[i] = (rhs[i] - prev) / self.pivot[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] -= self.upper_mod[i] * x[i + 1];
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolveFailed("non-finite solution".into()));
        }
        Ok(x)
    }
}

/// Incomplete LU with zero fill-in on the matrix's own pattern.
#[derive(Debug, Clone)]
struct Ilu0 {
    lu: Csr,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    fn new(a: &Csr) -> Result<Self> {
        let mut lu = a.clone();
        let n = lu.n;
        let mut diag_pos = vec![usize::MAX; n];
        for (i, pos) in diag_pos.iter_mut().enumerate() {
            for k in lu.row_ptr[i]..lu.row_ptr[i + 1] {
                if lu.cols[k] == i {
                    *pos = k;
                }
            }
            if *pos == usize::MAX {
                return Err(Error::SolveFailed(format!("missing diagonal in row {i}")));
            }
        }
        let mut col_pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for k in start..end {
                col_pos[lu.cols[k]] = k;
            }
            for k in start..end {
                let j = lu.cols[k];
                if j >= i {
                    break;
                }
                let pivot = lu.vals[diag_pos[j]];
                if pivot == 0.0 {
                    return Err(Error::SolveFailed(format!("zero ILU pivot in row {j}")));
                }
                let factor = lu.vals[k] / pivot;
                lu.vals[k] = factor;
                for m in (diag_pos[j] + 1)..lu.row_ptr[j + 1] {
                    let pos = col_pos[lu.cols[m]];
                    if pos != usize::MAX {
                        lu.vals[pos] -= factor * lu.vals[m];
                    }
                }
            }
            for k in start..end {
                col_pos[lu.cols[k]] = usize::MAX;
            }
        }
        Ok(Self { lu, diag_pos })
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let lu = &self.lu;
        let n = lu.n;
        for i in 0..n {
            let mut s = r[i];
            for k in lu.row_ptr[i]..self.diag_pos[i] {
                s -= lu.vals[k] * z[lu.cols[k]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in (self.diag_pos[i] + 1)..lu.row_ptr[i + 1] {
                s -= lu.vals[k] * z[lu.cols[k]];
            }
            z[i] = s / lu.vals[self.diag_pos[i]];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Relative residual `|b - A x| / |b|` (absolute when `b = 0`).
pub fn relative_residual(a: &Csr, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, axi)| bi - axi).collect();
    let nb = norm2(b);
    if nb == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / nb
    }
}

/// A matrix prepared for repeated solves.
#[derive(Debug, Clone)]
pub enum LinearSolver {
    Tridiagonal { matrix: Csr, lu: TridiagonalLu },
    Krylov { matrix: Csr, ilu: Ilu0Handle },
}

/// Opaque wrapper so the preconditioner type stays private.
#[derive(Debug, Clone)]
pub struct Ilu0Handle(Ilu0);

impl LinearSolver {
    pub fn new(matrix: Csr) -> Result<Self> {
        if let Some((l, d, u)) = matrix.tridiagonal() {
            let lu = TridiagonalLu::new(&l, &d, &u)?;
            Ok(Self::Tridiagonal { matrix, lu })
        } else {
            let ilu = Ilu0::new(&matrix)?;
            Ok(Self::Krylov {
                matrix,
                ilu: Ilu0Handle(ilu),
            })
        }
    }

    pub fn matrix(&self) -> &Csr {
        match self {
            Self::Tridiagonal { matrix, .. } | Self::Krylov { matrix, .. } => matrix,
        }
    }

    /// Solves `A x = b`, checking the final relative residual.
    pub fn solve(&self, b: &[f64], guess: Option<&[f64]>) -> Result<Vec<f64>> {
        let x = match self {
            Self::Tridiagonal { lu, .. } => lu.solve(b)?,
            Self::Krylov { matrix, ilu } => bicgstab(matrix, &ilu.0, b, guess)?,
        };
        let res = relative_residual(self.matrix(), &x, b);
        if !(res <= SOLVE_RTOL) {
            return Err(Error::SolveFailed(format!(
                "relative residual {res:e} above {SOLVE_RTOL:e}"
            )));
        }
        Ok(x)
    }
}

fn bicgstab(a: &Csr, pre: &Ilu0, b: &[f64], guess: Option<&[f64]>) -> Result<Vec<f64>> {
    let n = a.n;
    let nb = norm2(b);
    if nb == 0.0 {
        return Ok(vec![0.0; n]);
    }
    // aim slightly below the acceptance residual; the recursive residual drifts
    let target = 0.25 * SOLVE_RTOL * nb;
    let mut x = guess.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
    let mut restarts = 0;
    let mut total = 0;
    loop {
        let ax = a.mul_vec(&x);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, v)| bi - v).collect();
        if norm2(&r) <= target {
            return Ok(x);
        }
        let r_hat = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut s = vec![0.0; n];
        let mut t = vec![0.0; n];
        let mut breakdown = false;
        while total < MAX_KRYLOV_ITERS {
            total += 1;
            let rho_new = dot(&r_hat, &r);
            if rho_new.abs() < 1e-300 || omega == 0.0 {
                breakdown = true;
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            pre.apply(&p, &mut y);
            a.mul_vec_into(&y, &mut v);
            let denom = dot(&r_hat, &v);
            if denom == 0.0 {
                breakdown = true;
                break;
            }
            alpha = rho / denom;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            if norm2(&s) <= target {
                for i in 0..n {
                    x[i] += alpha * y[i];
                }
                break;
            }
            pre.apply(&s, &mut z);
            a.mul_vec_into(&z, &mut t);
            let tt = dot(&t, &t);
            omega = if tt == 0.0 { 0.0 } else { dot(&t, &s) / tt };
            for i in 0..n {
                x[i] += alpha * y[i] + omega * z[i];
                r[i] = s[i] - omega * t[i];
            }
            if norm2(&r) <= target {
                break;
            }
        }
        let true_res = relative_residual(a, &x, b);
        if true_res <= 0.5 * SOLVE_RTOL {
            return Ok(x);
        }
        restarts += 1;
        if total >= MAX_KRYLOV_ITERS || restarts > 20 {
            return Err(Error::SolveFailed(format!(
                "BiCGSTAB stalled at relative residual {true_res:e} after {total} iterations{}",
                if breakdown { " (breakdown)" } else { "" }
            )));
        }
    }
}
