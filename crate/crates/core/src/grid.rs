//! Spatial domains, lattice grids and cylinder windows.
//!
//! Domains are open intervals in 1D or simple axis-aligned polygons in 2D,
//! always containing the origin. Grids are uniform lattices anchored at the
//! lower corner of the domain's bounding box; only nodes strictly inside the
//! domain are stored, so zero lateral data is implicit.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack used by the geometric predicates.
const GEOM_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainKind {
    Interval { lo: f64, hi: f64 },
    AxisPolygon { vertices: Vec<[f64; 2]> },
}

/// A bounded open set in R^1 or R^2 with the origin strictly inside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialDomain {
    pub kind: DomainKind,
    pub origin_interior: bool,
}

impl SpatialDomain {
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::InvalidDomain(format!(
                "interval needs finite lo < hi, got ({lo}, {hi})"
            )));
        }
        if !(lo < 0.0 && 0.0 < hi) {
            return Err(Error::OriginOutside);
        }
        Ok(Self {
            kind: DomainKind::Interval { lo, hi },
            origin_interior: true,
        })
    }

    /// Builds a simple axis-aligned polygon. Vertices are given in order
    /// (either orientation); the closing edge is implicit.
    pub fn polygon(vertices: Vec<[f64; 2]>) -> Result<Self> {
        let vertices = dedup_collinear(vertices);
        if vertices.len() < 4 {
            return Err(Error::InvalidDomain(
                "axis-aligned polygon needs at least 4 corners".into(),
            ));
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDomain("non-finite vertex".into()));
        }
        let n = vertices.len();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let horizontal = a[1] == b[1];
            let vertical = a[0] == b[0];
            if horizontal == vertical {
                return Err(Error::InvalidDomain(format!(
                    "edge {a:?} -> {b:?} is not axis-aligned (or has zero length)"
                )));
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                let (c, d) = (vertices[j], vertices[(j + 1) % n]);
                if segments_touch(a, b, c, d) {
                    return Err(Error::InvalidDomain(format!(
                        "polygon is not simple: edges {i} and {j} touch"
                    )));
                }
            }
        }
        let domain = Self {
            kind: DomainKind::AxisPolygon { vertices },
            origin_interior: true,
        };
        if !domain.contains_strict(&[0.0, 0.0]) {
            return Err(Error::OriginOutside);
        }
        Ok(domain)
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            DomainKind::Interval { .. } => 1,
            DomainKind::AxisPolygon { .. } => 2,
        }
    }

    /// Lower and upper corners of the bounding box (only `dim()` entries used).
    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        match &self.kind {
            DomainKind::Interval { lo, hi } => ([*lo, 0.0], [*hi, 0.0]),
            DomainKind::AxisPolygon { vertices } => {
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for v in vertices {
                    for k in 0..2 {
                        lo[k] = lo[k].min(v[k]);
                        hi[k] = hi[k].max(v[k]);
                    }
                }
                (lo, hi)
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        match self.kind {
            DomainKind::Interval { .. } => hi[0] - lo[0],
            DomainKind::AxisPolygon { .. } => (hi[0] - lo[0]).hypot(hi[1] - lo[1]),
        }
    }

    /// Smallest edge length (the interval length in 1D).
    pub fn min_feature_width(&self) -> f64 {
        match &self.kind {
            DomainKind::Interval { lo, hi } => hi - lo,
            DomainKind::AxisPolygon { vertices } => {
                let n = vertices.len();
                (0..n)
                    .map(|i| {
                        let a = vertices[i];
                        let b = vertices[(i + 1) % n];
                        (a[0] - b[0]).abs() + (a[1] - b[1]).abs()
                    })
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    fn scale(&self) -> f64 {
        self.diameter().max(1.0)
    }

    /// True iff `p` lies in the open set (points on the boundary are excluded).
    pub fn contains_strict(&self, p: &[f64]) -> bool {
        let eps = GEOM_EPS * self.scale();
        match &self.kind {
            DomainKind::Interval { lo, hi } => p[0] > lo + eps && p[0] < hi - eps,
            DomainKind::AxisPolygon { vertices } => {
                let n = vertices.len();
                let q = [p[0], p[1]];
                for i in 0..n {
                    if point_segment_distance(q, vertices[i], vertices[(i + 1) % n]) <= eps {
                        return false;
                    }
                }
                // crossing number with a rightward ray
                let mut inside = false;
                for i in 0..n {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    if (a[1] > q[1]) != (b[1] > q[1]) {
                        let x = a[0] + (q[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                        if q[0] < x {
                            inside = !inside;
                        }
                    }
                }
                inside
            }
        }
    }

    /// Points that must sit on the grid lattice for the stencil to be exact.
    fn corner_points(&self) -> Vec<[f64; 2]> {
        match &self.kind {
            DomainKind::Interval { lo, hi } => vec![[*lo, 0.0], [*hi, 0.0]],
            DomainKind::AxisPolygon { vertices } => vertices.clone(),
        }
    }
}

fn dedup_collinear(mut v: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    if v.len() > 1 && v.first() == v.last() {
        v.pop();
    }
    v.dedup();
    let mut changed = true;
    while changed && v.len() >= 3 {
        changed = false;
        let n = v.len();
        for i in 0..n {
            let a = v[(i + n - 1) % n];
            let b = v[i];
            let c = v[(i + 1) % n];
            if (a[0] == b[0] && b[0] == c[0]) || (a[1] == b[1] && b[1] == c[1]) {
                v.remove(i);
                changed = true;
                break;
            }
        }
    }
    v
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let s = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    };
    let c = [a[0] + s * d[0], a[1] + s * d[1]];
    (p[0] - c[0]).hypot(p[1] - c[1])
}

/// Closed axis-aligned segments intersect or touch.
fn segments_touch(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let (ax0, ax1) = (a[0].min(b[0]), a[0].max(b[0]));
    let (ay0, ay1) = (a[1].min(b[1]), a[1].max(b[1]));
    let (cx0, cx1) = (c[0].min(d[0]), c[0].max(d[0]));
    let (cy0, cy1) = (c[1].min(d[1]), c[1].max(d[1]));
    ax0 <= cx1 && cx0 <= ax1 && ay0 <= cy1 && cy0 <= ay1
}

/// Uniform lattice grid over a domain. Boundary values are structural zeros
/// and never stored.
#[derive(Debug, Clone)]
pub struct Grid {
    domain: SpatialDomain,
    h: Vec<f64>,
    anchor: [f64; 2],
    coords: Vec<f64>,
    lattice: Vec<[i64; 2]>,
    node_index: HashMap<[i64; 2], usize>,
    origin_node: usize,
}

impl Grid {
    pub fn domain(&self) -> &SpatialDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Spacing per axis.
    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    pub fn coords(&self, node: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[node * d..(node + 1) * d]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.dim())
    }

    pub fn lattice_index(&self, node: usize) -> [i64; 2] {
        self.lattice[node]
    }

    pub fn node_at(&self, lattice: [i64; 2]) -> Option<usize> {
        self.node_index.get(&lattice).copied()
    }

    /// Coordinates of an arbitrary lattice point (node or not).
    pub fn lattice_point(&self, lattice: [i64; 2]) -> [f64; 2] {
        [
            self.anchor[0] + lattice[0] as f64 * self.h[0],
            self.anchor[1] + lattice[1] as f64 * self.h.get(1).copied().unwrap_or(0.0),
        ]
    }

    /// Index of the node nearest to the spatial origin.
    pub fn origin_node(&self) -> usize {
        self.origin_node
    }

    /// Evaluates `f` at every interior node.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        self.nodes().map(f).collect()
    }
}

/// Builds the lattice grid with spacing `h` on every axis.
///
/// The lattice is anchored at the lower bounding-box corner, and every corner
/// of the domain must be a lattice point so that the boundary lies on grid
/// lines.
pub fn build_grid(domain: &SpatialDomain, h: f64) -> Result<Grid> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidSpacing {
            h,
            reason: "spacing must be positive and finite".into(),
        });
    }
    if !domain.contains_strict(&[0.0, 0.0]) {
        return Err(Error::OriginOutside);
    }
    let width = domain.min_feature_width();
    if h >= 0.5 * width {
        return Err(Error::InvalidSpacing {
            h,
            reason: format!("must be smaller than half the minimal feature width {width}"),
        });
    }
    let dim = domain.dim();
    let (lo, hi) = domain.bounding_box();
    let anchor = lo;
    for p in domain.corner_points() {
        for k in 0..dim {
            let s = (p[k] - anchor[k]) / h;
            if (s - s.round()).abs() > 1e-7 {
                return Err(Error::InvalidSpacing {
                    h,
                    reason: format!("domain corner {p:?} is not on the lattice"),
                });
            }
        }
    }
    let counts: Vec<i64> = (0..dim)
        .map(|k| ((hi[k] - lo[k]) / h).round() as i64)
        .collect();

    let mut coords = Vec::new();
    let mut lattice = Vec::new();
    let mut node_index = HashMap::new();
    let ny = if dim == 2 { counts[1] } else { 0 };
    // row-major in (y2, y1) so the 1D ordering is left to right
    for j in 0..=ny {
        for i in 0..=counts[0] {
            let key = [i, if dim == 2 { j } else { 0 }];
            let p = [
                anchor[0] + i as f64 * h,
                if dim == 2 { anchor[1] + j as f64 * h } else { 0.0 },
            ];
            if domain.contains_strict(&p) {
                node_index.insert(key, lattice.len());
                lattice.push(key);
                coords.extend_from_slice(&p[..dim]);
            }
        }
    }
    if lattice.is_empty() {
        return Err(Error::EmptyInterior { h });
    }

    let origin_node = (0..lattice.len())
        .min_by(|&a, &b| {
            let da: f64 = coords[a * dim..(a + 1) * dim].iter().map(|x| x * x).sum();
            let db: f64 = coords[b * dim..(b + 1) * dim].iter().map(|x| x * x).sum();
            da.total_cmp(&db)
        })
        .expect("nonempty");
    let tol = 0.5 * h * (1.0 + 1e-9);
    if coords[origin_node * dim..(origin_node + 1) * dim]
        .iter()
        .any(|x| x.abs() > tol)
    {
        return Err(Error::InvalidSpacing {
            h,
            reason: "no interior node within h/2 of the origin".into(),
        });
    }

    Ok(Grid {
        domain: domain.clone(),
        h: vec![h; dim],
        anchor,
        coords,
        lattice,
        node_index,
        origin_node,
    })
}

/// Parabolic distance `max(|y1 - y2|, |t1 - t2|^(1/2))`.
pub fn parabolic_distance(y1: &[f64], t1: f64, y2: &[f64], t2: f64) -> f64 {
    let spatial = y1
        .iter()
        .zip(y2)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    spatial.max((t1 - t2).abs().sqrt())
}

/// A truncated cylinder `Omega x (t_start, t_end)` sampled at uniform `dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylinderWindow {
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    pub steps: usize,
}

impl CylinderWindow {
    pub fn new(t_start: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(t_start.is_finite() && t_end.is_finite()) || t_start >= t_end {
            return Err(Error::InvalidWindow(format!(
                "need t_start < t_end, got ({t_start}, {t_end})"
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidWindow(format!("dt must be positive, got {dt}")));
        }
        let ratio = (t_end - t_start) / dt;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-12 * steps.max(1.0) {
            return Err(Error::InvalidWindow(format!(
                "window length {} is not an integer multiple of dt = {dt}",
                t_end - t_start
            )));
        }
        Ok(Self {
            t_start,
            t_end,
            dt,
            steps: steps as usize,
        })
    }

    /// `Q+ = Omega x (0, t_end)`.
    pub fn q_plus(t_end: f64, dt: f64) -> Result<Self> {
        Self::new(0.0, t_end, dt)
    }

    /// `Q- = Omega x (t_start, 0)`.
    pub fn q_minus(t_start: f64, dt: f64) -> Result<Self> {
        Self::new(t_start, 0.0, dt)
    }

    pub fn length(&self) -> f64 {
        self.t_end - self.t_start
    }

    /// Time of step `k`; `time(steps)` is exactly `t_end`.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.t_end
        } else {
            self.t_start + k as f64 * self.dt
        }
    }

    /// Bottom of the parabolic boundary.
    pub fn bottom(&self) -> f64 {
        self.t_start
    }

    /// Classifies a space-time point relative to the closed cylinder:
    /// lateral, bottom, the bottom corner, interior or outside.
    pub fn classify(&self, domain: &SpatialDomain, y: &[f64], t: f64) -> CylinderPart {
        let tol = 1e-12 * self.length().max(1.0);
        if t < self.t_start - tol || t > self.t_end + tol {
            return CylinderPart::Outside;
        }
        let inside = domain.contains_strict(y);
        let at_bottom = (t - self.t_start).abs() <= tol;
        match (inside, at_bottom) {
            (true, true) => CylinderPart::Bottom,
            (true, false) => CylinderPart::Interior,
            (false, true) => CylinderPart::Corner,
            (false, false) => CylinderPart::Lateral,
        }
    }
}

/// Parts of the closed cylinder; `Lateral`, `Bottom` and `Corner` together
/// make up the parabolic boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CylinderPart {
    Interior,
    Lateral,
    Bottom,
    Corner,
    Outside,
}

impl CylinderPart {
    pub fn on_parabolic_boundary(self) -> bool {
        matches!(self, Self::Lateral | Self::Bottom | Self::Corner)
    }
}
