//! Convex polytopes in half-space form and finite connected partitions.
//!
//! Everything here is double precision with explicit tolerances; membership
//! uses closed inequalities and overlapping boundaries are resolved by region
//! order (first containing region wins). Volume-bearing operations are
//! restricted to dimension <= 3; feasibility and affine images work in any
//! finite dimension.

use crate::lp::{self, Constraint, LinearProgram, Relation, Sense};
use std::io::Write;
use thiserror::Error;

/// Constraint-satisfaction tolerance for membership tests.
pub const EPS_NUM: f64 = 1e-9;
/// Absolute volume below which a region counts as empty.
pub const EPS_VOL: f64 = 1e-9;
/// Determinant magnitude below which a linear map counts as singular.
pub const EPS_DET: f64 = 1e-12;
/// Cap on the Chebyshev radius so the centre LP stays bounded.
const RADIUS_CAP: f64 = 1e9;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("polytope is unbounded")]
    Unbounded,
    #[error("polytope is empty")]
    Empty,
    #[error("operation unsupported in dimension {0}")]
    UnsupportedDim(usize),
    #[error("affine map is not invertible (|det| = {0:.3e})")]
    Singular(f64),
    #[error("lp failure: {0}")]
    Lp(#[from] lp::LpError),
}

/// Closed half-space `normal . x <= offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Halfspace {
    pub fn new(normal: Vec<f64>, offset: f64) -> Self {
        Halfspace { normal, offset }
    }

    pub fn satisfies(&self, x: &[f64]) -> bool {
        dot(&self.normal, x) <= self.offset + EPS_NUM * (1.0 + self.offset.abs())
    }

    fn complement(&self) -> Halfspace {
        Halfspace::new(self.normal.iter().map(|v| -v).collect(), -self.offset)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Convex polytope as an intersection of closed half-spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    dim: usize,
    halfspaces: Vec<Halfspace>,
}

/// Affine map `x -> M x + c` with a cached determinant.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub dim: usize,
    pub matrix: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
    det: f64,
}

impl AffineMap {
    pub fn new(matrix: Vec<Vec<f64>>, offset: Vec<f64>) -> Result<Self, GeomError> {
        let dim = offset.len();
        if matrix.len() != dim || matrix.iter().any(|r| r.len() != dim) {
            return Err(GeomError::DimMismatch(matrix.len(), dim));
        }
        let det = det_small(&matrix);
        Ok(AffineMap { dim, matrix, offset, det })
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = vec![vec![0.0; dim]; dim];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        AffineMap { dim, matrix: m, offset: vec![0.0; dim], det: 1.0 }
    }

    pub fn translation(offset: Vec<f64>) -> Self {
        let mut t = Self::identity(offset.len());
        t.offset = offset;
        t
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    pub fn is_invertible(&self) -> bool {
        self.det.abs() > EPS_DET
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| dot(&self.matrix[i], x) + self.offset[i])
            .collect()
    }

    pub fn inverse(&self) -> Result<AffineMap, GeomError> {
        if !self.is_invertible() {
            return Err(GeomError::Singular(self.det.abs()));
        }
        let minv = invert_small(&self.matrix).ok_or(GeomError::Singular(self.det.abs()))?;
        let c: Vec<f64> = (0..self.dim).map(|i| -dot(&minv[i], &self.offset)).collect();
        Ok(AffineMap { dim: self.dim, matrix: minv, offset: c, det: 1.0 / self.det })
    }
}

fn det_small(m: &[Vec<f64>]) -> f64 {
    match m.len() {
        0 => 1.0,
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        n => {
            // Gaussian elimination with partial pivoting for larger maps.
            let mut a: Vec<Vec<f64>> = m.to_vec();
            let mut det = 1.0;
            for k in 0..n {
                let piv = (k..n).max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap()).unwrap();
                if a[piv][k].abs() < 1e-300 {
                    return 0.0;
                }
                if piv != k {
                    a.swap(piv, k);
                    det = -det;
                }
                det *= a[k][k];
                for i in k + 1..n {
                    let f = a[i][k] / a[k][k];
                    for j in k..n {
                        a[i][j] -= f * a[k][j];
                    }
                }
            }
            det
        }
    }
}

fn invert_small(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.iter().cloned().collect();
    let mut inv = vec![vec![0.0; n]; n];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap())?;
        if a[piv][k].abs() < 1e-300 {
            return None;
        }
        a.swap(piv, k);
        inv.swap(piv, k);
        let d = a[k][k];
        for j in 0..n {
            a[k][j] /= d;
            inv[k][j] /= d;
        }
        for i in 0..n {
            if i != k {
                let f = a[i][k];
                if f != 0.0 {
                    for j in 0..n {
                        a[i][j] -= f * a[k][j];
                        inv[i][j] -= f * inv[k][j];
                    }
                }
            }
        }
    }
    Some(inv)
}

impl Polytope {
    pub fn new(dim: usize, halfspaces: Vec<Halfspace>) -> Result<Self, GeomError> {
        for h in &halfspaces {
            if h.normal.len() != dim {
                return Err(GeomError::DimMismatch(h.normal.len(), dim));
            }
        }
        Ok(Polytope { dim, halfspaces })
    }

    /// Axis-aligned box `[lo_i, hi_i]` per coordinate.
    pub fn bounding(lo: &[f64], hi: &[f64]) -> Self {
        let dim = lo.len();
        let mut hs = Vec::with_capacity(2 * dim);
        for i in 0..dim {
            let mut n = vec![0.0; dim];
            n[i] = -1.0;
            hs.push(Halfspace::new(n, -lo[i]));
            let mut n = vec![0.0; dim];
            n[i] = 1.0;
            hs.push(Halfspace::new(n, hi[i]));
        }
        Polytope { dim, halfspaces: hs }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim && self.halfspaces.iter().all(|h| h.satisfies(x))
    }

    /// Containment with a strict slack margin on every constraint.
    pub fn contains_strict(&self, x: &[f64], margin: f64) -> bool {
        x.len() == self.dim
            && self
                .halfspaces
                .iter()
                .all(|h| dot(&h.normal, x) <= h.offset - margin * norm(&h.normal).max(1e-300))
    }

    pub fn intersect(&self, other: &Polytope) -> Result<Polytope, GeomError> {
        if self.dim != other.dim {
            return Err(GeomError::DimMismatch(self.dim, other.dim));
        }
        let mut hs = self.halfspaces.clone();
        hs.extend(other.halfspaces.iter().cloned());
        Ok(Polytope { dim: self.dim, halfspaces: hs })
    }

    fn constraints(&self) -> Vec<Constraint> {
        self.halfspaces
            .iter()
            .map(|h| Constraint::new(h.normal.clone(), Relation::Le, h.offset))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        !lp::feasible(self.dim, &self.constraints()).unwrap_or(false)
    }

    /// Chebyshev centre and radius; `None` when empty. For unbounded inputs
    /// the radius is capped at `RADIUS_CAP`.
    pub fn chebyshev(&self) -> Option<(Vec<f64>, f64)> {
        let n = self.dim;
        let mut cons: Vec<Constraint> = Vec::with_capacity(self.halfspaces.len() + 1);
        for h in &self.halfspaces {
            let mut coeffs = h.normal.clone();
            coeffs.push(norm(&h.normal));
            cons.push(Constraint::new(coeffs, Relation::Le, h.offset));
        }
        let mut rcap = vec![0.0; n];
        rcap.push(1.0);
        cons.push(Constraint::new(rcap.clone(), Relation::Ge, 0.0));
        let mut objective = vec![0.0; n];
        objective.push(1.0);
        let lp1 = LinearProgram {
            objective: objective.clone(),
            sense: Sense::Maximize,
            constraints: cons.clone(),
            bounds: None,
        };
        let mut out = lp::solve(&lp1).ok()?;
        if out.status == lp::LpStatus::Unbounded {
            // Retry with a radius cap; kept out of the common path because a
            // huge rhs degrades phase-1 numerics.
            cons.push(Constraint::new(rcap.clone(), Relation::Le, RADIUS_CAP));
            let lp1b = LinearProgram {
                objective,
                sense: Sense::Maximize,
                constraints: cons.clone(),
                bounds: None,
            };
            out = lp::solve(&lp1b).ok()?;
        }
        if out.status != lp::LpStatus::Optimal {
            return None;
        }
        let r = out.value;
        let x0: Vec<f64> = out.assignment[..n].to_vec();
        // Second pass: pin the constraints that are tight at the optimal
        // radius and push for uniform extra slack on the rest. This lands on
        // the midpoint of degenerate segments instead of an arbitrary basic
        // solution. For degenerate inputs (r ~ 0) tightness at x0 is an
        // artifact of the basic solution, so genuinely forced constraints are
        // detected with one slack-maximising LP each.
        let base = self.constraints();
        let pinned: Vec<bool> = if r > EPS_NUM {
            self.halfspaces
                .iter()
                .map(|h| dot(&h.normal, &x0) + norm(&h.normal) * r >= h.offset - 1e-7 * (1.0 + h.offset.abs()))
                .collect()
        } else {
            self.halfspaces
                .iter()
                .map(|h| {
                    if dot(&h.normal, &x0) < h.offset - 1e-7 * (1.0 + h.offset.abs()) {
                        return false; // positive slack witnessed at x0
                    }
                    let lp_slack = LinearProgram {
                        objective: h.normal.clone(),
                        sense: Sense::Minimize,
                        constraints: base.clone(),
                        bounds: None,
                    };
                    match lp::solve(&lp_slack) {
                        Ok(o) if o.status == lp::LpStatus::Optimal => {
                            h.offset - o.value <= 1e-7 * (1.0 + h.offset.abs())
                        }
                        _ => true,
                    }
                })
                .collect()
        };
        if pinned.iter().all(|&t| t) {
            return Some((x0, r));
        }
        let mut cons2: Vec<Constraint> = Vec::new();
        for (h, &is_pinned) in self.halfspaces.iter().zip(&pinned) {
            let nn = norm(&h.normal);
            let mut coeffs = h.normal.clone();
            if is_pinned {
                coeffs.push(0.0);
                cons2.push(Constraint::new(coeffs, Relation::Le, h.offset - nn * r));
            } else {
                coeffs.push(nn);
                cons2.push(Constraint::new(coeffs, Relation::Le, h.offset));
            }
        }
        cons2.push(Constraint::new(rcap, Relation::Ge, r));
        let mut objective = vec![0.0; n];
        objective.push(1.0);
        let lp2 = LinearProgram { objective, sense: Sense::Maximize, constraints: cons2, bounds: None };
        match lp::solve(&lp2) {
            Ok(o) if o.status == lp::LpStatus::Optimal => Some((o.assignment[..n].to_vec(), r)),
            _ => Some((x0, r)),
        }
    }

    /// A point with strictly positive slack on every non-degenerate
    /// constraint; deterministic for a fixed input.
    pub fn interior_point(&self) -> Result<Vec<f64>, GeomError> {
        self.chebyshev().map(|(x, _)| x).ok_or(GeomError::Empty)
    }

    /// True when the polytope is full-dimensional (Chebyshev radius above
    /// `EPS_NUM`). Used to discard measure-zero slivers from intersections.
    pub fn has_interior(&self) -> bool {
        matches!(self.chebyshev(), Some((_, r)) if r > EPS_NUM)
    }

    /// Image under an invertible affine map: `{ Mx + c | x in self }`.
    pub fn affine_image(&self, f: &AffineMap) -> Result<Polytope, GeomError> {
        if f.dim != self.dim {
            return Err(GeomError::DimMismatch(f.dim, self.dim));
        }
        let inv = f.inverse()?;
        self.affine_preimage(&inv)
    }

    /// Preimage `{ x | f(x) in self }`; exact by substitution, no
    /// invertibility needed.
    pub fn affine_preimage(&self, f: &AffineMap) -> Result<Polytope, GeomError> {
        if f.dim != self.dim {
            return Err(GeomError::DimMismatch(f.dim, self.dim));
        }
        let hs = self
            .halfspaces
            .iter()
            .map(|h| {
                let n: Vec<f64> = (0..self.dim)
                    .map(|j| (0..self.dim).map(|i| h.normal[i] * f.matrix[i][j]).sum())
                    .collect();
                Halfspace::new(n, h.offset - dot(&h.normal, &f.offset))
            })
            .collect();
        Ok(Polytope { dim: self.dim, halfspaces: hs })
    }

    /// Per-axis extremes via LP. Errors on unbounded input.
    pub fn bounding_box(&self) -> Result<(Vec<f64>, Vec<f64>), GeomError> {
        let cons = self.constraints();
        let mut lo = vec![0.0; self.dim];
        let mut hi = vec![0.0; self.dim];
        for i in 0..self.dim {
            let mut obj = vec![0.0; self.dim];
            obj[i] = 1.0;
            for (sense, target) in [(Sense::Minimize, &mut lo[i]), (Sense::Maximize, &mut hi[i])] {
                let out = lp::solve(&LinearProgram {
                    objective: obj.clone(),
                    sense,
                    constraints: cons.clone(),
                    bounds: None,
                })?;
                match out.status {
                    lp::LpStatus::Optimal => *target = out.value,
                    lp::LpStatus::Unbounded => return Err(GeomError::Unbounded),
                    lp::LpStatus::Infeasible => return Err(GeomError::Empty),
                }
            }
        }
        Ok((lo, hi))
    }

    /// Drop near-duplicate and LP-redundant half-spaces. Best effort; never
    /// required for correctness.
    pub fn pruned(&self) -> Polytope {
        // Normalise and drop duplicates, keeping the tightest offset.
        let mut rows: Vec<Halfspace> = Vec::new();
        for h in &self.halfspaces {
            let nn = norm(&h.normal);
            if nn < 1e-300 {
                continue; // 0 <= c is either trivial or hopeless; feasibility tests catch the latter
            }
            let unit: Vec<f64> = h.normal.iter().map(|v| v / nn).collect();
            let off = h.offset / nn;
            if let Some(existing) = rows.iter_mut().find(|r| {
                r.normal.iter().zip(&unit).all(|(a, b)| (a - b).abs() < 1e-9)
            }) {
                existing.offset = existing.offset.min(off);
            } else {
                rows.push(Halfspace::new(unit, off));
            }
        }
        if rows.len() > self.dim + 1 {
            let mut keep: Vec<Halfspace> = rows.clone();
            let mut i = 0;
            while i < keep.len() && keep.len() > self.dim + 1 {
                let others: Vec<Constraint> = keep
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, h)| Constraint::new(h.normal.clone(), Relation::Le, h.offset))
                    .collect();
                let lp1 = LinearProgram {
                    objective: keep[i].normal.clone(),
                    sense: Sense::Maximize,
                    constraints: others,
                    bounds: None,
                };
                let redundant = match lp::solve(&lp1) {
                    Ok(out) => {
                        out.status == lp::LpStatus::Optimal
                            && out.value <= keep[i].offset + 1e-9 * (1.0 + keep[i].offset.abs())
                    }
                    Err(_) => false,
                };
                if redundant {
                    keep.remove(i);
                } else {
                    i += 1;
                }
            }
            rows = keep;
        }
        Polytope { dim: self.dim, halfspaces: rows }
    }

    /// Vertex enumeration for dimension <= 3: every subset of `dim` linearly
    /// independent constraints is solved and feasible solutions are kept.
    pub fn vertices(&self) -> Result<Vec<Vec<f64>>, GeomError> {
        if self.dim > 3 {
            return Err(GeomError::UnsupportedDim(self.dim));
        }
        if self.is_empty() {
            return Ok(vec![]);
        }
        self.bounding_box()?; // rejects unbounded input
        let p = self.pruned();
        let m = p.halfspaces.len();
        let d = p.dim;
        let scale: f64 = p
            .halfspaces
            .iter()
            .map(|h| h.offset.abs())
            .fold(1.0, f64::max);
        let tol = 1e-7 * scale;
        let mut verts: Vec<Vec<f64>> = Vec::new();
        let mut combo = vec![0usize; d];
        enumerate_combinations(m, d, &mut combo, 0, 0, &mut |idx: &[usize]| {
            let a: Vec<Vec<f64>> = idx.iter().map(|&i| p.halfspaces[i].normal.clone()).collect();
            let b: Vec<f64> = idx.iter().map(|&i| p.halfspaces[i].offset).collect();
            if let Some(x) = solve_square(&a, &b) {
                if p.halfspaces
                    .iter()
                    .all(|h| dot(&h.normal, &x) <= h.offset + tol)
                    && !verts.iter().any(|v| dist_inf(v, &x) < 1e-7 * scale.max(1.0))
                {
                    verts.push(x);
                }
            }
        });
        Ok(verts)
    }

    /// Lebesgue measure for dimension <= 3: interval length, shoelace over
    /// angularly ordered vertices, or a facet-fan tetrahedralisation.
    pub fn volume(&self) -> Result<f64, GeomError> {
        if self.dim > 3 {
            return Err(GeomError::UnsupportedDim(self.dim));
        }
        let verts = self.vertices()?;
        if verts.len() <= self.dim {
            return Ok(0.0);
        }
        match self.dim {
            1 => {
                let lo = verts.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
                let hi = verts.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
                Ok((hi - lo).max(0.0))
            }
            2 => Ok(shoelace(&order_ccw(&verts))),
            3 => self.volume3(&verts),
            _ => unreachable!(),
        }
    }

    fn volume3(&self, verts: &[Vec<f64>]) -> Result<f64, GeomError> {
        let p = self.pruned();
        let centroid: Vec<f64> = (0..3)
            .map(|i| verts.iter().map(|v| v[i]).sum::<f64>() / verts.len() as f64)
            .collect();
        let scale: f64 = p.halfspaces.iter().map(|h| h.offset.abs()).fold(1.0, f64::max);
        let mut total = 0.0;
        for h in &p.halfspaces {
            let on_facet: Vec<&Vec<f64>> = verts
                .iter()
                .filter(|v| (dot(&h.normal, v) - h.offset).abs() <= 1e-6 * scale)
                .collect();
            if on_facet.len() < 3 {
                continue;
            }
            // Order facet vertices around their centroid within the plane.
            let fc: Vec<f64> = (0..3)
                .map(|i| on_facet.iter().map(|v| v[i]).sum::<f64>() / on_facet.len() as f64)
                .collect();
            let n = &h.normal;
            let mut u = cross(n, &[1.0, 0.0, 0.0]);
            if norm(&u) < 1e-9 {
                u = cross(n, &[0.0, 1.0, 0.0]);
            }
            let un = norm(&u);
            let u: Vec<f64> = u.iter().map(|v| v / un).collect();
            let w = cross(n, &u);
            let wn = norm(&w);
            let w: Vec<f64> = w.iter().map(|v| v / wn).collect();
            let mut pts: Vec<(f64, &Vec<f64>)> = on_facet
                .iter()
                .map(|v| {
                    let rel: Vec<f64> = (0..3).map(|i| v[i] - fc[i]).collect();
                    (dot(&rel, &u).atan2(dot(&rel, &w)), *v)
                })
                .collect();
            pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            for k in 1..pts.len() - 1 {
                total += tet_volume(&centroid, pts[0].1, pts[k].1, pts[k + 1].1);
            }
        }
        Ok(total)
    }
}

fn enumerate_combinations(
    m: usize,
    d: usize,
    combo: &mut Vec<usize>,
    pos: usize,
    start: usize,
    f: &mut impl FnMut(&[usize]),
) {
    if pos == d {
        f(combo);
        return;
    }
    for i in start..m {
        combo[pos] = i;
        enumerate_combinations(m, d, combo, pos + 1, i + 1, f);
    }
}

fn solve_square(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().cloned().collect();
    let mut rhs = b.to_vec();
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| m[i][k].abs().partial_cmp(&m[j][k].abs()).unwrap())?;
        if m[piv][k].abs() < 1e-10 {
            return None;
        }
        m.swap(piv, k);
        rhs.swap(piv, k);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            for j in k..n {
                m[i][j] -= f * m[k][j];
            }
            rhs[i] -= f * rhs[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| m[k][j] * x[j]).sum();
        x[k] = (rhs[k] - s) / m[k][k];
    }
    Some(x)
}

fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn cross(a: &[f64], b: &[f64]) -> Vec<f64> {
    vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn tet_volume(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> f64 {
    let u: Vec<f64> = (0..3).map(|i| b[i] - a[i]).collect();
    let v: Vec<f64> = (0..3).map(|i| c[i] - a[i]).collect();
    let w: Vec<f64> = (0..3).map(|i| d[i] - a[i]).collect();
    (dot(&u, &cross(&v, &w)).abs()) / 6.0
}

/// Counter-clockwise ordering of convex polygon vertices around the centroid.
pub fn order_ccw(verts: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = verts.len() as f64;
    let cx = verts.iter().map(|v| v[0]).sum::<f64>() / n;
    let cy = verts.iter().map(|v| v[1]).sum::<f64>() / n;
    let mut out = verts.to_vec();
    out.sort_by(|a, b| {
        let ta = (a[1] - cy).atan2(a[0] - cx);
        let tb = (b[1] - cy).atan2(b[0] - cx);
        ta.partial_cmp(&tb).unwrap()
    });
    out
}

fn shoelace(verts: &[Vec<f64>]) -> f64 {
    let n = verts.len();
    let mut s = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        s += verts[i][0] * verts[j][1] - verts[j][0] * verts[i][1];
    }
    s.abs() / 2.0
}

/// Decompose `p \ q` into convex pieces: one per half-space of `q`, each
/// taking the previous half-spaces as satisfied. Boundary overlaps are
/// measure zero and resolved by region order downstream.
pub fn convex_difference(p: &Polytope, q: &Polytope) -> Result<Vec<Polytope>, GeomError> {
    let mut pieces = Vec::new();
    let mut prefix: Vec<Halfspace> = Vec::new();
    for h in q.halfspaces() {
        let mut hs = p.halfspaces.to_vec();
        hs.extend(prefix.iter().cloned());
        hs.push(h.complement());
        let cand = Polytope::new(p.dim, hs)?;
        if cand.has_interior() {
            pieces.push(cand.pruned());
        }
        prefix.push(h.clone());
    }
    Ok(pieces)
}

/// Finite connected partition: ordered regions with payloads. Lookup returns
/// the first containing region, which is how boundary ownership is resolved.
#[derive(Debug, Clone)]
pub struct Fcp<P> {
    pub regions: Vec<(Polytope, P)>,
}

impl<P> Fcp<P> {
    pub fn new(regions: Vec<(Polytope, P)>) -> Self {
        Fcp { regions }
    }

    pub fn lookup(&self, x: &[f64]) -> Option<(usize, &P)> {
        self.regions
            .iter()
            .enumerate()
            .find(|(_, (poly, _))| poly.contains(x))
            .map(|(i, (_, p))| (i, p))
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Refinement product: all pairwise intersections with interior, payloads
    /// combined. The result refines both inputs.
    pub fn product<Q, R>(&self, other: &Fcp<Q>, combine: impl Fn(&P, &Q) -> R) -> Result<Fcp<R>, GeomError> {
        let mut regions = Vec::new();
        for (pa, a) in &self.regions {
            for (pb, b) in &other.regions {
                let cand = pa.intersect(pb)?;
                if cand.has_interior() {
                    regions.push((cand.pruned(), combine(a, b)));
                }
            }
        }
        Ok(Fcp { regions })
    }

    pub fn total_volume(&self) -> Result<f64, GeomError> {
        let mut s = 0.0;
        for (poly, _) in &self.regions {
            s += poly.volume()?;
        }
        Ok(s)
    }

    /// Partition validity diagnostics against a declared domain: covering
    /// volume and pairwise interior overlaps.
    pub fn validate_partition(&self, domain: &Polytope) -> Vec<String> {
        let mut issues = Vec::new();
        match (self.total_volume(), domain.volume()) {
            (Ok(tv), Ok(dv)) => {
                if (tv - dv).abs() > EPS_VOL.max(1e-6 * dv.abs()) {
                    issues.push(format!("region volumes sum to {tv}, domain volume is {dv}"));
                }
            }
            _ => issues.push("volume computation failed during partition validation".into()),
        }
        for i in 0..self.regions.len() {
            for j in i + 1..self.regions.len() {
                if let Ok(ix) = self.regions[i].0.intersect(&self.regions[j].0) {
                    if ix.has_interior() {
                        if let Ok(v) = ix.volume() {
                            if v > EPS_VOL {
                                issues.push(format!("regions {i} and {j} overlap with volume {v}"));
                            }
                        }
                    }
                }
            }
        }
        issues
    }
}

/// One line of the plot-ready polygon dump:
/// `label;v1x,v1y;v2x,v2y;...;value` with counter-clockwise vertices.
pub fn write_polygon_line<W: Write>(
    w: &mut W,
    label: &str,
    poly: &Polytope,
    value: f64,
) -> Result<(), GeomError> {
    if poly.dim() != 2 {
        return Err(GeomError::UnsupportedDim(poly.dim()));
    }
    let verts = order_ccw(&poly.vertices()?);
    let mut line = String::from(label);
    for v in &verts {
        line.push_str(&format!(";{},{}", v[0], v[1]));
    }
    line.push_str(&format!(";{}", value));
    line.push('\n');
    w.write_all(line.as_bytes()).map_err(|_| GeomError::Empty)?;
    Ok(())
}
