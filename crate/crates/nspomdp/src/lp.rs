//! Small dense linear-program solver.
//!
//! Two-phase simplex on a dense tableau with Bland's anti-cycling rule.
//! Problems here are tiny (polytope feasibility, Chebyshev centres, the
//! upper-bound interpolation LPs), so no factorisation or sparsity is used.
//! Free variables are split into positive/negative parts, every row gets an
//! artificial variable, and equality constraints are kept as single rows.

use thiserror::Error;

/// Constraint-satisfaction tolerance for reported optima.
pub const EPS_LP: f64 = 1e-7;
/// Pivot elements below this are treated as zero.
const PIVOT_TOL: f64 = 1e-9;
/// A pivot larger than this in magnitude is reported as numerical instability.
const PIVOT_CAP: f64 = 1e12;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        Constraint { coeffs, relation, rhs }
    }
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub sense: Sense,
    pub constraints: Vec<Constraint>,
    /// Optional per-variable `[lo, hi]` bounds; use infinities for one-sided.
    pub bounds: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpOutcome {
    pub status: LpStatus,
    /// Objective value; meaningful only when `status == Optimal`.
    pub value: f64,
    /// Optimal assignment; meaningful only when `status == Optimal`.
    pub assignment: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("malformed program: {0}")]
    Malformed(String),
    #[error("numerical instability: pivot magnitude {0:.3e} exceeds cap")]
    NumericalInstability(f64),
    #[error("pivot iteration limit reached")]
    IterationLimit,
}

struct Tableau {
    rows: Vec<Vec<f64>>, // m x (ncols + 1), last entry is rhs
    obj: Vec<f64>,       // ncols + 1, last entry is -objective value
    basis: Vec<usize>,
    ncols: usize,
    art_start: usize, // columns >= art_start are artificial
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) -> Result<(), LpError> {
        let p = self.rows[r][c];
        if p.abs() > PIVOT_CAP {
            return Err(LpError::NumericalInstability(p));
        }
        let inv = 1.0 / p;
        for v in self.rows[r].iter_mut() {
            *v *= inv;
        }
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][c];
            if f != 0.0 {
                for j in 0..=self.ncols {
                    self.rows[i][j] -= f * self.rows[r][j];
                }
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for j in 0..=self.ncols {
                self.obj[j] -= f * self.rows[r][j];
            }
        }
        self.basis[r] = c;
        Ok(())
    }

    /// Minimize the current objective row with Bland's rule.
    /// `allowed` limits which columns may enter. Returns false on unboundedness.
    fn run(&mut self, allowed: &dyn Fn(usize) -> bool) -> Result<bool, LpError> {
        for _ in 0..MAX_PIVOTS {
            // Entering column: lowest index with negative reduced cost.
            let mut enter = None;
            for j in 0..self.ncols {
                if allowed(j) && self.obj[j] < -PIVOT_TOL {
                    enter = Some(j);
                    break;
                }
            }
            let Some(c) = enter else { return Ok(true) };
            // Ratio test; ties broken by smallest basic variable index (Bland).
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][c];
                if a > PIVOT_TOL {
                    let ratio = self.rows[i][self.ncols] / a;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - PIVOT_TOL
                                || (ratio < br + PIVOT_TOL && self.basis[i] < self.basis[bi])
                            {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((r, _)) = leave else { return Ok(false) };
            self.pivot(r, c)?;
        }
        Err(LpError::IterationLimit)
    }
}

/// Solve a linear program with the two-phase simplex method. Deterministic:
/// identical inputs produce bitwise-identical outcomes.
pub fn solve(lp: &LinearProgram) -> Result<LpOutcome, LpError> {
    let n = lp.objective.len();
    if n == 0 {
        return Err(LpError::Malformed("empty objective".into()));
    }
    for (i, c) in lp.constraints.iter().enumerate() {
        if c.coeffs.len() != n {
            return Err(LpError::Malformed(format!(
                "constraint {i} has {} coefficients, expected {n}",
                c.coeffs.len()
            )));
        }
    }
    if let Some(b) = &lp.bounds {
        if b.len() != n {
            return Err(LpError::Malformed("bounds length mismatch".into()));
        }
    }

    // Collect rows: user constraints plus bound rows.
    let mut rows: Vec<(Vec<f64>, Relation, f64)> = lp
        .constraints
        .iter()
        .map(|c| (c.coeffs.clone(), c.relation, c.rhs))
        .collect();
    if let Some(bounds) = &lp.bounds {
        for (j, &(lo, hi)) in bounds.iter().enumerate() {
            let mut unit = vec![0.0; n];
            unit[j] = 1.0;
            if lo.is_finite() {
                rows.push((unit.clone(), Relation::Ge, lo));
            }
            if hi.is_finite() {
                rows.push((unit, Relation::Le, hi));
            }
        }
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    // Columns: 2n split variables, slacks, artificials.
    let ncols = 2 * n + n_slack + m;
    let art_start = 2 * n + n_slack;
    let mut tab_rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut slack_idx = 0;
    for (i, (coeffs, rel, rhs)) in rows.iter().enumerate() {
        let mut row = vec![0.0; ncols + 1];
        for j in 0..n {
            row[2 * j] = coeffs[j];
            row[2 * j + 1] = -coeffs[j];
        }
        match rel {
            Relation::Le => {
                row[2 * n + slack_idx] = 1.0;
                slack_idx += 1;
            }
            Relation::Ge => {
                row[2 * n + slack_idx] = -1.0;
                slack_idx += 1;
            }
            Relation::Eq => {}
        }
        row[ncols] = *rhs;
        if row[ncols] < 0.0 {
            for v in row.iter_mut() {
                *v = -*v;
            }
        }
        row[art_start + i] = 1.0;
        basis.push(art_start + i);
        tab_rows.push(row);
    }

    // Phase 1: minimize the sum of artificials. The objective row starts as
    // minus the sum of all rows so that basic artificials have zero cost.
    let mut obj = vec![0.0; ncols + 1];
    for row in &tab_rows {
        for j in 0..=ncols {
            obj[j] -= row[j];
        }
    }
    for j in art_start..ncols {
        obj[j] += 1.0;
    }
    let mut t = Tableau { rows: tab_rows, obj, basis, ncols, art_start };
    t.run(&|_| true)?;
    let phase1 = -t.obj[t.ncols];
    // Relative feasibility threshold: residuals scale with the data.
    let rhs_scale = rows.iter().map(|r| r.2.abs()).fold(1.0, f64::max);
    if phase1 > EPS_LP * rhs_scale {
        return Ok(LpOutcome { status: LpStatus::Infeasible, value: 0.0, assignment: vec![] });
    }
    // Drive leftover artificials out of the basis where possible.
    for r in 0..t.rows.len() {
        if t.basis[r] >= t.art_start {
            let mut entered = false;
            for j in 0..t.art_start {
                if t.rows[r][j].abs() > PIVOT_TOL {
                    t.pivot(r, j)?;
                    entered = true;
                    break;
                }
            }
            if !entered {
                // Redundant row; leave the zero-valued artificial basic.
                t.rows[r][t.ncols] = 0.0;
            }
        }
    }

    // Phase 2: original objective over non-artificial columns.
    let sign = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut obj = vec![0.0; ncols + 1];
    for j in 0..n {
        obj[2 * j] = sign * lp.objective[j];
        obj[2 * j + 1] = -sign * lp.objective[j];
    }
    for r in 0..t.rows.len() {
        let b = t.basis[r];
        let c = obj[b];
        if c != 0.0 {
            for j in 0..=ncols {
                obj[j] -= c * t.rows[r][j];
            }
        }
    }
    t.obj = obj;
    let art_start2 = t.art_start;
    let bounded = t.run(&|j| j < art_start2)?;
    if !bounded {
        return Ok(LpOutcome { status: LpStatus::Unbounded, value: 0.0, assignment: vec![] });
    }

    let mut split = vec![0.0; 2 * n];
    for r in 0..t.rows.len() {
        if t.basis[r] < 2 * n {
            split[t.basis[r]] = t.rows[r][t.ncols];
        }
    }
    let assignment: Vec<f64> = (0..n).map(|j| split[2 * j] - split[2 * j + 1]).collect();
    let value = lp
        .objective
        .iter()
        .zip(&assignment)
        .map(|(c, x)| c * x)
        .sum();
    Ok(LpOutcome { status: LpStatus::Optimal, value, assignment })
}

/// Feasibility check: phase 1 only, zero objective.
pub fn feasible(n: usize, constraints: &[Constraint]) -> Result<bool, LpError> {
    let lp = LinearProgram {
        objective: vec![0.0; n],
        sense: Sense::Minimize,
        constraints: constraints.to_vec(),
        bounds: None,
    };
    Ok(solve(&lp)?.status == LpStatus::Optimal)
}
