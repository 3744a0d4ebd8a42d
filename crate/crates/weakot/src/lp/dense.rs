//! Dense two-phase primal simplex for equality-form LPs
//! `min c'x  s.t.  A x = b, x >= 0`,
//! with sparse columns, an explicit basis inverse refreshed by periodic
//! refactorization, deterministic pivoting (Dantzig with a permanent Bland
//! fallback on degeneracy stalls), and Farkas certificates on infeasibility.
//! Redundant equality rows are detected after phase 1 and dropped.

use crate::error::{Error, Result};

/// Equality-form LP. Columns are sparse (row, value) lists.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub n_rows: usize,
    pub cols: Vec<Vec<(usize, f64)>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// Phase-1 objective above this value means infeasible.
    pub feas_tol: f64,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub value: f64,
    /// Dual multipliers per original row.
    pub duals: Vec<f64>,
    /// max_j (y'A_j - c_j): dual feasibility violation, ~0 at optimality.
    pub dual_violation: f64,
    /// c'x - y'b, the certified duality gap.
    pub gap: f64,
    pub pivots: usize,
}

/// Infeasibility certificate: y'A_j <= 0 for every column, y'b > 0.
#[derive(Debug, Clone)]
pub struct Farkas {
    pub y: Vec<f64>,
    /// y'b after normalization of y to unit max norm.
    pub violation: f64,
    /// max_j y'A_j, reported for auditing (should be <= ~1e-9).
    pub max_col_activity: f64,
}

#[derive(Debug)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible(Farkas),
}

pub fn solve(problem: &LpProblem) -> Result<LpOutcome> {
    Solver::new(problem)?.run()
}

const PIVOT_TOL: f64 = 1e-11;
const REFACTOR_EVERY: usize = 64;

struct Solver {
    /// Current (possibly reduced) row count.
    m: usize,
    /// Original column count; artificials are indices n..n+m_orig.
    n: usize,
    m_orig: usize,
    /// Columns in original row indices, values pre-multiplied by row signs.
    cols: Vec<Vec<(usize, f64)>>,
    /// Current rhs (flipped nonnegative, reduced rows).
    b: Vec<f64>,
    c: Vec<f64>,
    feas_tol: f64,
    row_sign: Vec<f64>,
    /// Current row position of each original row; MAX if dropped.
    row_pos: Vec<usize>,
    /// Original row index of each current row.
    row_map: Vec<usize>,

    basis: Vec<usize>,
    in_basis: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    bland: bool,
    stall: usize,
    pivots: usize,
    since_refactor: usize,
}

impl Solver {
    fn new(p: &LpProblem) -> Result<Self> {
        let m = p.n_rows;
        let n = p.cols.len();
        if p.b.len() != m || p.c.len() != n || m == 0 || n == 0 {
            return Err(Error::ShapeMismatch {
                expected: format!("{m} rows with {n} cols"),
                got: format!("b: {}, c: {}", p.b.len(), p.c.len()),
            });
        }
        let mut row_sign = vec![1.0; m];
        let mut b = p.b.clone();
        for (r, br) in b.iter_mut().enumerate() {
            if !br.is_finite() {
                return Err(Error::NonFinite("rhs"));
            }
            if *br < 0.0 {
                *br = -*br;
                row_sign[r] = -1.0;
            }
        }
        let mut cols = Vec::with_capacity(n);
        for col in &p.cols {
            let mut flipped = Vec::with_capacity(col.len());
            for &(r, v) in col {
                if r >= m {
                    return Err(Error::ShapeMismatch {
                        expected: format!("row < {m}"),
                        got: format!("row {r}"),
                    });
                }
                if !v.is_finite() {
                    return Err(Error::NonFinite("constraint matrix"));
                }
                flipped.push((r, v * row_sign[r]));
            }
            cols.push(flipped);
        }
        Ok(Self {
            m,
            n,
            m_orig: m,
            cols,
            b,
            c: p.c.clone(),
            feas_tol: p.feas_tol,
            row_sign,
            row_pos: (0..m).collect(),
            row_map: (0..m).collect(),
            basis: Vec::new(),
            in_basis: vec![false; n + m],
            binv: Vec::new(),
            xb: Vec::new(),
            bland: false,
            stall: 0,
            pivots: 0,
            since_refactor: 0,
        })
    }

    fn run(mut self) -> Result<LpOutcome> {
        // Phase 1: artificial identity basis, minimize total artificial mass.
        self.basis = (self.n..self.n + self.m).collect();
        for &j in &self.basis {
            self.in_basis[j] = true;
        }
        self.binv = identity(self.m);
        self.xb = self.b.clone();

        let mut phase1_cost = vec![0.0; self.n + self.m_orig];
        for cj in phase1_cost.iter_mut().skip(self.n) {
            *cj = 1.0;
        }
        self.pivot_loop(&phase1_cost, true)?;

        let infeasibility: f64 = self
            .basis
            .iter()
            .zip(&self.xb)
            .filter(|(&j, _)| j >= self.n)
            .map(|(_, &x)| x.max(0.0))
            .sum();
        if infeasibility > self.feas_tol {
            return Ok(LpOutcome::Infeasible(self.farkas(&phase1_cost)));
        }

        self.drive_out_artificials()?;

        // Phase 2 on original columns only.
        let mut phase2_cost = self.c.clone();
        phase2_cost.resize(self.n + self.m_orig, 0.0);
        self.refactor()?;
        self.pivot_loop(&phase2_cost, false)?;
        self.refactor()?;

        Ok(LpOutcome::Optimal(self.extract()))
    }

    /// Visit the nonzero entries of column j in current row coordinates.
    #[inline]
    fn for_each_entry<F: FnMut(usize, f64)>(&self, j: usize, mut f: F) {
        if j < self.n {
            for &(r_orig, v) in &self.cols[j] {
                let r = self.row_pos[r_orig];
                if r != usize::MAX {
                    f(r, v);
                }
            }
        } else {
            let r = self.row_pos[j - self.n];
            if r != usize::MAX {
                f(r, 1.0);
            }
        }
    }

    fn price(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &bi) in self.basis.iter().enumerate() {
            let cb = cost[bi];
            if cb != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yk, bk) in y.iter_mut().zip(row) {
                    *yk += cb * bk;
                }
            }
        }
        y
    }

    #[inline]
    fn reduced_cost(&self, cost: &[f64], y: &[f64], j: usize) -> f64 {
        let mut dot = 0.0;
        self.for_each_entry(j, |r, v| dot += y[r] * v);
        cost[j] - dot
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut d = vec![0.0; m];
        self.for_each_entry(j, |r, v| {
            for i in 0..m {
                d[i] += self.binv[i * m + r] * v;
            }
        });
        d
    }

    fn pivot_loop(&mut self, cost: &[f64], scan_artificials: bool) -> Result<()> {
        let n_scan = if scan_artificials { self.n + self.m_orig } else { self.n };
        let scale = cost.iter().fold(1.0_f64, |a, c| a.max(c.abs()));
        let enter_tol = 1e-10 * scale;
        let max_pivots = 50_000 + 200 * self.m;

        loop {
            let y = self.price(cost);
            let mut entering = None;
            let mut best = -enter_tol;
            for j in 0..n_scan {
                if self.in_basis[j] {
                    continue;
                }
                let red = self.reduced_cost(cost, &y, j);
                if red < best {
                    best = red;
                    entering = Some(j);
                    if self.bland {
                        break;
                    }
                }
            }
            let Some(j) = entering else {
                return Ok(());
            };

            let d = self.ftran(j);
            let mut leave: Option<usize> = None;
            let mut ratio = f64::INFINITY;
            for i in 0..self.m {
                if d[i] > PIVOT_TOL {
                    let r = self.xb[i].max(0.0) / d[i];
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            r < ratio - 1e-15
                                || ((r - ratio).abs() <= 1e-15 && self.basis[i] < self.basis[l])
                        }
                    };
                    if better {
                        ratio = r;
                        leave = Some(i);
                    }
                }
            }
            let Some(i) = leave else {
                return Err(Error::Internal("LP unbounded".into()));
            };

            self.apply_pivot(i, j, &d, ratio);
            self.pivots += 1;
            if ratio <= 1e-14 {
                self.stall += 1;
                if self.stall > 3 * self.m {
                    self.bland = true;
                }
            } else {
                self.stall = 0;
            }
            if self.pivots > max_pivots {
                return Err(Error::Internal(format!("simplex exceeded {max_pivots} pivots")));
            }
            self.since_refactor += 1;
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
        }
    }

    fn apply_pivot(&mut self, i: usize, j: usize, d: &[f64], ratio: f64) {
        let m = self.m;
        self.in_basis[self.basis[i]] = false;
        self.basis[i] = j;
        self.in_basis[j] = true;

        let piv = d[i];
        for k in 0..m {
            self.binv[i * m + k] /= piv;
        }
        for r in 0..m {
            if r != i && d[r] != 0.0 {
                let f = d[r];
                for k in 0..m {
                    self.binv[r * m + k] -= f * self.binv[i * m + k];
                }
            }
        }
        for r in 0..m {
            if r == i {
                self.xb[r] = ratio;
            } else {
                self.xb[r] -= d[r] * ratio;
                if self.xb[r] < 0.0 && self.xb[r] > -1e-12 {
                    self.xb[r] = 0.0;
                }
            }
        }
    }

    /// Rebuild the basis inverse and basic values from scratch.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut mat = vec![0.0; m * m];
        for (i, &j) in self.basis.iter().enumerate() {
            self.for_each_entry(j, |r, v| mat[r * m + i] = v);
        }
        self.binv = invert(&mat, m)
            .ok_or_else(|| Error::Internal("singular basis during refactorization".into()))?;
        let mut xb = vec![0.0; m];
        for (i, xbi) in xb.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in 0..m {
                s += self.binv[i * m + k] * self.b[k];
            }
            *xbi = if s < 0.0 && s > -1e-9 { 0.0 } else { s };
        }
        self.xb = xb;
        self.since_refactor = 0;
        Ok(())
    }

    fn farkas(&self, phase1_cost: &[f64]) -> Farkas {
        let y_cur = self.price(phase1_cost);
        let mut y = vec![0.0; self.m_orig];
        for (r, &yr) in y_cur.iter().enumerate() {
            let ro = self.row_map[r];
            y[ro] = yr * self.row_sign[ro];
        }
        let norm = y.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1e-300);
        let y: Vec<f64> = y.iter().map(|v| v / norm).collect();

        let mut max_act = f64::NEG_INFINITY;
        for col in &self.cols {
            let mut act = 0.0;
            for &(r, v) in col {
                // Stored values carry the row flip; undo it for original rows.
                act += y[r] * v * self.row_sign[r];
            }
            max_act = max_act.max(act);
        }
        let violation: f64 = y
            .iter()
            .enumerate()
            .map(|(ro, v)| {
                let r = self.row_pos[ro];
                if r == usize::MAX {
                    0.0
                } else {
                    v * self.b[r] * self.row_sign[ro]
                }
            })
            .sum();
        Farkas { y, violation, max_col_activity: max_act }
    }

    /// Pivot remaining artificials out of the basis; drop redundant rows.
    fn drive_out_artificials(&mut self) -> Result<()> {
        let mut dead_rows: Vec<usize> = Vec::new();
        for i in 0..self.m {
            if self.basis[i] < self.n {
                continue;
            }
            // Largest pivot among nonbasic original columns for stability.
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.n {
                if self.in_basis[j] {
                    continue;
                }
                let mut di = 0.0;
                self.for_each_entry(j, |r, v| di += self.binv[i * self.m + r] * v);
                if di.abs() > 1e-8 && best.map_or(true, |(_, e)| di.abs() > e.abs()) {
                    best = Some((j, di));
                }
            }
            match best {
                Some((j, _)) => {
                    let d = self.ftran(j);
                    self.apply_pivot(i, j, &d, 0.0);
                }
                None => dead_rows.push(i),
            }
        }
        if dead_rows.is_empty() {
            return Ok(());
        }

        let keep: Vec<usize> = (0..self.m).filter(|i| !dead_rows.contains(i)).collect();
        for &i in &dead_rows {
            self.in_basis[self.basis[i]] = false;
        }
        self.row_map = keep.iter().map(|&i| self.row_map[i]).collect();
        self.b = keep.iter().map(|&i| self.b[i]).collect();
        self.basis = keep.iter().map(|&i| self.basis[i]).collect();
        self.m = keep.len();
        self.row_pos = vec![usize::MAX; self.m_orig];
        for (pos, &ro) in self.row_map.iter().enumerate() {
            self.row_pos[ro] = pos;
        }
        self.binv = identity(self.m);
        self.xb = vec![0.0; self.m];
        self.refactor()
    }

    fn extract(self) -> LpSolution {
        let mut x = vec![0.0; self.n];
        for (i, &j) in self.basis.iter().enumerate() {
            if j < self.n {
                x[j] = self.xb[i].max(0.0);
            }
        }
        let value: f64 = x.iter().zip(&self.c).map(|(xi, ci)| xi * ci).sum();

        let mut cost = self.c.clone();
        cost.resize(self.n + self.m_orig, 0.0);
        let y_cur = self.price(&cost);
        let mut duals = vec![0.0; self.m_orig];
        for (r, &yr) in y_cur.iter().enumerate() {
            let ro = self.row_map[r];
            duals[ro] = yr * self.row_sign[ro];
        }

        let mut dual_violation = f64::NEG_INFINITY;
        for (j, col) in self.cols.iter().enumerate() {
            let mut act = 0.0;
            for &(r, v) in col {
                act += duals[r] * v * self.row_sign[r];
            }
            dual_violation = dual_violation.max(act - self.c[j]);
        }
        let yb: f64 = duals
            .iter()
            .enumerate()
            .map(|(ro, v)| {
                let r = self.row_pos[ro];
                if r == usize::MAX {
                    0.0
                } else {
                    v * self.b[r] * self.row_sign[ro]
                }
            })
            .sum();

        LpSolution { x, value, duals, dual_violation, gap: value - yb, pivots: self.pivots }
    }
}

fn identity(m: usize) -> Vec<f64> {
    let mut eye = vec![0.0; m * m];
    for i in 0..m {
        eye[i * m + i] = 1.0;
    }
    eye
}

/// Gauss-Jordan inverse with partial pivoting; None if singular.
fn invert(mat: &[f64], m: usize) -> Option<Vec<f64>> {
    let mut a = mat.to_vec();
    let mut inv = identity(m);
    for col in 0..m {
        let mut piv = col;
        for r in col + 1..m {
            if a[r * m + col].abs() > a[piv * m + col].abs() {
                piv = r;
            }
        }
        if a[piv * m + col].abs() < 1e-12 {
            return None;
        }
        if piv != col {
            for k in 0..m {
                a.swap(col * m + k, piv * m + k);
                inv.swap(col * m + k, piv * m + k);
            }
        }
        let p = a[col * m + col];
        for k in 0..m {
            a[col * m + k] /= p;
            inv[col * m + k] /= p;
        }
        for r in 0..m {
            if r != col && a[r * m + col] != 0.0 {
                let f = a[r * m + col];
                for k in 0..m {
                    a[r * m + k] -= f * a[col * m + k];
                    inv[r * m + k] -= f * inv[col * m + k];
                }
            }
        }
    }
    Some(inv)
}
