//! Primal network simplex on the transportation polytope.
//!
//! Solves min <c, x> over { x >= 0 : row sums = supply, column sums = demand }
//! exactly, with dual potentials as optimality certificate. All pivot rules
//! are deterministic (Dantzig with lexicographic ties, permanent switch to
//! Bland's rule after a degeneracy stall), so identical inputs produce
//! bit-identical solutions.
//!
//! [`TransportSimplex::reoptimize`] keeps the basis between calls, which is
//! what the Frank-Wolfe oracles lean on: consecutive gradient costs differ
//! little, so re-solves take a handful of pivots and no allocations.

use crate::error::{Error, Result};

/// Optimal basic solution of a transportation problem.
#[derive(Debug, Clone)]
pub struct TransportSolution {
    /// Row-major n x m flow matrix.
    pub flow: Vec<f64>,
    /// Objective value sum c_ij x_ij.
    pub value: f64,
    /// Row potentials u with u_i + v_j <= c_ij on all cells.
    pub dual_row: Vec<f64>,
    /// Column potentials v.
    pub dual_col: Vec<f64>,
    /// Pivot count, for diagnostics.
    pub pivots: usize,
}

impl TransportSolution {
    /// Dual objective sum u_i a_i + sum v_j b_j.
    pub fn dual_value(&self, supply: &[f64], demand: &[f64]) -> f64 {
        let u: f64 = self.dual_row.iter().zip(supply).map(|(u, a)| u * a).sum();
        let v: f64 = self.dual_col.iter().zip(demand).map(|(v, b)| v * b).sum();
        u + v
    }
}

/// Reusable solver state with warm restarts across cost changes.
#[derive(Debug, Clone)]
pub struct TransportSimplex {
    n: usize,
    m: usize,
    supply: Vec<f64>,
    demand: Vec<f64>,
    flow: Vec<f64>,
    basis: Vec<bool>,
    has_basis: bool,
    bland: bool,
    stall: usize,
    // Scratch state reused across calls.
    u: Vec<f64>,
    v: Vec<f64>,
    adj: Vec<Vec<(u32, u32)>>,
    node_stack: Vec<u32>,
    seen: Vec<bool>,
    parent: Vec<u32>,
    parent_cell: Vec<u32>,
    cycle: Vec<u32>,
}

impl TransportSimplex {
    pub fn new(supply: Vec<f64>, demand: Vec<f64>) -> Result<Self> {
        let n = supply.len();
        let m = demand.len();
        if n == 0 || m == 0 {
            return Err(Error::InvalidParameter("empty marginal".into()));
        }
        if supply.iter().chain(demand.iter()).any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::InvalidParameter(
                "marginal weights must be finite and positive".into(),
            ));
        }
        let sa: f64 = supply.iter().sum();
        let sb: f64 = demand.iter().sum();
        if (sa - sb).abs() > 1e-9 * sa.max(sb).max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "unbalanced marginals: {sa} vs {sb}"
            )));
        }
        Ok(Self {
            n,
            m,
            supply,
            demand,
            flow: vec![0.0; n * m],
            basis: vec![false; n * m],
            has_basis: false,
            bland: false,
            stall: 0,
            u: vec![0.0; n],
            v: vec![0.0; m],
            adj: vec![Vec::new(); n + m],
            node_stack: Vec::with_capacity(n + m),
            seen: vec![false; n + m],
            parent: vec![0; n + m],
            parent_cell: vec![0; n + m],
            cycle: Vec::with_capacity(n + m),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_cols(&self) -> usize {
        self.m
    }

    /// Current basic flow (valid after a `reoptimize`/`solve` call).
    pub fn flow(&self) -> &[f64] {
        &self.flow
    }

    pub fn potentials(&self) -> (&[f64], &[f64]) {
        (&self.u, &self.v)
    }

    pub fn objective(&self, cost: &[f64]) -> f64 {
        cost.iter().zip(&self.flow).map(|(c, x)| c * x).sum()
    }

    /// Re-optimize for a new cost matrix, warm-starting from the current
    /// basis. Returns the pivot count.
    pub fn reoptimize(&mut self, cost: &[f64]) -> Result<usize> {
        if cost.len() != self.n * self.m {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{} cost matrix", self.n, self.m),
                got: format!("{} entries", cost.len()),
            });
        }
        if cost.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("cost matrix"));
        }
        if !self.has_basis {
            self.northwest_corner();
            self.has_basis = true;
        }

        let scale = cost.iter().fold(1.0_f64, |acc, c| acc.max(c.abs()));
        let opt_tol = 1e-12 * scale;
        let max_pivots = 1000 + 200 * (self.n + self.m) * (self.n + self.m);

        let mut pivots = 0usize;
        loop {
            self.rebuild_adjacency();
            self.compute_potentials(cost)?;
            let Some((ei, ej)) = self.entering(cost, opt_tol) else {
                break;
            };
            self.pivot(ei, ej)?;
            pivots += 1;
            if pivots > max_pivots {
                return Err(Error::Internal(format!(
                    "transport simplex exceeded {max_pivots} pivots"
                )));
            }
        }
        Ok(pivots)
    }

    /// Solve with the given cost matrix and package the full solution.
    pub fn solve(&mut self, cost: &[f64]) -> Result<TransportSolution> {
        let pivots = self.reoptimize(cost)?;
        Ok(TransportSolution {
            flow: self.flow.clone(),
            value: self.objective(cost),
            dual_row: self.u.clone(),
            dual_col: self.v.clone(),
            pivots,
        })
    }

    fn northwest_corner(&mut self) {
        let (n, m) = (self.n, self.m);
        self.flow.iter_mut().for_each(|x| *x = 0.0);
        self.basis.iter_mut().for_each(|b| *b = false);
        let mut rem_a = self.supply.clone();
        let mut rem_b = self.demand.clone();
        let (mut i, mut j) = (0, 0);
        loop {
            let t = rem_a[i].min(rem_b[j]);
            self.flow[i * m + j] = t;
            self.basis[i * m + j] = true;
            rem_a[i] -= t;
            rem_b[j] -= t;
            if i == n - 1 && j == m - 1 {
                break;
            }
            // Advance exactly one index so the basis keeps n+m-1 cells;
            // ties advance the row and leave a degenerate zero cell.
            if i < n - 1 && (rem_a[i] < rem_b[j] || j == m - 1) {
                i += 1;
            } else {
                j += 1;
            }
        }
    }

    fn rebuild_adjacency(&mut self) {
        let (n, m) = (self.n, self.m);
        for list in self.adj.iter_mut() {
            list.clear();
        }
        for i in 0..n {
            for j in 0..m {
                if self.basis[i * m + j] {
                    let cell = (i * m + j) as u32;
                    self.adj[i].push(((n + j) as u32, cell));
                    self.adj[n + j].push((i as u32, cell));
                }
            }
        }
    }

    /// Solve u_i + v_j = c_ij on the basis spanning tree (u_0 = 0).
    fn compute_potentials(&mut self, cost: &[f64]) -> Result<()> {
        let (n, m) = (self.n, self.m);
        self.seen.iter_mut().for_each(|s| *s = false);
        self.node_stack.clear();
        self.node_stack.push(0);
        self.u[0] = 0.0;
        self.seen[0] = true;
        let mut visited = 0usize;
        while let Some(node) = self.node_stack.pop() {
            let node = node as usize;
            visited += 1;
            for idx in 0..self.adj[node].len() {
                let (next, cell) = self.adj[node][idx];
                let (next, cell) = (next as usize, cell as usize);
                if self.seen[next] {
                    continue;
                }
                self.seen[next] = true;
                if next >= n {
                    self.v[next - n] = cost[cell] - self.u[node];
                } else {
                    self.u[next] = cost[cell] - self.v[node - n];
                }
                self.node_stack.push(next as u32);
            }
        }
        if visited != n + m {
            return Err(Error::Internal("transport basis is not a spanning tree".into()));
        }
        Ok(())
    }

    fn entering(&self, cost: &[f64], tol: f64) -> Option<(usize, usize)> {
        let m = self.m;
        let mut best: Option<(usize, usize)> = None;
        let mut best_red = -tol;
        for i in 0..self.n {
            for j in 0..m {
                if self.basis[i * m + j] {
                    continue;
                }
                let red = cost[i * m + j] - self.u[i] - self.v[j];
                if red < best_red {
                    best_red = red;
                    best = Some((i, j));
                    if self.bland {
                        return best;
                    }
                }
            }
        }
        best
    }

    /// Bring (ei, ej) into the basis along the unique tree cycle.
    fn pivot(&mut self, ei: usize, ej: usize) -> Result<()> {
        let (n, m) = (self.n, self.m);
        // Path from row node ei to col node n+ej through basis edges (BFS
        // over the adjacency built for this pivot).
        self.seen.iter_mut().for_each(|s| *s = false);
        self.node_stack.clear();
        self.node_stack.push(ei as u32);
        self.seen[ei] = true;
        let target = n + ej;
        let mut head = 0usize;
        while head < self.node_stack.len() {
            let node = self.node_stack[head] as usize;
            head += 1;
            if node == target {
                break;
            }
            for idx in 0..self.adj[node].len() {
                let (next, cell) = self.adj[node][idx];
                let nx = next as usize;
                if !self.seen[nx] {
                    self.seen[nx] = true;
                    self.parent[nx] = node as u32;
                    self.parent_cell[nx] = cell;
                    self.node_stack.push(next);
                }
            }
        }
        if !self.seen[target] {
            return Err(Error::Internal("entering arc closes no cycle".into()));
        }

        // Cycle cells: entering (+), then alternating along the path.
        self.cycle.clear();
        self.cycle.push((ei * m + ej) as u32);
        let mut node = target;
        while node != ei {
            self.cycle.push(self.parent_cell[node]);
            node = self.parent[node] as usize;
        }
        // Odd positions are "minus" cells.
        let mut delta = f64::INFINITY;
        let mut leave = usize::MAX;
        for (pos, &cell) in self.cycle.iter().enumerate() {
            if pos % 2 == 1 {
                let cell = cell as usize;
                let x = self.flow[cell];
                if x < delta || (x == delta && cell < leave) {
                    delta = x;
                    leave = cell;
                }
            }
        }
        for (pos, &cell) in self.cycle.iter().enumerate() {
            let cell = cell as usize;
            if pos % 2 == 1 {
                self.flow[cell] -= delta;
            } else {
                self.flow[cell] += delta;
            }
        }
        self.flow[leave] = 0.0;
        self.basis[leave] = false;
        self.basis[ei * m + ej] = true;

        if delta == 0.0 {
            self.stall += 1;
            if self.stall > 2 * (n + m) {
                self.bland = true;
            }
        } else {
            self.stall = 0;
        }
        Ok(())
    }
}

/// One-shot transportation solve.
pub fn solve_transport(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<TransportSolution> {
    TransportSimplex::new(supply.to_vec(), demand.to_vec())?.solve(cost)
}
