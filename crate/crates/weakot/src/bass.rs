//! 1D Bass-martingale fixed point.
//!
//! The martingale is M_t = E[grad_phi(W_1) | W_t] for a Brownian motion W
//! started at W_0 ~ alpha. For discrete nu the rearrangement
//! grad_phi = F_nu^{-1} o F_rho (rho = alpha * gamma) is a step function
//! with jumps Delta_j at thresholds t_j, so every Gaussian convolution has
//! an exact closed form:
//!
//!   g(w)      = y_0 + sum_j Delta_j Phi(w - t_j)
//!   f_s(w)    = y_0 + sum_j Delta_j Phi((w - t_j) / sqrt(1 - s))
//!   E[M_1 (W_1 - W_0)] = sum_i mu_i sum_j Delta_j pdf(t_j - w_i)
//!
//! The fixed-point loop adjusts the atoms of alpha until g pushes alpha
//! onto mu: w_i = g^{-1}(x_i), stopping when W2(g # alpha, mu) <= tol.

use crate::error::{Error, Result};
use crate::gaussian::{normal_cdf, normal_pdf};
use crate::measures::DiscreteMeasure;
use crate::ot::w2sq_quantile_1d;

/// Converged Bass fixed point between two 1D measures.
#[derive(Debug, Clone)]
pub struct BassResult {
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    /// Law of W_0; canonical form of the per-atom starts.
    pub alpha: DiscreteMeasure,
    /// W_0 position for each atom of mu (index-aligned with mu).
    starts: Vec<f64>,
    /// Diagnostic grid over the working domain.
    pub grid: Vec<f64>,
    /// grad_phi sampled on the grid (non-decreasing).
    pub phi_grad: Vec<f64>,
    /// g = grad_phi * gamma sampled on the grid (strictly increasing).
    pub smoothed_map: Vec<f64>,
    /// W2(g # alpha, mu) at acceptance.
    pub residual: f64,
    pub iterations: usize,
    pub residual_trace: Vec<f64>,
    /// Set when the residual failed to decrease across a trailing window.
    pub window_flag: bool,
    /// Point-mass branch (mu = nu = dirac): constant martingale.
    pub degenerate: bool,
    /// Lowest atom of nu.
    base: f64,
    /// (threshold t_j, jump Delta_j), sorted by threshold.
    jumps: Vec<(f64, f64)>,
}

/// Iterate the Bass fixed point. Preconditions: d = 1 and mu <=_c nu
/// (checked by the caller or surfaced as NonInvertible here).
pub fn bass_fixed_point_1d(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    grid_size: usize,
    tol: f64,
    max_iter: usize,
) -> Result<BassResult> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::NotOneDimensional(mu.dim().max(nu.dim())));
    }
    if grid_size < 8 {
        return Err(Error::InvalidParameter("grid_size must be at least 8".into()));
    }
    if tol <= 0.0 {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }

    if nu.is_dirac() {
        // Convex order pins mu = nu: the martingale is constant.
        if mu != nu {
            return Err(Error::NotInConvexOrder);
        }
        let a = nu.point(0)[0];
        let grid = make_grid(a - 6.0, a + 6.0, grid_size);
        return Ok(BassResult {
            mu: mu.clone(),
            nu: nu.clone(),
            alpha: DiscreteMeasure::dirac(vec![0.0]),
            starts: vec![0.0; mu.len()],
            phi_grad: vec![a; grid.len()],
            smoothed_map: vec![a; grid.len()],
            grid,
            residual: 0.0,
            iterations: 0,
            residual_trace: vec![0.0],
            window_flag: false,
            degenerate: true,
            base: a,
            jumps: Vec::new(),
        });
    }

    let xs = mu.scalars()?;
    let ys = nu.scalars()?;
    let (y_lo, y_hi) = (ys[0], ys[ys.len() - 1]);
    for &x in &xs {
        if x <= y_lo || x >= y_hi {
            return Err(Error::NonInvertible(format!(
                "mu atom {x} sits on the boundary of conv(supp nu) = [{y_lo}, {y_hi}]; \
                 the smoothed map cannot be inverted there"
            )));
        }
    }

    // Cumulative nu levels where the rearrangement jumps.
    let levels: Vec<f64> = {
        let mut cum = 0.0;
        nu.weights()[..nu.len() - 1]
            .iter()
            .map(|w| {
                cum += w;
                cum
            })
            .collect()
    };
    let deltas: Vec<f64> = ys.windows(2).map(|p| p[1] - p[0]).collect();

    let mut starts = xs.clone();
    let mut trace = Vec::new();
    let mut jumps: Vec<(f64, f64)> = Vec::new();

    for iter in 0..max_iter {
        jumps = levels
            .iter()
            .zip(&deltas)
            .map(|(&level, &delta)| (threshold_for_level(&starts, mu.weights(), level), delta))
            .collect();

        // Residual: W2 between g # alpha and mu.
        let image: Vec<f64> =
            starts.iter().map(|&w| smoothed_eval(ys[0], &jumps, w)).collect();
        let image_measure = DiscreteMeasure::from_scalars(&image, mu.weights())?;
        let residual = w2sq_quantile_1d(&image_measure, mu)?.max(0.0).sqrt();
        trace.push(residual);

        if residual <= tol {
            let lo = xs
                .iter()
                .chain(ys.iter())
                .chain(starts.iter())
                .fold(f64::INFINITY, |a, &v| a.min(v));
            let hi = xs
                .iter()
                .chain(ys.iter())
                .chain(starts.iter())
                .fold(f64::NEG_INFINITY, |a, &v| a.max(v));
            let grid = make_grid(lo - 6.0, hi + 6.0, grid_size);
            let phi_grad: Vec<f64> =
                grid.iter().map(|&u| step_eval(ys[0], &jumps, u)).collect();
            let smoothed_map: Vec<f64> =
                grid.iter().map(|&w| smoothed_eval(ys[0], &jumps, w)).collect();
            let window_flag = window_violation(&trace);
            return Ok(BassResult {
                mu: mu.clone(),
                nu: nu.clone(),
                alpha: DiscreteMeasure::from_scalars(&starts, mu.weights())?,
                starts,
                grid,
                phi_grad,
                smoothed_map,
                residual,
                iterations: iter,
                residual_trace: trace,
                window_flag,
                degenerate: false,
                base: ys[0],
                jumps,
            });
        }

        // alpha update: pull mu back through the smoothed map.
        let mut next = Vec::with_capacity(xs.len());
        for &x in &xs {
            next.push(invert_smoothed(ys[0], &jumps, x)?);
        }
        starts = next;
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        last_gap: trace.last().copied().unwrap_or(f64::NAN),
    })
}

/// True when the trailing residuals stopped decreasing over a full window.
fn window_violation(trace: &[f64]) -> bool {
    const WINDOW: usize = 8;
    (WINDOW..trace.len()).any(|i| trace[i] >= trace[i - WINDOW])
}

fn make_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + step * i as f64).collect()
}

/// Solve F_rho(t) = level for rho = alpha * gamma by bisection.
fn threshold_for_level(starts: &[f64], weights: &[f64], level: f64) -> f64 {
    let cdf = |t: f64| -> f64 {
        starts.iter().zip(weights).map(|(&w, &m)| m * normal_cdf(t - w)).sum()
    };
    let mut lo = starts.iter().fold(f64::INFINITY, |a, &v| a.min(v)) - 10.0;
    let mut hi = starts.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v)) + 10.0;
    while cdf(lo) > level {
        lo -= 10.0;
    }
    while cdf(hi) < level {
        hi += 10.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn step_eval(base: f64, jumps: &[(f64, f64)], u: f64) -> f64 {
    let mut v = base;
    for &(t, d) in jumps {
        if u > t {
            v += d;
        } else {
            break;
        }
    }
    v
}

fn smoothed_eval(base: f64, jumps: &[(f64, f64)], w: f64) -> f64 {
    let mut v = base;
    for &(t, d) in jumps {
        v += d * normal_cdf(w - t);
    }
    v
}

fn smoothed_time_eval(base: f64, jumps: &[(f64, f64)], w: f64, remaining_std: f64) -> f64 {
    if remaining_std <= 0.0 {
        return step_eval(base, jumps, w);
    }
    let mut v = base;
    for &(t, d) in jumps {
        v += d * normal_cdf((w - t) / remaining_std);
    }
    v
}

fn invert_smoothed(base: f64, jumps: &[(f64, f64)], x: f64) -> Result<f64> {
    let total: f64 = jumps.iter().map(|&(_, d)| d).sum();
    if x <= base || x >= base + total {
        return Err(Error::NonInvertible(format!(
            "target {x} outside the open range ({base}, {})",
            base + total
        )));
    }
    let first = jumps.first().map(|&(t, _)| t).unwrap_or(0.0);
    let last = jumps.last().map(|&(t, _)| t).unwrap_or(0.0);
    let mut lo = first - 10.0;
    let mut hi = last + 10.0;
    let mut gaurd = 0;
    while smoothed_eval(base, jumps, lo) > x {
        lo -= 10.0;
        gaurd += 1;
        if gaurd > 1000 {
            return Err(Error::NonInvertible(format!("no finite preimage for {x}")));
        }
    }
    while smoothed_eval(base, jumps, hi) < x {
        hi += 10.0;
        gaurd += 1;
        if gaurd > 1000 {
            return Err(Error::NonInvertible(format!("no finite preimage for {x}")));
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if smoothed_eval(base, jumps, mid) < x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

impl BassResult {
    pub fn mu(&self) -> &DiscreteMeasure {
        &self.mu
    }

    pub fn nu(&self) -> &DiscreteMeasure {
        &self.nu
    }

    /// W_0 position aligned with atom `idx` of mu.
    pub fn start_for_atom(&self, idx: usize) -> f64 {
        self.starts[idx]
    }

    /// Terminal map grad_phi (step function).
    pub fn terminal_map(&self, w: f64) -> f64 {
        if self.degenerate {
            return self.base;
        }
        step_eval(self.base, &self.jumps, w)
    }

    /// g(w) = E[grad_phi(w + Z)].
    pub fn smoothed_at(&self, w: f64) -> f64 {
        if self.degenerate {
            return self.base;
        }
        smoothed_eval(self.base, &self.jumps, w)
    }

    /// f_s(w) = E[grad_phi(w + sqrt(1-s) Z)] for inner time s in [0, 1].
    pub fn map_at(&self, s: f64, w: f64) -> f64 {
        if self.degenerate {
            return self.base;
        }
        smoothed_time_eval(self.base, &self.jumps, w, (1.0 - s).max(0.0).sqrt())
    }

    /// g^{-1}(x), defined on the open range of g.
    pub fn inverse_smoothed(&self, x: f64) -> Result<f64> {
        if self.degenerate {
            return Ok(0.0);
        }
        invert_smoothed(self.base, &self.jumps, x)
    }

    /// E[int_0^1 sigma_t dt] = E[M_1 (W_1 - W_0)], in closed form.
    pub fn expected_diffusion_integral(&self) -> f64 {
        if self.degenerate {
            return 0.0;
        }
        let mut total = 0.0;
        for (&w, &m) in self.starts.iter().zip(self.mu.weights()) {
            for &(t, d) in &self.jumps {
                total += m * d * normal_pdf(t - w);
            }
        }
        total
    }

    /// Tabulate f_s on the inner time grid s_k = k/n_steps. Each time slice
    /// gets its own w-resolution: features of f_s have width sqrt(1-s), so
    /// the row step is tied to that scale. The terminal slice k = n_steps is
    /// evaluated analytically from the step function.
    pub fn build_table(&self, n_steps: usize) -> BassTable {
        let lo = self.grid[0];
        let hi = self.grid[self.grid.len() - 1];
        let width = hi - lo;
        const PTS_PER_STD: f64 = 32.0;
        let mut rows = Vec::with_capacity(n_steps);
        for k in 0..n_steps {
            let s = k as f64 / n_steps as f64;
            let std = (1.0 - s).sqrt();
            let wanted = (PTS_PER_STD * width / std).ceil() as usize;
            let len = wanted.clamp(64, 65_536);
            let step = width / (len - 1) as f64;
            let values: Vec<f64> = (0..len)
                .map(|j| {
                    let w = lo + step * j as f64;
                    if self.degenerate {
                        self.base
                    } else {
                        smoothed_time_eval(self.base, &self.jumps, w, std)
                    }
                })
                .collect();
            rows.push(TableRow { step, values });
        }
        BassTable { n_steps, lo, rows, base: self.base, jumps: self.jumps.clone() }
    }
}

/// Tabulated f_s for fast path simulation.
#[derive(Debug, Clone)]
pub struct BassTable {
    n_steps: usize,
    lo: f64,
    rows: Vec<TableRow>,
    base: f64,
    jumps: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
struct TableRow {
    step: f64,
    values: Vec<f64>,
}

impl BassTable {
    /// f at inner step k, linear interpolation in w (clamped at the ends).
    /// The terminal step is the exact rearrangement.
    pub fn eval(&self, k: usize, w: f64) -> f64 {
        debug_assert!(k <= self.n_steps);
        if k == self.n_steps {
            return step_eval(self.base, &self.jumps, w);
        }
        let row = &self.rows[k];
        let (j, frac) = locate(self.lo, row.step, row.values.len(), w);
        let a = row.values[j];
        let b = row.values[j + 1];
        a + frac * (b - a)
    }

    /// Difference quotient of f at step k across the grid cell containing w.
    pub fn slope(&self, k: usize, w: f64) -> f64 {
        debug_assert!(k < self.n_steps);
        let row = &self.rows[k];
        let (j, _) = locate(self.lo, row.step, row.values.len(), w);
        (row.values[j + 1] - row.values[j]) / row.step
    }
}

fn locate(lo: f64, step: f64, len: usize, w: f64) -> (usize, f64) {
    let rel = (w - lo) / step;
    if rel <= 0.0 {
        return (0, 0.0);
    }
    if rel >= (len - 1) as f64 {
        return (len - 2, 1.0);
    }
    let j = (rel.floor() as usize).min(len - 2);
    (j, rel - j as f64)
}
