//! Discrete-time simulation of admissible diffusion processes and Monte
//! Carlo estimation of the dynamic objectives.
//!
//! Every path derives two ChaCha streams from (seed, path index) — one for
//! the initial condition, one for the Brownian increments — so results are
//! bit-identical for any worker count. Per-path energy accumulators are
//! stored in the bundle; aggregation uses pairwise summation in path order.
//!
//! Trajectories are canonicalized at assembly: the stored path satisfies
//! `X_{k+1} = X_k + v_k dt + sigma_k dB_k + r_k` bit-exactly, where the
//! residual channel `r` is identically zero for Euler-built bundles and
//! carries the (small) Ito remainder for martingale legs evaluated through
//! conditional-expectation maps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bass::{bass_fixed_point_1d, BassResult};
use crate::convex_order::check_convex_order;
use crate::error::{Error, Result};
use crate::gaussian::normal_quantile;
use crate::measures::{DiscreteMeasure, PointMap};
use crate::ot::{t2, w2sq_quantile_1d};
use crate::util::{mean_se, pairwise_sum};

/// Monte Carlo paths with per-step drift/diffusion records and per-path
/// energy accumulators.
#[derive(Debug, Clone)]
pub struct PathBundle {
    dim: usize,
    n_paths: usize,
    n_steps: usize,
    dt: f64,
    seed: u64,
    /// n_paths x dim initial points.
    x0: Vec<f64>,
    /// n_paths x n_steps x dim Brownian increments (B_0 = 0).
    increments: Vec<f64>,
    /// n_paths x n_steps x dim drift at left endpoints.
    drift: Vec<f64>,
    /// n_paths x n_steps scalar diffusion coefficients.
    sigma: Vec<f64>,
    /// n_paths x (n_steps + 1) x dim trajectory.
    trajectory: Vec<f64>,
    /// Non-Euler remainder per step; None means identically zero.
    residual: Option<Vec<f64>>,
    /// Per-path int |v|^2 dt.
    drift_energy: Vec<f64>,
    /// Per-path int <B_t, v_t> dt.
    cross_term: Vec<f64>,
    /// Per-path int tr sigma dt.
    trace_term: Vec<f64>,
}

#[inline]
fn euler_step(x: f64, v: f64, dt: f64, sigma: f64, db: f64) -> f64 {
    x + v * dt + sigma * db
}

impl PathBundle {
    /// Assemble from raw per-path records, canonicalizing the trajectory so
    /// the Euler-plus-residual recursion replays bit-exactly.
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        dim: usize,
        n_paths: usize,
        n_steps: usize,
        dt: f64,
        seed: u64,
        x0: Vec<f64>,
        increments: Vec<f64>,
        drift: Vec<f64>,
        sigma: Vec<f64>,
        raw_trajectory: Option<Vec<f64>>,
    ) -> Result<Self> {
        let step_len = n_steps * dim;
        if x0.len() != n_paths * dim
            || increments.len() != n_paths * step_len
            || drift.len() != n_paths * step_len
            || sigma.len() != n_paths * n_steps
        {
            return Err(Error::ShapeMismatch {
                expected: "consistent path array lengths".into(),
                got: "mismatched array lengths".into(),
            });
        }

        let traj_len = (n_steps + 1) * dim;
        let mut trajectory = vec![0.0; n_paths * traj_len];
        let mut residual = vec![0.0; n_paths * step_len];
        let mut any_residual = false;
        for p in 0..n_paths {
            let t_base = p * traj_len;
            trajectory[t_base..t_base + dim].copy_from_slice(&x0[p * dim..(p + 1) * dim]);
            for k in 0..n_steps {
                let s = sigma[p * n_steps + k];
                for c in 0..dim {
                    let idx = p * step_len + k * dim + c;
                    let xk = trajectory[t_base + k * dim + c];
                    let e = euler_step(xk, drift[idx], dt, s, increments[idx]);
                    let next = match &raw_trajectory {
                        Some(raw) => {
                            let r = raw[t_base + (k + 1) * dim + c] - e;
                            residual[idx] = r;
                            if r != 0.0 {
                                any_residual = true;
                            }
                            e + r
                        }
                        None => e,
                    };
                    trajectory[t_base + (k + 1) * dim + c] = next;
                }
            }
        }

        // Per-path accumulators (left-endpoint Riemann sums).
        let mut drift_energy = vec![0.0; n_paths];
        let mut cross_term = vec![0.0; n_paths];
        let mut trace_term = vec![0.0; n_paths];
        let mut b_running = vec![0.0; dim];
        for p in 0..n_paths {
            let mut de = 0.0;
            let mut ct = 0.0;
            let mut tt = 0.0;
            b_running.iter_mut().for_each(|b| *b = 0.0);
            for k in 0..n_steps {
                let mut v2 = 0.0;
                let mut bv = 0.0;
                for c in 0..dim {
                    let idx = p * step_len + k * dim + c;
                    let v = drift[idx];
                    v2 += v * v;
                    bv += b_running[c] * v;
                }
                de += v2 * dt;
                ct += bv * dt;
                tt += sigma[p * n_steps + k] * dt;
                for c in 0..dim {
                    b_running[c] += increments[p * step_len + k * dim + c];
                }
            }
            drift_energy[p] = de;
            cross_term[p] = ct;
            trace_term[p] = tt;
        }

        Ok(Self {
            dim,
            n_paths,
            n_steps,
            dt,
            seed,
            x0,
            increments,
            drift,
            sigma,
            trajectory,
            residual: any_residual.then_some(residual),
            drift_energy,
            cross_term,
            trace_term,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn x0(&self, p: usize) -> &[f64] {
        &self.x0[p * self.dim..(p + 1) * self.dim]
    }

    pub fn point(&self, p: usize, k: usize) -> &[f64] {
        let base = p * (self.n_steps + 1) * self.dim + k * self.dim;
        &self.trajectory[base..base + self.dim]
    }

    pub fn drift_at(&self, p: usize, k: usize) -> &[f64] {
        let base = p * self.n_steps * self.dim + k * self.dim;
        &self.drift[base..base + self.dim]
    }

    pub fn sigma_at(&self, p: usize, k: usize) -> f64 {
        self.sigma[p * self.n_steps + k]
    }

    pub fn per_path_drift_energy(&self) -> &[f64] {
        &self.drift_energy
    }

    pub fn per_path_cross_term(&self) -> &[f64] {
        &self.cross_term
    }

    pub fn per_path_trace_term(&self) -> &[f64] {
        &self.trace_term
    }

    /// Largest magnitude in the non-Euler residual channel (0 for bundles
    /// built by the Euler recursion).
    pub fn max_euler_residual(&self) -> f64 {
        self.residual
            .as_deref()
            .map(|r| r.iter().fold(0.0_f64, |a, v| a.max(v.abs())))
            .unwrap_or(0.0)
    }

    /// Replay the stored recursion and return the worst deviation from the
    /// stored trajectory. Exactly 0.0 by construction.
    pub fn replay_max_deviation(&self) -> f64 {
        let step_len = self.n_steps * self.dim;
        let traj_len = (self.n_steps + 1) * self.dim;
        let mut worst = 0.0_f64;
        for p in 0..self.n_paths {
            for c in 0..self.dim {
                let mut x = self.x0[p * self.dim + c];
                for k in 0..self.n_steps {
                    let idx = p * step_len + k * self.dim + c;
                    let e = euler_step(
                        x,
                        self.drift[idx],
                        self.dt,
                        self.sigma[p * self.n_steps + k],
                        self.increments[idx],
                    );
                    x = match &self.residual {
                        Some(r) => e + r[idx],
                        None => e,
                    };
                    let stored = self.trajectory[p * traj_len + (k + 1) * self.dim + c];
                    worst = worst.max((x - stored).abs());
                }
            }
        }
        worst
    }

    /// Terminal values of 1D bundles.
    pub fn terminal_samples_1d(&self) -> Result<Vec<f64>> {
        if self.dim != 1 {
            return Err(Error::NotOneDimensional(self.dim));
        }
        let traj_len = self.n_steps + 1;
        Ok((0..self.n_paths)
            .map(|p| self.trajectory[p * traj_len + self.n_steps])
            .collect())
    }
}

/// Sample mean and standard error of one energy component.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ComponentEstimate {
    pub mean: f64,
    pub se: f64,
}

/// Monte Carlo estimates of the dynamic objective components.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EnergyEstimate {
    pub drift: ComponentEstimate,
    pub cross: ComponentEstimate,
    pub trace: ComponentEstimate,
    /// alpha * drift - beta * (cross + trace), combined from the component
    /// means; the standard error comes from the per-path combined sample.
    pub combined: ComponentEstimate,
    pub alpha: f64,
    pub beta: f64,
    pub n_paths: usize,
}

pub fn estimate_dynamic_objective(bundle: &PathBundle, alpha: f64, beta: f64) -> EnergyEstimate {
    let (d_mean, d_se) = mean_se(&bundle.drift_energy);
    let (c_mean, c_se) = mean_se(&bundle.cross_term);
    let (t_mean, t_se) = mean_se(&bundle.trace_term);
    let combined_sample: Vec<f64> = (0..bundle.n_paths)
        .map(|p| {
            alpha * bundle.drift_energy[p]
                - beta * (bundle.cross_term[p] + bundle.trace_term[p])
        })
        .collect();
    let (_, comb_se) = mean_se(&combined_sample);
    EnergyEstimate {
        drift: ComponentEstimate { mean: d_mean, se: d_se },
        cross: ComponentEstimate { mean: c_mean, se: c_se },
        trace: ComponentEstimate { mean: t_mean, se: t_se },
        combined: ComponentEstimate {
            mean: alpha * d_mean - beta * (c_mean + t_mean),
            se: comb_se,
        },
        alpha,
        beta,
        n_paths: bundle.n_paths,
    }
}

/// Per-path random streams: one for initial data, one for increments, so
/// X_0 is independent of the Brownian motion by construction.
fn path_streams(seed: u64, path: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut init = ChaCha8Rng::seed_from_u64(seed);
    init.set_stream(2 * path as u64);
    let mut brownian = ChaCha8Rng::seed_from_u64(seed);
    brownian.set_stream(2 * path as u64 + 1);
    (init, brownian)
}

/// Standard normal draw by inverse-cdf sampling on a midpoint-quantized
/// uniform (strictly inside (0,1)).
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u = ((rng.gen::<u64>() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0);
    normal_quantile(u)
}

fn sample_index(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    for (i, w) in weights.iter().enumerate() {
        cum += w;
        if u < cum {
            return i;
        }
    }
    weights.len() - 1
}

fn validate_mc_params(n_paths: usize, n_steps: usize) -> Result<()> {
    if n_paths == 0 || n_steps == 0 {
        return Err(Error::InvalidParameter("need at least one path and one step".into()));
    }
    Ok(())
}

/// X_0 ~ mu, v = map(X_0) - X_0 constant in time, no diffusion.
pub fn simulate_constant_drift(
    mu: &DiscreteMeasure,
    map: &PointMap,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<PathBundle> {
    validate_mc_params(n_paths, n_steps)?;
    let dim = mu.dim();
    // Resolve per-atom drift up front so missing support errors out here.
    let drift_per_atom: Result<Vec<Vec<f64>>> = mu
        .points()
        .iter()
        .map(|x| {
            let target = map.value_at(x)?;
            Ok(target.iter().zip(x).map(|(t, a)| t - a).collect())
        })
        .collect();
    let drift_per_atom = drift_per_atom?;

    let dt = 1.0 / n_steps as f64;
    let step_len = n_steps * dim;
    let mut x0 = vec![0.0; n_paths * dim];
    let mut increments = vec![0.0; n_paths * step_len];
    let mut drift = vec![0.0; n_paths * step_len];

    x0.par_chunks_mut(dim)
        .zip(increments.par_chunks_mut(step_len))
        .zip(drift.par_chunks_mut(step_len))
        .enumerate()
        .for_each(|(p, ((x0s, incs), drs))| {
            let (mut init, mut brownian) = path_streams(seed, p);
            let atom = sample_index(&mut init, mu.weights());
            x0s.copy_from_slice(mu.point(atom));
            let sqrt_dt = dt.sqrt();
            for k in 0..n_steps {
                for c in 0..dim {
                    incs[k * dim + c] = sqrt_dt * standard_normal(&mut brownian);
                    drs[k * dim + c] = drift_per_atom[atom][c];
                }
            }
        });

    let sigma = vec![0.0; n_paths * n_steps];
    PathBundle::assemble(dim, n_paths, n_steps, dt, seed, x0, increments, drift, sigma, None)
}

/// X_0 ~ mu with drift v_k = gain * B_k: genuinely path-dependent, used to
/// exercise the conditional-drift projection.
pub fn simulate_feedback_drift(
    mu: &DiscreteMeasure,
    gain: f64,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<PathBundle> {
    validate_mc_params(n_paths, n_steps)?;
    let dim = mu.dim();
    let dt = 1.0 / n_steps as f64;
    let step_len = n_steps * dim;
    let mut x0 = vec![0.0; n_paths * dim];
    let mut increments = vec![0.0; n_paths * step_len];
    let mut drift = vec![0.0; n_paths * step_len];

    x0.par_chunks_mut(dim)
        .zip(increments.par_chunks_mut(step_len))
        .zip(drift.par_chunks_mut(step_len))
        .enumerate()
        .for_each(|(p, ((x0s, incs), drs))| {
            let (mut init, mut brownian) = path_streams(seed, p);
            let atom = sample_index(&mut init, mu.weights());
            x0s.copy_from_slice(mu.point(atom));
            let sqrt_dt = dt.sqrt();
            let mut b = vec![0.0; dim];
            for k in 0..n_steps {
                for c in 0..dim {
                    drs[k * dim + c] = gain * b[c];
                    let db = sqrt_dt * standard_normal(&mut brownian);
                    incs[k * dim + c] = db;
                    b[c] += db;
                }
            }
        });

    let sigma = vec![0.0; n_paths * n_steps];
    PathBundle::assemble(dim, n_paths, n_steps, dt, seed, x0, increments, drift, sigma, None)
}

/// Pure Bass martingale paths: W_0 ~ alpha, M_t = f_t(W_t) from the
/// tabulated conditional-expectation map, diffusion coefficient recorded as
/// the difference quotient of f_t at the left endpoint.
pub fn simulate_bass_paths(
    bass: &BassResult,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<PathBundle> {
    validate_mc_params(n_paths, n_steps)?;
    let mu = bass.mu();
    let dt = 1.0 / n_steps as f64;
    let table = bass.build_table(n_steps);

    let mut x0 = vec![0.0; n_paths];
    let mut increments = vec![0.0; n_paths * n_steps];
    let mut sigma = vec![0.0; n_paths * n_steps];
    let mut raw_traj = vec![0.0; n_paths * (n_steps + 1)];

    x0.par_chunks_mut(1)
        .zip(increments.par_chunks_mut(n_steps))
        .zip(sigma.par_chunks_mut(n_steps))
        .zip(raw_traj.par_chunks_mut(n_steps + 1))
        .enumerate()
        .for_each(|(p, (((x0s, incs), sigs), traj))| {
            let (mut init, mut brownian) = path_streams(seed, p);
            let atom = sample_index(&mut init, mu.weights());
            let mut w = bass.start_for_atom(atom);
            let sqrt_dt = dt.sqrt();
            let m0 = table.eval(0, w);
            x0s[0] = m0;
            traj[0] = m0;
            for k in 0..n_steps {
                sigs[k] = table.slope(k, w);
                let db = sqrt_dt * standard_normal(&mut brownian);
                incs[k] = db;
                w += db;
                traj[k + 1] = table.eval(k + 1, w);
            }
        });

    let drift = vec![0.0; n_paths * n_steps];
    PathBundle::assemble(
        1,
        n_paths,
        n_steps,
        dt,
        seed,
        x0,
        increments,
        drift,
        sigma,
        Some(raw_traj),
    )
}

/// The composite process: constant drift map(X_0) - X_0 over the whole
/// horizon plus the Bass diffusion between map # mu and nu, driven by the
/// same clock ( dX = v dt + sigma_t dB ).
pub fn simulate_composite(
    mu: &DiscreteMeasure,
    map: &PointMap,
    bass: &BassResult,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<PathBundle> {
    validate_mc_params(n_paths, n_steps)?;
    if mu.dim() != 1 {
        return Err(Error::NotOneDimensional(mu.dim()));
    }
    // Resolve each mu atom to its start in the Bass chart.
    let mut targets = Vec::with_capacity(mu.len());
    let mut starts = Vec::with_capacity(mu.len());
    for x in mu.points() {
        let target = map.value_at(x)?[0];
        let idx = bass.mu().find_atom(&[target]).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "map image {target} is not an atom of the Bass initial law"
            ))
        })?;
        targets.push(target);
        starts.push(bass.start_for_atom(idx));
    }

    let dt = 1.0 / n_steps as f64;
    let table = bass.build_table(n_steps);
    let mut x0 = vec![0.0; n_paths];
    let mut increments = vec![0.0; n_paths * n_steps];
    let mut drift = vec![0.0; n_paths * n_steps];
    let mut sigma = vec![0.0; n_paths * n_steps];
    let mut raw_traj = vec![0.0; n_paths * (n_steps + 1)];

    x0.par_chunks_mut(1)
        .zip(increments.par_chunks_mut(n_steps))
        .zip(drift.par_chunks_mut(n_steps))
        .zip(sigma.par_chunks_mut(n_steps))
        .zip(raw_traj.par_chunks_mut(n_steps + 1))
        .enumerate()
        .for_each(|(p, ((((x0s, incs), drs), sigs), traj))| {
            let (mut init, mut brownian) = path_streams(seed, p);
            let atom = sample_index(&mut init, mu.weights());
            let x_start = mu.point(atom)[0];
            let v = targets[atom] - x_start;
            let mut w = starts[atom];
            let m0 = table.eval(0, w);
            let sqrt_dt = dt.sqrt();
            x0s[0] = x_start;
            traj[0] = x_start;
            for k in 0..n_steps {
                drs[k] = v;
                sigs[k] = table.slope(k, w);
                let db = sqrt_dt * standard_normal(&mut brownian);
                incs[k] = db;
                w += db;
                let t_next = (k + 1) as f64 * dt;
                traj[k + 1] = x_start + v * t_next + (table.eval(k + 1, w) - m0);
            }
        });

    PathBundle::assemble(
        1,
        n_paths,
        n_steps,
        dt,
        seed,
        x0,
        increments,
        drift,
        sigma,
        Some(raw_traj),
    )
}

/// Report of the time-split construction.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EpsilonSplitReport {
    /// Effective epsilon after rounding the split to whole steps.
    pub eps_effective: f64,
    /// T2(mu, eta) from the exact transport LP.
    pub transport_cost: f64,
    /// transport_cost / (1 - eps_effective): the predicted drift energy.
    pub expected_drift_energy: f64,
    /// Measured drift energy.
    pub drift_energy: ComponentEstimate,
    /// Terminal law against nu, with its sampling noise floor.
    pub terminal: W2Check,
    /// Residual of the Bass fixed point used for the martingale window.
    pub bass_residual: f64,
}

/// Time-split construction: optimal transport drift mu -> eta compressed
/// onto [0, 1-eps], then the Bass martingale eta -> nu compressed onto
/// (1-eps, 1] with diffusion scaled by 1/sqrt(eps).
pub fn epsilon_split_simulate(
    mu: &DiscreteMeasure,
    eta: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    eps: f64,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<(PathBundle, EpsilonSplitReport)> {
    validate_mc_params(n_paths, n_steps)?;
    if mu.dim() != 1 || eta.dim() != 1 || nu.dim() != 1 {
        return Err(Error::NotOneDimensional(mu.dim().max(eta.dim()).max(nu.dim())));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0,1), got {eps}")));
    }
    if !check_convex_order(eta, nu)?.verdict {
        return Err(Error::NotInConvexOrder);
    }

    let transport = t2(mu, eta)?;
    let plan = transport.coupling;
    let bass = bass_fixed_point_1d(eta, nu, 256, 1e-4, 5000)?;

    let k1 = (((1.0 - eps) * n_steps as f64).round() as usize).clamp(1, n_steps - 1);
    let k2 = n_steps - k1;
    let eps_eff = k2 as f64 / n_steps as f64;
    let dt = 1.0 / n_steps as f64;
    let drift_window = k1 as f64 * dt;
    let sqrt_eps = eps_eff.sqrt();
    let table = bass.build_table(k2);

    let mut x0 = vec![0.0; n_paths];
    let mut increments = vec![0.0; n_paths * n_steps];
    let mut drift = vec![0.0; n_paths * n_steps];
    let mut sigma = vec![0.0; n_paths * n_steps];
    let mut raw_traj = vec![0.0; n_paths * (n_steps + 1)];

    x0.par_chunks_mut(1)
        .zip(increments.par_chunks_mut(n_steps))
        .zip(drift.par_chunks_mut(n_steps))
        .zip(sigma.par_chunks_mut(n_steps))
        .zip(raw_traj.par_chunks_mut(n_steps + 1))
        .enumerate()
        .for_each(|(p, ((((x0s, incs), drs), sigs), traj))| {
            let (mut init, mut brownian) = path_streams(seed, p);
            let atom = sample_index(&mut init, mu.weights());
            let x_start = mu.point(atom)[0];
            // Conditional sampling from the transport plan row.
            let row = plan.row(atom);
            let row_mass: f64 = row.iter().sum();
            let u: f64 = init.gen::<f64>() * row_mass;
            let mut target_idx = row.len() - 1;
            let mut cum = 0.0;
            for (j, w) in row.iter().enumerate() {
                cum += w;
                if u < cum {
                    target_idx = j;
                    break;
                }
            }
            let y = eta.point(target_idx)[0];
            let v = (y - x_start) / drift_window;

            x0s[0] = x_start;
            traj[0] = x_start;
            let sqrt_dt = dt.sqrt();
            // Transport leg.
            let mut x = x_start;
            for k in 0..k1 {
                drs[k] = v;
                let db = sqrt_dt * standard_normal(&mut brownian);
                incs[k] = db;
                x = euler_step(x, v, dt, 0.0, db);
                traj[k + 1] = x;
            }
            // Martingale leg, shifted to start at the transport endpoint.
            let seam = x;
            let mut w = bass.start_for_atom(target_idx);
            let m0 = table.eval(0, w);
            for q in 0..k2 {
                let k = k1 + q;
                sigs[k] = table.slope(q, w) / sqrt_eps;
                let db = sqrt_dt * standard_normal(&mut brownian);
                incs[k] = db;
                w += db / sqrt_eps;
                traj[k + 1] = seam + (table.eval(q + 1, w) - m0);
            }
        });

    let bundle = PathBundle::assemble(
        1,
        n_paths,
        n_steps,
        dt,
        seed,
        x0,
        increments,
        drift,
        sigma,
        Some(raw_traj),
    )?;

    let (de_mean, de_se) = mean_se(&bundle.drift_energy);
    let samples = bundle.terminal_samples_1d()?;
    let report = EpsilonSplitReport {
        eps_effective: eps_eff,
        transport_cost: transport.value,
        expected_drift_energy: transport.value / (1.0 - eps_eff),
        drift_energy: ComponentEstimate { mean: de_mean, se: de_se },
        terminal: empirical_w2_check(&samples, nu, seed)?,
        bass_residual: bass.residual,
    };
    Ok((bundle, report))
}

/// W2 distance of an empirical sample from a discrete law, calibrated
/// against the sampling noise floor of the same sample size.
#[derive(Debug, Clone, serde::Serialize)]
pub struct W2Check {
    /// W2 between the empirical sample and the law.
    pub w2: f64,
    /// Mean empirical W2 of same-size samples drawn from the law itself.
    pub noise_mean: f64,
    /// Spread of that noise floor.
    pub noise_sd: f64,
}

impl W2Check {
    /// True when the measured distance is explained by `extra` (systematic
    /// budget) plus the sampling floor and three times its spread.
    pub fn within(&self, extra: f64) -> bool {
        self.w2 <= extra + self.noise_mean + 3.0 * self.noise_sd
    }
}

/// Compare an empirical sample against a law in W2, with the noise floor
/// estimated from 16 synthetic same-size samples drawn from the law.
pub fn empirical_w2_check(
    samples: &[f64],
    law: &DiscreteMeasure,
    seed: u64,
) -> Result<W2Check> {
    let empirical = DiscreteMeasure::binned_from_samples(samples, samples.len().min(4096))?;
    let w2 = w2sq_quantile_1d(&empirical, law)?.max(0.0).sqrt();

    let mut floor = Vec::with_capacity(16);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x57a7_f100_u64);
    for _ in 0..16 {
        let synthetic: Vec<f64> = (0..samples.len())
            .map(|_| law.point(sample_index(&mut rng, law.weights()))[0])
            .collect();
        let synth = DiscreteMeasure::binned_from_samples(&synthetic, synthetic.len().min(4096))?;
        floor.push(w2sq_quantile_1d(&synth, law)?.max(0.0).sqrt());
    }
    let (noise_mean, noise_se) = mean_se(&floor);
    Ok(W2Check { w2, noise_mean, noise_sd: noise_se * (floor.len() as f64).sqrt() })
}

/// Energy comparison for the conditional-drift projection.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ProjectionReport {
    pub original_drift_energy: f64,
    pub projected_drift_energy: f64,
    pub n_groups: usize,
}

/// Replace each path's drift by the per-step average over all paths sharing
/// the same X_0 atom (the empirical E[v_t | X_0]); diffusion is dropped and
/// the trajectory rebuilt by the Euler recursion.
pub fn project_drift_on_initial(bundle: &PathBundle) -> Result<(PathBundle, ProjectionReport)> {
    let dim = bundle.dim;
    let n_paths = bundle.n_paths;
    let n_steps = bundle.n_steps;
    let step_len = n_steps * dim;

    // Group paths by exact X_0 bits (atoms are exact copies of measure
    // points, so bit equality is the right notion).
    let mut order: Vec<usize> = (0..n_paths).collect();
    let key = |p: usize| -> Vec<u64> {
        bundle.x0[p * dim..(p + 1) * dim].iter().map(|v| v.to_bits()).collect()
    };
    order.sort_by(|&a, &b| key(a).cmp(&key(b)).then(a.cmp(&b)));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &p in &order {
        match groups.last() {
            Some(g) if key(g[0]) == key(p) => groups.last_mut().unwrap().push(p),
            _ => groups.push(vec![p]),
        }
    }

    let mut new_drift = vec![0.0; n_paths * step_len];
    let mut scratch = Vec::new();
    for group in &groups {
        for k in 0..n_steps {
            for c in 0..dim {
                scratch.clear();
                scratch.extend(
                    group.iter().map(|&p| bundle.drift[p * step_len + k * dim + c]),
                );
                let avg = pairwise_sum(&scratch) / group.len() as f64;
                for &p in group {
                    new_drift[p * step_len + k * dim + c] = avg;
                }
            }
        }
    }

    let projected = PathBundle::assemble(
        dim,
        n_paths,
        n_steps,
        bundle.dt,
        bundle.seed,
        bundle.x0.clone(),
        bundle.increments.clone(),
        new_drift,
        vec![0.0; n_paths * n_steps],
        None,
    )?;
    let report = ProjectionReport {
        original_drift_energy: pairwise_sum(&bundle.drift_energy) / n_paths as f64,
        projected_drift_energy: pairwise_sum(&projected.drift_energy) / n_paths as f64,
        n_groups: groups.len(),
    };
    Ok((projected, report))
}
