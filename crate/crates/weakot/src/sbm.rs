//! Stretched-Brownian-motion value as an exact LP over martingale triple
//! couplings against a Gaussian reference grid.
//!
//! Maximizes sum Gamma(x,y,z) <y,z> subject to the pinned (x,z)-marginal
//! mu (x) gamma, the y-marginal nu, and the per-atom martingale constraint
//! sum_{y,z} Gamma(x,y,z) y = mu(x) x. The optimal value equals
//! int MCov(pi_x, gamma) mu(dx) at the optimal martingale coupling pi.

use crate::coupling::{Coupling, TripleCoupling};
use crate::error::{Error, Result};
use crate::lp::dense::{solve, LpOutcome, LpProblem};
use crate::measures::DiscreteMeasure;
use crate::tol;

/// Optimal triple coupling with dual certificate data.
#[derive(Debug, Clone)]
pub struct SbmResult {
    /// Optimal value of sum Gamma <y,z>, recomputed exactly from the triple.
    pub value: f64,
    pub triple: TripleCoupling,
    /// The (x,y) marginal of the triple: the optimal martingale coupling.
    pub martingale_coupling: Coupling,
    pub duals: SbmDuals,
    /// Certified duality gap of the LP solve.
    pub gap: f64,
    pub pivots: usize,
}

/// Dual multipliers for the maximization, grouped by constraint family.
/// They satisfy (pinned + nu + martingale) activity >= <y,z> - 1e-9 per
/// variable, with dual objective equal to the value up to the gap.
#[derive(Debug, Clone)]
pub struct SbmDuals {
    /// Per (x,z) cell, row-major n x K.
    pub pinned: Vec<f64>,
    /// Per y atom.
    pub nu: Vec<f64>,
    /// Per (x, coordinate).
    pub martingale: Vec<f64>,
}

/// Solve the SBM LP. Errors with [`Error::Infeasible`] when no martingale
/// coupling exists (mu not in convex order below nu).
pub fn solve_sbm(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    gamma: &DiscreteMeasure,
) -> Result<SbmResult> {
    let d = mu.dim();
    if nu.dim() != d || gamma.dim() != d {
        return Err(Error::DimensionMismatch(d, nu.dim().max(gamma.dim())));
    }
    let (n, m, kk) = (mu.len(), nu.len(), gamma.len());
    let n_vars = n * m * kk;
    if n_vars > tol::ATOM_BUDGET {
        return Err(Error::AtomBudget { requested: n_vars, budget: tol::ATOM_BUDGET });
    }

    // Rows: [0, n*K) pinned marginal, [nK, nK+m) nu marginal,
    // [nK+m, nK+m+n*d) martingale barycenters.
    let n_rows = n * kk + m + n * d;
    let mut cols = Vec::with_capacity(n_vars);
    let mut cost = Vec::with_capacity(n_vars);
    for i in 0..n {
        for k in 0..kk {
            for j in 0..m {
                let y = nu.point(j);
                let z = gamma.point(k);
                let mut col = vec![(i * kk + k, 1.0), (n * kk + j, 1.0)];
                for c in 0..d {
                    if y[c] != 0.0 {
                        col.push((n * kk + m + i * d + c, y[c]));
                    }
                }
                cols.push(col);
                // Maximize <y,z>: minimize the negation.
                cost.push(-y.iter().zip(z).map(|(a, b)| a * b).sum::<f64>());
            }
        }
    }
    let mut b = Vec::with_capacity(n_rows);
    for i in 0..n {
        for k in 0..kk {
            b.push(mu.weight(i) * gamma.weight(k));
        }
    }
    b.extend_from_slice(nu.weights());
    for i in 0..n {
        for c in 0..d {
            b.push(mu.weight(i) * mu.point(i)[c]);
        }
    }

    let problem =
        LpProblem { n_rows, cols, b, c: cost, feas_tol: tol::CONVEX_ORDER_FEAS };
    let sol = match solve(&problem)? {
        LpOutcome::Optimal(sol) => sol,
        LpOutcome::Infeasible(farkas) => {
            return Err(Error::Infeasible(format!(
                "no martingale triple coupling: Farkas violation {:.3e} (max column activity {:.3e}); mu is not in convex order below nu",
                farkas.violation, farkas.max_col_activity
            )));
        }
    };

    let triple = TripleCoupling::new(mu.clone(), nu.clone(), gamma.clone(), sol.x)?;
    let martingale_residual = triple.martingale_residual();
    if martingale_residual > tol::MARTINGALE {
        return Err(Error::Internal(format!(
            "martingale residual {martingale_residual:e} above tolerance"
        )));
    }
    let value = triple.inner_covariance();
    let gap = sol.gap.abs();
    if gap > tol::GAP_REL * (1.0 + value.abs()) {
        return Err(Error::Internal(format!("SBM duality gap {gap:e} out of tolerance")));
    }
    let martingale_coupling = triple.xy_marginal()?;

    // Maximization duals are the negated minimization duals.
    let duals = SbmDuals {
        pinned: sol.duals[0..n * kk].iter().map(|v| -v).collect(),
        nu: sol.duals[n * kk..n * kk + m].iter().map(|v| -v).collect(),
        martingale: sol.duals[n * kk + m..].iter().map(|v| -v).collect(),
    };

    Ok(SbmResult { value, triple, martingale_coupling, duals, gap, pivots: sol.pivots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check_convex_order;
    use crate::instances;
    use crate::measures::discretize_gaussian;
    use crate::ot::mcov;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_point(a: f64, b: f64) -> DiscreteMeasure {
        DiscreteMeasure::from_scalars(&[a, b], &[0.5, 0.5]).unwrap()
    }

    #[test]
    fn forced_conditional_matches_mcov() {
        // mu = delta_0: pi_x = nu is forced, so the value is MCov(nu, gamma).
        let mu = DiscreteMeasure::dirac(vec![0.0]);
        let nu = two_point(-1.0, 1.0);
        for n in [2usize, 8, 32] {
            let gamma = discretize_gaussian(n, 1).unwrap();
            let r = solve_sbm(&mu, &nu, &gamma).unwrap();
            let reference = mcov(&nu, &gamma).unwrap().value;
            assert_abs_diff_eq!(r.value, reference, epsilon = 1e-9);
        }
    }

    #[test]
    fn identical_marginals_give_zero() {
        // mu = nu: the only martingale coupling is the identity, and
        // MCov(delta_x, gamma) = <x, mean(gamma)> = 0.
        let mu = two_point(-0.5, 0.5);
        let gamma = discretize_gaussian(4, 1).unwrap();
        let r = solve_sbm(&mu, &mu, &gamma).unwrap();
        assert_abs_diff_eq!(r.value, 0.0, epsilon = 1e-10);
        // Identity coupling.
        assert_abs_diff_eq!(r.martingale_coupling.weight(0, 0), 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(r.martingale_coupling.weight(1, 1), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn reversed_convex_order_is_infeasible() {
        let mu = two_point(-1.0, 1.0);
        let nu = DiscreteMeasure::dirac(vec![0.0]);
        let gamma = discretize_gaussian(2, 1).unwrap();
        assert!(matches!(solve_sbm(&mu, &nu, &gamma), Err(Error::Infeasible(_))));
    }

    #[test]
    fn feasibility_iff_convex_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let gamma = discretize_gaussian(4, 1).unwrap();
        let mut feasible = 0;
        let mut infeasible = 0;
        for round in 0..14 {
            let mu = instances::random_measure_1d(&mut rng, 4, -2.0, 2.0);
            let nu = if round % 2 == 0 {
                instances::random_martingale_blowup(&mut rng, &mu)
            } else {
                instances::random_measure_1d(&mut rng, 4, -2.0, 2.0)
            };
            let in_order = check_convex_order(&mu, &nu).unwrap().verdict;
            match solve_sbm(&mu, &nu, &gamma) {
                Ok(_) => {
                    assert!(in_order, "LP feasible but convex order fails");
                    feasible += 1;
                }
                Err(Error::Infeasible(_)) => {
                    assert!(!in_order, "LP infeasible but convex order holds");
                    infeasible += 1;
                }
                Err(other) => panic!("unexpected error {other}"),
            }
        }
        assert!(feasible >= 5 && infeasible >= 3);
    }

    #[test]
    fn optimum_dominates_perturbed_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let gamma = discretize_gaussian(4, 1).unwrap();
        for _ in 0..5 {
            let (mu, nu) = instances::random_convex_order_pair(&mut rng, 3);
            let best = solve_sbm(&mu, &nu, &gamma).unwrap();

            // A generic feasible triple: martingale coupling tensor gamma.
            let cert = check_convex_order(&mu, &nu).unwrap();
            let crate::ConvexOrderWitness::Martingale(kappa) = &cert.witness else {
                panic!("convex order holds by construction")
            };
            let (n, m, kk) = (mu.len(), nu.len(), gamma.len());
            let mut base = vec![0.0; n * m * kk];
            for i in 0..n {
                for k in 0..kk {
                    for j in 0..m {
                        base[(i * kk + k) * m + j] = kappa.weight(i, j) * gamma.weight(k);
                    }
                }
            }
            for _ in 0..3 {
                let t: f64 = rng.gen_range(0.0..1.0);
                let mixed: Vec<f64> = best
                    .triple
                    .weights()
                    .iter()
                    .zip(&base)
                    .map(|(a, b)| (1.0 - t) * a + t * b)
                    .collect();
                let perturbed =
                    TripleCoupling::new(mu.clone(), nu.clone(), gamma.clone(), mixed).unwrap();
                assert!(perturbed.inner_covariance() <= best.value + 1e-9);
            }
        }
    }

    #[test]
    fn atom_order_does_not_change_the_value() {
        let gamma = discretize_gaussian(3, 1).unwrap();
        let mu = DiscreteMeasure::dirac(vec![0.1]);
        // Weights chosen so mean(nu) = 0.1 = mean(mu).
        let nu_a =
            DiscreteMeasure::from_scalars(&[-0.9, 0.35, 1.1], &[0.3875, 0.3, 0.3125]).unwrap();
        let nu_b =
            DiscreteMeasure::from_scalars(&[1.1, -0.9, 0.35], &[0.3125, 0.3875, 0.3]).unwrap();
        assert_eq!(nu_a, nu_b);
        let va = solve_sbm(&mu, &nu_a, &gamma).unwrap().value;
        let vb = solve_sbm(&mu, &nu_b, &gamma).unwrap().value;
        assert_eq!(va.to_bits(), vb.to_bits());
    }

    #[test]
    fn dual_certificate_covers_columns() {
        let mu = DiscreteMeasure::dirac(vec![0.0]);
        let nu = two_point(-1.0, 1.0);
        let gamma = discretize_gaussian(8, 1).unwrap();
        let r = solve_sbm(&mu, &nu, &gamma).unwrap();
        // Max-side dual feasibility per variable.
        for j in 0..nu.len() {
            for k in 0..gamma.len() {
                let y = nu.point(j)[0];
                let z = gamma.point(k)[0];
                let activity = r.duals.pinned[k] + r.duals.nu[j] + r.duals.martingale[0] * y;
                assert!(activity >= y * z - 1e-9);
            }
        }
    }
}
