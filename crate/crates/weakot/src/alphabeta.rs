//! The combined functional: alpha times the barycentric transport cost
//! minus beta times the Gaussian maximal-covariance reward, minimized over
//! triple couplings.
//!
//! Identifying the compound source w = (x, z) with mass mu(x) gamma(z), the
//! feasible set is the transportation polytope Pi(mu (x) gamma, nu) and the
//! same corrective Frank-Wolfe machinery as the WOT solver applies; the
//! joint minimization realizes the inner MCov supremum because for a fixed
//! (x,y)-marginal the z-part maximizes sum Gamma <y,z>.

use crate::coupling::{Coupling, TripleCoupling};
use crate::error::{Error, Result};
use crate::lp::fw::{self, QuadraticTransportProblem};
use crate::measures::DiscreteMeasure;
use crate::ot::mcov;
use crate::sbm::SbmResult;
use crate::util::pairwise_sum;
use crate::wot::WotResult;

#[derive(Debug, Clone)]
pub struct AlphaBetaResult {
    pub alpha: f64,
    pub beta: f64,
    /// Optimal value, recomputed exactly at the returned triple.
    pub value: f64,
    pub triple: TripleCoupling,
    /// The (x,y) marginal of the triple: the optimizing coupling.
    pub coupling: Coupling,
    pub fw_gap: f64,
    pub iterations: usize,
    pub monotone_violation: f64,
}

pub fn solve_static_alphabeta(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    gamma: &DiscreteMeasure,
    alpha: f64,
    beta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<AlphaBetaResult> {
    let d = mu.dim();
    if nu.dim() != d || gamma.dim() != d {
        return Err(Error::DimensionMismatch(d, nu.dim().max(gamma.dim())));
    }
    if alpha <= 0.0 || beta <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "alpha and beta must be positive, got ({alpha}, {beta})"
        )));
    }
    let (n, m, kk) = (mu.len(), nu.len(), gamma.len());
    if n * m * kk > crate::tol::ATOM_BUDGET {
        return Err(Error::AtomBudget {
            requested: n * m * kk,
            budget: crate::tol::ATOM_BUDGET,
        });
    }

    let mut row_weights = Vec::with_capacity(n * kk);
    let mut group_of_row = Vec::with_capacity(n * kk);
    for i in 0..n {
        for k in 0..kk {
            row_weights.push(mu.weight(i) * gamma.weight(k));
            group_of_row.push(i);
        }
    }
    let mut linear = Vec::with_capacity(n * kk * m);
    for _ in 0..n {
        for k in 0..kk {
            let z = gamma.point(k);
            for j in 0..m {
                let y = nu.point(j);
                linear.push(y.iter().zip(z).map(|(a, b)| a * b).sum());
            }
        }
    }

    let problem = QuadraticTransportProblem {
        row_weights,
        col_points: nu.points().to_vec(),
        col_weights: nu.weights().to_vec(),
        group_of_row,
        group_points: mu.points().to_vec(),
        group_weights: mu.weights().to_vec(),
        alpha,
        beta,
        linear,
    };
    let sol = fw::solve(&problem, tol, max_iter)?;

    let triple = TripleCoupling::new(mu.clone(), nu.clone(), gamma.clone(), sol.pi)?;
    let coupling = triple.xy_marginal()?;
    let value = objective_at(&coupling, &triple, alpha, beta)?;
    Ok(AlphaBetaResult {
        alpha,
        beta,
        value,
        triple,
        coupling,
        fw_gap: sol.gap,
        iterations: sol.iterations,
        monotone_violation: sol.monotone_violation,
    })
}

/// alpha sum_x mu(x)|mean(pi_x) - x|^2 - beta sum Gamma <y,z>, evaluated
/// exactly at the given triple.
fn objective_at(
    coupling: &Coupling,
    triple: &TripleCoupling,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    let mu = coupling.mu();
    let mut quad = 0.0;
    for i in 0..mu.len() {
        let mean = coupling.conditional_mean(i)?;
        let dev2: f64 = mean
            .iter()
            .zip(mu.point(i))
            .map(|(m, x)| (m - x) * (m - x))
            .sum();
        quad += mu.weight(i) * dev2;
    }
    Ok(alpha * quad - beta * triple.inner_covariance())
}

/// Compose the barycentric-WOT map with the stretched-Brownian coupling:
/// pi(x, y) = mu(x) kappa_{map(x)}(y), where kappa is the disintegration of
/// the SBM martingale coupling between the WOT projection and nu.
pub fn compose_optimizer(wot: &WotResult, sbm: &SbmResult) -> Result<Coupling> {
    let eta = sbm.martingale_coupling.mu();
    if *eta != wot.projection {
        return Err(Error::InvalidParameter(
            "SBM initial law does not match the WOT projection".into(),
        ));
    }
    let mu = wot.coupling.mu();
    let nu = sbm.martingale_coupling.nu();
    let m = nu.len();
    let mut weights = vec![0.0; mu.len() * m];
    for (i, x) in mu.points().iter().enumerate() {
        let target = wot.map.value_at(x)?;
        let a = eta.find_atom(target).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "projected atom {target:?} missing from the SBM initial law"
            ))
        })?;
        let row = sbm.martingale_coupling.row(a);
        let mass = pairwise_sum(row);
        for j in 0..m {
            weights[i * m + j] = mu.weight(i) * row[j] / mass;
        }
    }
    Coupling::new(mu.clone(), nu.clone(), weights)
}

/// Evaluate the combined functional at an arbitrary coupling, solving each
/// conditional maximal covariance exactly.
pub fn evaluate_alphabeta(
    pi: &Coupling,
    gamma: &DiscreteMeasure,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    let mu = pi.mu();
    let mut total = 0.0;
    for i in 0..mu.len() {
        let conditional = pi.conditional(i)?;
        let mean = conditional.mean();
        let dev2: f64 = mean
            .iter()
            .zip(mu.point(i))
            .map(|(m, x)| (m - x) * (m - x))
            .sum();
        let cov = mcov(&conditional, gamma)?.value;
        total += mu.weight(i) * (alpha * dev2 - beta * cov);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::measures::discretize_gaussian;
    use crate::sbm::solve_sbm;
    use crate::tol;
    use crate::wot::solve_barycentric_wot;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_point(a: f64, b: f64) -> DiscreteMeasure {
        DiscreteMeasure::from_scalars(&[a, b], &[0.5, 0.5]).unwrap()
    }

    #[test]
    fn double_dirac_is_zero() {
        let mu = DiscreteMeasure::dirac(vec![0.0]);
        let gamma = discretize_gaussian(4, 1).unwrap();
        let r = solve_static_alphabeta(&mu, &mu, &gamma, 1.0, 1.0, 1e-9, 10_000).unwrap();
        assert_abs_diff_eq!(r.value, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn forced_transport_to_dirac() {
        // nu = delta_b: MCov(delta_b, gamma) = <b, mean gamma> = 0, so the
        // value is alpha |b|^2.
        let mu = DiscreteMeasure::dirac(vec![0.0]);
        let nu = DiscreteMeasure::dirac(vec![1.5]);
        let gamma = discretize_gaussian(4, 1).unwrap();
        for (alpha, beta) in [(1.0, 1.0), (2.0, 0.5)] {
            let r =
                solve_static_alphabeta(&mu, &nu, &gamma, alpha, beta, 1e-9, 10_000).unwrap();
            assert_abs_diff_eq!(r.value, alpha * 2.25, epsilon = 1e-9);
        }
    }

    #[test]
    fn symmetric_split_reward() {
        // mu = delta_0, nu symmetric: pi_x = nu is forced, the mean term
        // vanishes and the value is -beta MCov(nu, gamma).
        let mu = DiscreteMeasure::dirac(vec![0.0]);
        let nu = two_point(-1.0, 1.0);
        let gamma = discretize_gaussian(2, 1).unwrap();
        let beta = 1.3;
        let r = solve_static_alphabeta(&mu, &nu, &gamma, 1.0, beta, 1e-9, 10_000).unwrap();
        assert_abs_diff_eq!(r.value, -beta * 0.6744897501960817, epsilon = 1e-9);
    }

    #[test]
    fn evaluate_matches_solver_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let gamma = discretize_gaussian(8, 1).unwrap();
        for _ in 0..6 {
            let mu = instances::random_measure_1d(&mut rng, 4, -2.0, 2.0);
            let nu = instances::random_measure_1d(&mut rng, 4, -2.0, 2.0);
            let r = solve_static_alphabeta(&mu, &nu, &gamma, 1.0, 1.0, 1e-8, 100_000).unwrap();
            let direct = evaluate_alphabeta(&r.coupling, &gamma, 1.0, 1.0).unwrap();
            assert_abs_diff_eq!(direct, r.value, epsilon = 1e-9);
            assert!(r.monotone_violation <= 1e-12);
        }
    }

    #[test]
    fn homogeneity_in_alpha_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let gamma = discretize_gaussian(8, 1).unwrap();
        let mu = instances::random_measure_1d(&mut rng, 4, -2.0, 2.0);
        let nu = instances::random_measure_1d(&mut rng, 4, -2.0, 2.0);
        let base = solve_static_alphabeta(&mu, &nu, &gamma, 1.0, 0.7, 1e-10, 100_000).unwrap();
        for c in [0.5, 3.0] {
            let scaled =
                solve_static_alphabeta(&mu, &nu, &gamma, c, c * 0.7, 1e-10, 100_000).unwrap();
            assert_abs_diff_eq!(scaled.value, c * base.value, epsilon = 1e-8);
        }
    }

    #[test]
    fn value_non_increasing_in_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let gamma = discretize_gaussian(8, 1).unwrap();
        for _ in 0..5 {
            let mu = instances::random_measure_1d(&mut rng, 4, -2.0, 2.0);
            let nu = instances::random_measure_1d(&mut rng, 4, -2.0, 2.0);
            let lo = solve_static_alphabeta(&mu, &nu, &gamma, 1.0, 0.5, 1e-9, 100_000).unwrap();
            let hi = solve_static_alphabeta(&mu, &nu, &gamma, 1.0, 1.5, 1e-9, 100_000).unwrap();
            assert!(hi.value <= lo.value + 1e-9);
        }
    }

    #[test]
    fn beta_to_zero_approaches_wot() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let gamma = discretize_gaussian(16, 1).unwrap();
        for _ in 0..4 {
            let mu = instances::random_measure_1d(&mut rng, 4, -2.0, 2.0);
            let nu = instances::random_measure_1d(&mut rng, 4, -2.0, 2.0);
            let tol = 1e-9;
            let wot = solve_barycentric_wot(&mu, &nu, tol, 100_000).unwrap();
            let mcov_bound =
                (nu.second_moment() * gamma.second_moment()).sqrt();
            for beta in [1e-3, 1e-5] {
                let r =
                    solve_static_alphabeta(&mu, &nu, &gamma, 1.0, beta, tol, 100_000).unwrap();
                assert!(r.value <= wot.value + tol);
                assert!(
                    r.value >= wot.value - beta * mcov_bound - tol,
                    "value {} below WOT {} minus beta bound {}",
                    r.value,
                    wot.value,
                    beta * mcov_bound
                );
            }
        }
    }

    #[test]
    fn composite_construction_examples() {
        let gamma = discretize_gaussian(32, 1).unwrap();
        // Convex-order case: map = identity, composite = the SBM coupling.
        let mu = DiscreteMeasure::dirac(vec![0.0]);
        let nu = two_point(-1.0, 1.0);
        let wot = solve_barycentric_wot(&mu, &nu, 1e-10, 10_000).unwrap();
        let sbm = solve_sbm(&wot.projection, &nu, &gamma).unwrap();
        let composite = compose_optimizer(&wot, &sbm).unwrap();
        assert_abs_diff_eq!(composite.weight(0, 0), 0.5, epsilon = 1e-9);

        // Point source: map 2 -> 0, kappa_0 = nu, composite = product.
        let mu2 = DiscreteMeasure::dirac(vec![2.0]);
        let wot2 = solve_barycentric_wot(&mu2, &nu, 1e-10, 10_000).unwrap();
        let sbm2 = solve_sbm(&wot2.projection, &nu, &gamma).unwrap();
        let composite2 = compose_optimizer(&wot2, &sbm2).unwrap();
        assert_abs_diff_eq!(composite2.weight(0, 0), 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(composite2.weight(0, 1), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn composite_is_feasible_and_never_beats_the_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let gamma = discretize_gaussian(32, 1).unwrap();
        let tol = 1e-7;
        for _ in 0..5 {
            let mu = instances::random_measure_1d(&mut rng, 4, -2.0, 2.0);
            let nu = instances::random_measure_1d(&mut rng, 4, -2.0, 2.0);
            let wot = solve_barycentric_wot(&mu, &nu, tol, tol::DEFAULT_MAX_ITER).unwrap();
            let sbm = solve_sbm(&wot.projection, &nu, &gamma).unwrap();
            let composite = compose_optimizer(&wot, &sbm).unwrap();
            // The composite splits as alpha * WOT value - beta * SBM value.
            let composed = evaluate_alphabeta(&composite, &gamma, 1.0, 1.0).unwrap();
            assert_abs_diff_eq!(composed, wot.value - sbm.value, epsilon = 1e-8);
            for (alpha, beta) in [(1.0, 1.0), (2.0, 0.5)] {
                let direct = solve_static_alphabeta(
                    &mu,
                    &nu,
                    &gamma,
                    alpha,
                    beta,
                    tol,
                    tol::DEFAULT_MAX_ITER,
                )
                .unwrap();
                let composed = evaluate_alphabeta(&composite, &gamma, alpha, beta).unwrap();
                assert!(
                    direct.value <= composed + 10.0 * tol,
                    "solver {} above a feasible coupling's value {composed}",
                    direct.value
                );
            }
        }
    }

    #[test]
    fn composite_is_exact_on_forced_instances() {
        // Single-atom mu forces the coupling, so the composite equals the
        // optimum exactly.
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let gamma = discretize_gaussian(32, 1).unwrap();
        let tol = 1e-8;
        for _ in 0..4 {
            let nu = instances::random_spread_measure_1d(&mut rng, 4, -2.0, 2.0);
            let mu = DiscreteMeasure::dirac(vec![0.37]);
            let wot = solve_barycentric_wot(&mu, &nu, tol, tol::DEFAULT_MAX_ITER).unwrap();
            let sbm = solve_sbm(&wot.projection, &nu, &gamma).unwrap();
            let composite = compose_optimizer(&wot, &sbm).unwrap();
            for (alpha, beta) in [(1.0, 1.0), (0.5, 2.0)] {
                let direct = solve_static_alphabeta(
                    &mu,
                    &nu,
                    &gamma,
                    alpha,
                    beta,
                    tol,
                    tol::DEFAULT_MAX_ITER,
                )
                .unwrap();
                let composed = evaluate_alphabeta(&composite, &gamma, alpha, beta).unwrap();
                assert_abs_diff_eq!(composed, direct.value, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn interior_mixtures_can_beat_the_martingale_composite() {
        // mu = nu = (delta_-1 + delta_1)/2: grad phi is the identity and the
        // SBM between mu and mu is the identity coupling, so the composite
        // value is exactly 0. The coupling polytope is the one-parameter
        // family [[p, 1/2-p], [1/2-p, p]], and interior mixtures trade a
        // positive mean penalty for a larger Gaussian covariance reward.
        // The solver must match the exhaustive scan and fall well below 0.
        let mu = DiscreteMeasure::from_scalars(&[-1.0, 1.0], &[0.5, 0.5]).unwrap();
        let gamma = discretize_gaussian(32, 1).unwrap();
        let (alpha, beta) = (1.0, 1.0);

        let mut brute = f64::INFINITY;
        for i in 0..=2000 {
            let p = 0.5 * i as f64 / 2000.0;
            let pi =
                Coupling::new(mu.clone(), mu.clone(), vec![p, 0.5 - p, 0.5 - p, p]).unwrap();
            brute = brute.min(evaluate_alphabeta(&pi, &gamma, alpha, beta).unwrap());
        }
        let direct =
            solve_static_alphabeta(&mu, &mu, &gamma, alpha, beta, 1e-9, 200_000).unwrap();
        assert_abs_diff_eq!(direct.value, brute, epsilon = 1e-4);

        let wot = solve_barycentric_wot(&mu, &mu, 1e-9, 10_000).unwrap();
        let sbm = solve_sbm(&wot.projection, &mu, &gamma).unwrap();
        let composite = compose_optimizer(&wot, &sbm).unwrap();
        let composed = evaluate_alphabeta(&composite, &gamma, alpha, beta).unwrap();
        assert_abs_diff_eq!(composed, 0.0, epsilon = 1e-9);
        assert!(
            direct.value < composed - 0.3,
            "expected a macroscopic gap, got solver {} vs composite {composed}",
            direct.value
        );
    }

    #[test]
    fn rejects_bad_parameters() {
        let mu = DiscreteMeasure::dirac(vec![0.0]);
        let gamma = discretize_gaussian(2, 1).unwrap();
        assert!(solve_static_alphabeta(&mu, &mu, &gamma, 0.0, 1.0, 1e-8, 100).is_err());
        assert!(solve_static_alphabeta(&mu, &mu, &gamma, 1.0, -1.0, 1e-8, 100).is_err());
    }
}
