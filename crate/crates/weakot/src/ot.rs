//! Exact discrete optimal transport with dual certificates, plus the
//! quadratic-cost and maximal-covariance specializations and their 1D
//! closed-form cross-checks.

use crate::coupling::Coupling;
use crate::error::{Error, Result};
use crate::lp::transport::TransportSimplex;
use crate::measures::DiscreteMeasure;
use crate::tol;
use crate::util::dot;

/// Optimal value with primal coupling and dual potentials.
///
/// For minimization problems the potentials satisfy
/// `dual_row(x) + dual_col(y) <= cost(x,y) + 1e-9`; [`mcov`] returns the
/// negated potentials, which certify the maximization from above.
#[derive(Debug, Clone)]
pub struct TransportResult {
    pub value: f64,
    pub coupling: Coupling,
    pub dual_row: Vec<f64>,
    pub dual_col: Vec<f64>,
    /// Certified duality gap, >= 0 and below `GAP_REL * (1 + |value|)`.
    pub gap: f64,
}

/// Exact transportation LP for an arbitrary cost matrix (row-major).
pub fn solve_ot(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &[f64],
) -> Result<TransportResult> {
    let sol = TransportSimplex::new(mu.weights().to_vec(), nu.weights().to_vec())?.solve(cost)?;
    let coupling = Coupling::new(mu.clone(), nu.clone(), sol.flow.clone())?;

    // Certificate checks are part of the contract, not optional debugging.
    let (n, m) = (mu.len(), nu.len());
    for i in 0..n {
        for j in 0..m {
            let slack = sol.dual_row[i] + sol.dual_col[j] - cost[i * m + j];
            if slack > tol::DUAL_FEAS {
                return Err(Error::Internal(format!(
                    "dual infeasibility {slack:e} at cell ({i},{j})"
                )));
            }
        }
    }
    let gap = sol.value - sol.dual_value(mu.weights(), nu.weights());
    if gap.abs() > tol::GAP_REL * (1.0 + sol.value.abs()) {
        return Err(Error::Internal(format!("duality gap {gap:e} out of tolerance")));
    }

    Ok(TransportResult {
        value: sol.value,
        coupling,
        dual_row: sol.dual_row,
        dual_col: sol.dual_col,
        gap: gap.max(0.0),
    })
}

/// Row-major quadratic cost |x_i - y_j|^2.
pub fn quadratic_cost(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Vec<f64> {
    mu.points()
        .iter()
        .flat_map(|x| {
            nu.points()
                .iter()
                .map(move |y| x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum())
        })
        .collect()
}

/// Squared 2-Wasserstein distance (quadratic-cost OT).
///
/// In 1D the LP value is verified against the quantile closed form
/// `int_0^1 (F_mu^{-1} - F_nu^{-1})^2 du` on the merged cdf grid.
pub fn t2(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<TransportResult> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch(mu.dim(), nu.dim()));
    }
    let result = solve_ot(mu, nu, &quadratic_cost(mu, nu))?;
    if mu.dim() == 1 {
        let closed = w2sq_quantile_1d(mu, nu)?;
        if (result.value - closed).abs() > tol::QUANTILE_VS_LP {
            return Err(Error::Internal(format!(
                "t2 LP value {} disagrees with quantile form {closed}",
                result.value
            )));
        }
    }
    Ok(result)
}

/// 1D squared Wasserstein distance by walking the merged cdf grid.
pub fn w2sq_quantile_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    merged_quantile_integral(mu, nu, |a, b| (a - b) * (a - b))
}

/// 1D comonotone (quantile) coupling value of <y, z>.
pub fn comonotone_covariance_1d(rho: &DiscreteMeasure, varrho: &DiscreteMeasure) -> Result<f64> {
    merged_quantile_integral(rho, varrho, |a, b| a * b)
}

fn merged_quantile_integral<F>(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    f: F,
) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
{
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::NotOneDimensional(mu.dim().max(nu.dim())));
    }
    let (mut i, mut j) = (0usize, 0usize);
    let (mut cum_mu, mut cum_nu) = (mu.weight(0), nu.weight(0));
    let mut level = 0.0_f64;
    let mut total = 0.0_f64;
    loop {
        let next = cum_mu.min(cum_nu).min(1.0);
        if next > level {
            total += (next - level) * f(mu.point(i)[0], nu.point(j)[0]);
            level = next;
        }
        if level >= 1.0 - 1e-15 {
            break;
        }
        if cum_mu <= cum_nu {
            i += 1;
            if i >= mu.len() {
                break;
            }
            cum_mu += mu.weight(i);
        } else {
            j += 1;
            if j >= nu.len() {
                break;
            }
            cum_nu += nu.weight(j);
        }
    }
    Ok(total)
}

/// Maximal covariance sup_{pi} int <y,z> dpi, solved as transport on -<y,z>.
///
/// In 1D the LP is cross-checked against the comonotone coupling value.
pub fn mcov(rho: &DiscreteMeasure, varrho: &DiscreteMeasure) -> Result<TransportResult> {
    if rho.dim() != varrho.dim() {
        return Err(Error::DimensionMismatch(rho.dim(), varrho.dim()));
    }
    let cost: Vec<f64> = rho
        .points()
        .iter()
        .flat_map(|y| varrho.points().iter().map(move |z| -dot(y, z)))
        .collect();
    let min_result = solve_ot(rho, varrho, &cost)?;
    let value = -min_result.value;
    if rho.dim() == 1 {
        let closed = comonotone_covariance_1d(rho, varrho)?;
        if (value - closed).abs() > tol::COMONOTONE_VS_LP {
            return Err(Error::Internal(format!(
                "mcov LP value {value} disagrees with comonotone form {closed}"
            )));
        }
    }
    Ok(TransportResult {
        value,
        coupling: min_result.coupling,
        dual_row: min_result.dual_row.iter().map(|u| -u).collect(),
        dual_col: min_result.dual_col.iter().map(|v| -v).collect(),
        gap: min_result.gap,
    })
}

/// Residual of the polarization identity
/// `T2(rho, varrho) = M2(rho) + M2(varrho) - 2 MCov(rho, varrho)`.
/// Contract: <= 1e-8 on every valid pair.
pub fn w2_mcov_identity_check(rho: &DiscreteMeasure, varrho: &DiscreteMeasure) -> Result<f64> {
    let t = t2(rho, varrho)?.value;
    let m = mcov(rho, varrho)?.value;
    Ok((t - rho.second_moment() - varrho.second_moment() + 2.0 * m).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::measures::discretize_gaussian;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_point(a: f64, b: f64) -> DiscreteMeasure {
        DiscreteMeasure::from_scalars(&[a, b], &[0.5, 0.5]).unwrap()
    }

    #[test]
    fn identical_measures_cost_nothing() {
        let m = DiscreteMeasure::from_scalars(&[0.0, 1.0, 2.5], &[0.2, 0.3, 0.5]).unwrap();
        let r = t2(&m, &m).unwrap();
        assert_abs_diff_eq!(r.value, 0.0, epsilon = 1e-12);
        // Diagonal coupling.
        for i in 0..3 {
            assert_abs_diff_eq!(r.coupling.weight(i, i), m.weight(i), epsilon = 1e-12);
        }
    }

    #[test]
    fn forced_split_costs_one() {
        let mu = DiscreteMeasure::dirac(vec![0.0]);
        let nu = two_point(-1.0, 1.0);
        assert_abs_diff_eq!(t2(&mu, &nu).unwrap().value, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t2(&nu, &mu).unwrap().value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn off_diagonal_cost_matrix() {
        let m = two_point(0.0, 1.0);
        let r = solve_ot(&m, &m, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(r.value, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn dirac_pair_distance() {
        let a = DiscreteMeasure::dirac(vec![1.0, 2.0]);
        let b = DiscreteMeasure::dirac(vec![4.0, 6.0]);
        assert_abs_diff_eq!(t2(&a, &b).unwrap().value, 25.0, epsilon = 1e-12);
    }

    #[test]
    fn monotone_matching() {
        let mu = two_point(-1.0, 1.0);
        let nu = two_point(-2.0, 2.0);
        // Quantile formula: (1/2)(-1+2)^2 + (1/2)(1-2)^2 = 1.
        assert_abs_diff_eq!(t2(&mu, &nu).unwrap().value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mcov_against_dirac_is_linear() {
        let rho = DiscreteMeasure::from_scalars(&[-1.0, 0.5, 2.0], &[0.3, 0.3, 0.4]).unwrap();
        let z = DiscreteMeasure::dirac(vec![3.0]);
        let expected = rho.mean()[0] * 3.0;
        assert_abs_diff_eq!(mcov(&rho, &z).unwrap().value, expected, epsilon = 1e-12);
    }

    #[test]
    fn mcov_of_symmetric_two_point() {
        let m = two_point(-1.0, 1.0);
        assert_abs_diff_eq!(mcov(&m, &m).unwrap().value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mcov_against_gaussian_grid() {
        let m = two_point(-1.0, 1.0);
        let g = discretize_gaussian(2, 1).unwrap();
        assert_abs_diff_eq!(
            mcov(&m, &g).unwrap().value,
            0.6744897501960817,
            epsilon = 1e-12
        );
    }

    #[test]
    fn identity_check_trivial_cases() {
        let zero = DiscreteMeasure::dirac(vec![0.0]);
        assert_abs_diff_eq!(w2_mcov_identity_check(&zero, &zero).unwrap(), 0.0, epsilon = 1e-14);
        let a = DiscreteMeasure::dirac(vec![1.5]);
        let b = DiscreteMeasure::dirac(vec![-2.0]);
        assert!(w2_mcov_identity_check(&a, &b).unwrap() <= 1e-12);
    }

    #[test]
    fn identity_check_random_pairs_with_closed_form_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..25 {
            let rho = instances::random_measure_1d(&mut rng, 4, -2.0, 2.0);
            let varrho = instances::random_measure_1d(&mut rng, 4, -2.0, 2.0);
            assert!(w2_mcov_identity_check(&rho, &varrho).unwrap() <= 1e-8);
            // Independent 1D routes for both sides of the identity.
            let lhs = w2sq_quantile_1d(&rho, &varrho).unwrap();
            let rhs = rho.second_moment() + varrho.second_moment()
                - 2.0 * comonotone_covariance_1d(&rho, &varrho).unwrap();
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
        }
    }

    #[test]
    fn mcov_cauchy_schwarz_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..25 {
            let rho = instances::random_measure_1d(&mut rng, 5, -2.0, 2.0);
            let varrho = instances::random_measure_1d(&mut rng, 5, -2.0, 2.0);
            let m = mcov(&rho, &varrho).unwrap().value;
            let bound = (rho.second_moment() * varrho.second_moment()).sqrt();
            assert!(m <= bound + 1e-9);
        }
    }

    #[test]
    fn solve_is_bitwise_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mu = instances::random_measure_1d(&mut rng, 6, -2.0, 2.0);
        let nu = instances::random_measure_1d(&mut rng, 6, -2.0, 2.0);
        let a = t2(&mu, &nu).unwrap();
        let b = t2(&mu, &nu).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.coupling.weights(), b.coupling.weights());
    }

    #[test]
    fn rejects_bad_shapes() {
        let mu = DiscreteMeasure::dirac(vec![0.0]);
        let nu = DiscreteMeasure::dirac(vec![0.0, 0.0]);
        assert!(t2(&mu, &nu).is_err());
        assert!(solve_ot(&mu, &mu, &[0.0, 1.0]).is_err());
        assert!(solve_ot(&mu, &mu, &[f64::NAN]).is_err());
    }
}
