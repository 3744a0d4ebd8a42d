//! Convex-order certification via the martingale-coupling feasibility LP.
//!
//! mu '<=_c' nu holds exactly when a martingale coupling exists (Strassen).
//! The check solves the feasibility LP over couplings with per-atom
//! barycenter constraints; either outcome carries a replayable witness:
//! a martingale coupling, or a piecewise-affine convex separating function
//! extracted from the Farkas certificate.

use crate::coupling::Coupling;
use crate::error::{Error, Result};
use crate::lp::dense::{solve, LpOutcome, LpProblem};
use crate::measures::DiscreteMeasure;
use crate::tol;
use crate::util::dot;

/// Witness backing a convex-order verdict.
#[derive(Debug, Clone)]
pub enum ConvexOrderWitness {
    /// Feasible case: a coupling with marginals (mu, nu) and conditional
    /// barycenters fixed at the first coordinate.
    Martingale(Coupling),
    /// Infeasible case: a convex test function f(y) = max_i <slope_i, y> + b_i
    /// with integral gap int f dmu - int f dnu = margin > 0.
    Separator { slopes: Vec<Vec<f64>>, intercepts: Vec<f64>, margin: f64 },
}

#[derive(Debug, Clone)]
pub struct ConvexOrderCertificate {
    pub verdict: bool,
    pub witness: ConvexOrderWitness,
}

impl ConvexOrderCertificate {
    /// Re-check the stored witness against the pair it was issued for.
    /// Returns true when the witness reproduces the verdict.
    pub fn replay(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> bool {
        match &self.witness {
            ConvexOrderWitness::Martingale(pi) => {
                if !self.verdict {
                    return false;
                }
                replay_martingale(pi, mu, nu)
            }
            ConvexOrderWitness::Separator { slopes, intercepts, .. } => {
                if self.verdict {
                    return false;
                }
                separator_gap(slopes, intercepts, mu, nu) > 0.0
            }
        }
    }
}

fn replay_martingale(pi: &Coupling, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> bool {
    if pi.mu() != mu || pi.nu() != nu {
        return false;
    }
    let (n, m, d) = (mu.len(), nu.len(), mu.dim());
    for i in 0..n {
        let row: f64 = pi.row(i).iter().sum();
        if (row - mu.weight(i)).abs() > tol::MARGINAL {
            return false;
        }
        // Barycenter constraint: sum_j pi_ij y_j = mu_i x_i.
        for c in 0..d {
            let bary: f64 = (0..m).map(|j| pi.weight(i, j) * nu.point(j)[c]).sum();
            if (bary - mu.weight(i) * mu.point(i)[c]).abs() > tol::MARGINAL {
                return false;
            }
        }
    }
    for j in 0..m {
        let col: f64 = (0..n).map(|i| pi.weight(i, j)).sum();
        if (col - nu.weight(j)).abs() > tol::MARGINAL {
            return false;
        }
    }
    true
}

/// Integral gap int f dmu - int f dnu for f = max of affine pieces.
pub fn separator_gap(
    slopes: &[Vec<f64>],
    intercepts: &[f64],
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> f64 {
    let f = |y: &[f64]| -> f64 {
        slopes
            .iter()
            .zip(intercepts)
            .map(|(s, b)| dot(s, y) + b)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let int_mu: f64 = mu.points().iter().zip(mu.weights()).map(|(p, w)| w * f(p)).sum();
    let int_nu: f64 = nu.points().iter().zip(nu.weights()).map(|(p, w)| w * f(p)).sum();
    int_mu - int_nu
}

/// Decide whether mu <=_c nu, with a replayable witness either way.
pub fn check_convex_order(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<ConvexOrderCertificate> {
    check_convex_order_with_tol(mu, nu, tol::CONVEX_ORDER_FEAS)
}

/// As [`check_convex_order`] with an explicit feasibility tolerance for the
/// phase-1 LP (violations below it count as feasible).
pub fn check_convex_order_with_tol(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    feas_tol: f64,
) -> Result<ConvexOrderCertificate> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch(mu.dim(), nu.dim()));
    }
    let d = mu.dim();

    // Mean mismatch is already a disproof by a linear test function, and the
    // feasibility LP below would only find the same fact the hard way.
    let (mean_mu, mean_nu) = (mu.mean(), nu.mean());
    let gap_vec: Vec<f64> = mean_mu.iter().zip(&mean_nu).map(|(a, b)| a - b).collect();
    let gap_norm = gap_vec.iter().map(|g| g * g).sum::<f64>().sqrt();
    if gap_norm > 1e-9 {
        let slope: Vec<f64> = gap_vec.iter().map(|g| g / gap_norm).collect();
        let margin = separator_gap(&[slope.clone()], &[0.0], mu, nu);
        return Ok(ConvexOrderCertificate {
            verdict: false,
            witness: ConvexOrderWitness::Separator {
                slopes: vec![slope],
                intercepts: vec![0.0],
                margin,
            },
        });
    }

    let (n, m) = (mu.len(), nu.len());
    let n_rows = n + m + n * d;
    let mut cols = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            let mut col = vec![(i, 1.0), (n + j, 1.0)];
            for c in 0..d {
                let coeff = nu.point(j)[c] - mu.point(i)[c];
                if coeff != 0.0 {
                    col.push((n + m + i * d + c, coeff));
                }
            }
            cols.push(col);
        }
    }
    let mut b = Vec::with_capacity(n_rows);
    b.extend_from_slice(mu.weights());
    b.extend_from_slice(nu.weights());
    b.extend(std::iter::repeat(0.0).take(n * d));

    let problem = LpProblem { n_rows, cols, b, c: vec![0.0; n * m], feas_tol };

    match solve(&problem)? {
        LpOutcome::Optimal(sol) => {
            let pi = Coupling::new(mu.clone(), nu.clone(), sol.x)?;
            Ok(ConvexOrderCertificate {
                verdict: true,
                witness: ConvexOrderWitness::Martingale(pi),
            })
        }
        LpOutcome::Infeasible(farkas) => {
            // Farkas duals (p, q, s): p_x + q_y + <s_x, y - x> <= 0 on all
            // cells while p'mu + q'nu > 0. The convex function
            //   f(y) = max_x [ p_x + <s_x, y - x> ]
            // then separates: int f dmu >= p'mu > -q'nu >= int f dnu.
            let p = &farkas.y[0..n];
            let mut slopes = Vec::with_capacity(n);
            let mut intercepts = Vec::with_capacity(n);
            for i in 0..n {
                let s = farkas.y[n + m + i * d..n + m + (i + 1) * d].to_vec();
                let b0 = p[i] - dot(&s, mu.point(i));
                slopes.push(s);
                intercepts.push(b0);
            }
            let margin = separator_gap(&slopes, &intercepts, mu, nu);
            if margin <= 0.0 {
                return Err(Error::Internal(format!(
                    "infeasibility certificate failed to separate (margin {margin:e})"
                )));
            }
            Ok(ConvexOrderCertificate {
                verdict: false,
                witness: ConvexOrderWitness::Separator { slopes, intercepts, margin },
            })
        }
    }
}

/// 1D call-price criterion, used as an independent oracle in tests:
/// mu <=_c nu iff means match and int (y-k)_+ dmu <= int (y-k)_+ dnu at
/// every merged support point k.
pub fn convex_order_by_call_prices(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<bool> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::NotOneDimensional(mu.dim().max(nu.dim())));
    }
    if (mu.mean()[0] - nu.mean()[0]).abs() > 1e-9 {
        return Ok(false);
    }
    let call = |rho: &DiscreteMeasure, k: f64| -> f64 {
        rho.points()
            .iter()
            .zip(rho.weights())
            .map(|(p, w)| w * (p[0] - k).max(0.0))
            .sum()
    };
    for k in mu.points().iter().chain(nu.points().iter()) {
        if call(mu, k[0]) > call(nu, k[0]) + 1e-10 {
            return Ok(false);
        }
    }
    Ok(true)
}
