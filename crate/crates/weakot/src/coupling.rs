//! Couplings between discrete measures and triple couplings against a
//! Gaussian reference grid.

use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, PointMap};
use crate::tol;
use crate::util::pairwise_sum;

/// Joint weight matrix over support(mu) x support(nu) with prescribed
/// marginals (within [`tol::MARGINAL`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    /// Row-major n x m weights.
    weights: Vec<f64>,
}

impl Coupling {
    pub fn new(mu: DiscreteMeasure, nu: DiscreteMeasure, weights: Vec<f64>) -> Result<Self> {
        let (n, m) = (mu.len(), nu.len());
        if weights.len() != n * m {
            return Err(Error::ShapeMismatch {
                expected: format!("{n}x{m} weights"),
                got: format!("{}", weights.len()),
            });
        }
        let mut weights = weights;
        for w in &mut weights {
            if !w.is_finite() {
                return Err(Error::NonFinite("coupling weight"));
            }
            if *w < 0.0 {
                if *w < -1e-12 {
                    return Err(Error::InvalidMeasure(format!("negative coupling weight {w}")));
                }
                *w = 0.0;
            }
        }
        let c = Self { mu, nu, weights };
        c.check_marginals()?;
        Ok(c)
    }

    /// Independent coupling mu (x) nu.
    pub fn independent(mu: DiscreteMeasure, nu: DiscreteMeasure) -> Self {
        let weights: Vec<f64> = mu
            .weights()
            .iter()
            .flat_map(|&a| nu.weights().iter().map(move |&b| a * b))
            .collect();
        Self { mu, nu, weights }
    }

    fn check_marginals(&self) -> Result<()> {
        let (n, m) = (self.mu.len(), self.nu.len());
        for i in 0..n {
            let row = pairwise_sum(&self.weights[i * m..(i + 1) * m]);
            if (row - self.mu.weight(i)).abs() > tol::MARGINAL {
                return Err(Error::InvalidMeasure(format!(
                    "row {i} sums to {row}, expected {}",
                    self.mu.weight(i)
                )));
            }
        }
        for j in 0..m {
            let col: Vec<f64> = (0..n).map(|i| self.weights[i * m + j]).collect();
            let col = pairwise_sum(&col);
            if (col - self.nu.weight(j)).abs() > tol::MARGINAL {
                return Err(Error::InvalidMeasure(format!(
                    "column {j} sums to {col}, expected {}",
                    self.nu.weight(j)
                )));
            }
        }
        Ok(())
    }

    pub fn mu(&self) -> &DiscreteMeasure {
        &self.mu
    }

    pub fn nu(&self) -> &DiscreteMeasure {
        &self.nu
    }

    pub fn n_rows(&self) -> usize {
        self.mu.len()
    }

    pub fn n_cols(&self) -> usize {
        self.nu.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.nu.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.nu.len();
        &self.weights[i * m..(i + 1) * m]
    }

    /// Disintegration pi_x at row i: row weights normalized by mu(x).
    pub fn conditional(&self, i: usize) -> Result<DiscreteMeasure> {
        let mass = pairwise_sum(self.row(i));
        if mass <= 0.0 {
            return Err(Error::ZeroMassRow(i));
        }
        let w: Vec<f64> = self.row(i).iter().map(|v| v / mass).collect();
        DiscreteMeasure::new(self.nu.points().to_vec(), w)
    }

    /// mean(pi_x) at row i.
    pub fn conditional_mean(&self, i: usize) -> Result<Vec<f64>> {
        let mass = pairwise_sum(self.row(i));
        if mass <= 0.0 {
            return Err(Error::ZeroMassRow(i));
        }
        let d = self.nu.dim();
        let mut mean = vec![0.0; d];
        for (j, y) in self.nu.points().iter().enumerate() {
            let w = self.weight(i, j);
            for c in 0..d {
                mean[c] += w * y[c];
            }
        }
        mean.iter_mut().for_each(|v| *v /= mass);
        Ok(mean)
    }

    /// The map x -> mean(pi_x) on support(mu).
    pub fn barycentric_map(&self) -> Result<PointMap> {
        let values: Result<Vec<Vec<f64>>> =
            (0..self.mu.len()).map(|i| self.conditional_mean(i)).collect();
        PointMap::new(self.mu.points().to_vec(), values?)
    }

    /// Barycentric map together with the image measure (map # mu).
    pub fn barycentric_projection(&self) -> Result<(PointMap, DiscreteMeasure)> {
        let map = self.barycentric_map()?;
        let image = map.pushforward(&self.mu)?;
        Ok((map, image))
    }

    /// sum_{ij} cost[i][j] pi(i,j) for a row-major cost matrix.
    pub fn cost_inner(&self, cost: &[f64]) -> f64 {
        self.weights.iter().zip(cost).map(|(w, c)| w * c).sum()
    }
}

/// Weights over support(mu) x support(nu) x support(gamma) with the
/// (x,z)-marginal pinned to mu (x) gamma and y-marginal pinned to nu.
#[derive(Debug, Clone)]
pub struct TripleCoupling {
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    gamma: DiscreteMeasure,
    /// Indexed by ((i * K + k) * m + j) for x_i, z_k, y_j.
    weights: Vec<f64>,
}

impl TripleCoupling {
    pub fn new(
        mu: DiscreteMeasure,
        nu: DiscreteMeasure,
        gamma: DiscreteMeasure,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let (n, m, kk) = (mu.len(), nu.len(), gamma.len());
        if weights.len() != n * m * kk {
            return Err(Error::ShapeMismatch {
                expected: format!("{n}*{m}*{kk} weights"),
                got: format!("{}", weights.len()),
            });
        }
        let mut weights = weights;
        for w in &mut weights {
            if !w.is_finite() {
                return Err(Error::NonFinite("triple coupling weight"));
            }
            if *w < 0.0 {
                if *w < -1e-12 {
                    return Err(Error::InvalidMeasure(format!(
                        "negative triple coupling weight {w}"
                    )));
                }
                *w = 0.0;
            }
        }
        let t = Self { mu, nu, gamma, weights };
        t.check_marginals()?;
        Ok(t)
    }

    fn check_marginals(&self) -> Result<()> {
        let (n, m, kk) = (self.mu.len(), self.nu.len(), self.gamma.len());
        for i in 0..n {
            for k in 0..kk {
                let base = (i * kk + k) * m;
                let s = pairwise_sum(&self.weights[base..base + m]);
                let pinned = self.mu.weight(i) * self.gamma.weight(k);
                if (s - pinned).abs() > tol::MARGINAL {
                    return Err(Error::InvalidMeasure(format!(
                        "pinned (x,z) marginal off at ({i},{k}): {s} vs {pinned}"
                    )));
                }
            }
        }
        for j in 0..m {
            let col: Vec<f64> =
                (0..n * kk).map(|row| self.weights[row * m + j]).collect();
            let s = pairwise_sum(&col);
            if (s - self.nu.weight(j)).abs() > tol::MARGINAL {
                return Err(Error::InvalidMeasure(format!(
                    "y marginal off at {j}: {s} vs {}",
                    self.nu.weight(j)
                )));
            }
        }
        Ok(())
    }

    pub fn mu(&self) -> &DiscreteMeasure {
        &self.mu
    }

    pub fn nu(&self) -> &DiscreteMeasure {
        &self.nu
    }

    pub fn gamma(&self) -> &DiscreteMeasure {
        &self.gamma
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize, k: usize) -> f64 {
        self.weights[(i * self.gamma.len() + k) * self.nu.len() + j]
    }

    /// The (x,y) marginal pi(x,y) = sum_z Gamma(x,y,z).
    pub fn xy_marginal(&self) -> Result<Coupling> {
        let (n, m, kk) = (self.mu.len(), self.nu.len(), self.gamma.len());
        let mut w = vec![0.0; n * m];
        for i in 0..n {
            for k in 0..kk {
                let base = (i * kk + k) * m;
                for j in 0..m {
                    w[i * m + j] += self.weights[base + j];
                }
            }
        }
        Coupling::new(self.mu.clone(), self.nu.clone(), w)
    }

    /// sum Gamma(x,y,z) <y,z>.
    pub fn inner_covariance(&self) -> f64 {
        let (n, m, kk) = (self.mu.len(), self.nu.len(), self.gamma.len());
        let d = self.nu.dim();
        let mut total = 0.0;
        for i in 0..n {
            for k in 0..kk {
                let z = self.gamma.point(k);
                let base = (i * kk + k) * m;
                for j in 0..m {
                    let w = self.weights[base + j];
                    if w != 0.0 {
                        let y = self.nu.point(j);
                        let mut dot = 0.0;
                        for c in 0..d {
                            dot += y[c] * z[c];
                        }
                        total += w * dot;
                    }
                }
            }
        }
        total
    }

    /// max_x | sum_{y,z} Gamma(x,y,z) y - mu(x) x | (martingale residual).
    pub fn martingale_residual(&self) -> f64 {
        let (n, m, kk) = (self.mu.len(), self.nu.len(), self.gamma.len());
        let d = self.nu.dim();
        let mut worst = 0.0_f64;
        for i in 0..n {
            let mut bary = vec![0.0; d];
            for k in 0..kk {
                let base = (i * kk + k) * m;
                for j in 0..m {
                    let w = self.weights[base + j];
                    if w != 0.0 {
                        for c in 0..d {
                            bary[c] += w * self.nu.point(j)[c];
                        }
                    }
                }
            }
            let x = self.mu.point(i);
            let target: Vec<f64> = x.iter().map(|xc| xc * self.mu.weight(i)).collect();
            let err = bary
                .iter()
                .zip(&target)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0_f64, f64::max);
            worst = worst.max(err);
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_point(a: f64, b: f64) -> DiscreteMeasure {
        DiscreteMeasure::from_scalars(&[a, b], &[0.5, 0.5]).unwrap()
    }

    #[test]
    fn product_coupling_projects_to_nu_mean() {
        let mu = two_point(-1.0, 1.0);
        let nu = DiscreteMeasure::from_scalars(&[0.0, 4.0], &[0.25, 0.75]).unwrap();
        let pi = Coupling::independent(mu.clone(), nu);
        let (map, image) = pi.barycentric_projection().unwrap();
        for (_, v) in map.pairs() {
            assert_abs_diff_eq!(v[0], 3.0, epsilon = 1e-12);
        }
        assert!(image.is_dirac());
        assert_abs_diff_eq!(image.point(0)[0], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn martingale_coupling_projects_to_identity() {
        // mu = delta_0, nu = (1/2)(delta_-1 + delta_1): the split coupling.
        let mu = DiscreteMeasure::dirac(vec![0.0]);
        let nu = two_point(-1.0, 1.0);
        let pi = Coupling::new(mu.clone(), nu, vec![0.5, 0.5]).unwrap();
        let (map, image) = pi.barycentric_projection().unwrap();
        assert_abs_diff_eq!(map.value_at(&[0.0]).unwrap()[0], 0.0, epsilon = 1e-15);
        assert_eq!(image, mu);
    }

    #[test]
    fn comonotone_two_atom_map() {
        let mu = two_point(-1.0, 1.0);
        let nu = two_point(-2.0, 2.0);
        let pi = Coupling::new(mu, nu, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        let map = pi.barycentric_map().unwrap();
        assert_abs_diff_eq!(map.value_at(&[-1.0]).unwrap()[0], -2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(map.value_at(&[1.0]).unwrap()[0], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn marginal_validation_rejects_bad_weights() {
        let mu = two_point(-1.0, 1.0);
        let nu = two_point(-2.0, 2.0);
        assert!(Coupling::new(mu, nu, vec![0.5, 0.5, 0.0, 0.0]).is_err());
    }

    #[test]
    fn triple_marginals_and_inner_value() {
        // mu = delta_0, nu = two atoms, gamma = two atoms: comonotone z|y.
        let mu = DiscreteMeasure::dirac(vec![0.0]);
        let nu = two_point(-1.0, 1.0);
        let q = 0.6744897501960817;
        let gamma = two_point(-q, q);
        // Gamma(0, y, z): rows are (x,z) pairs, columns y.
        // z=-q row: all mass to y=-1; z=+q row: all mass to y=+1.
        let weights = vec![0.5, 0.0, 0.0, 0.5];
        let t = TripleCoupling::new(mu, nu, gamma, weights).unwrap();
        assert_abs_diff_eq!(t.inner_covariance(), q, epsilon = 1e-12);
        assert!(t.martingale_residual() <= 1e-12);
        let pi = t.xy_marginal().unwrap();
        assert_abs_diff_eq!(pi.weight(0, 0), 0.5, epsilon = 1e-15);
    }
}
