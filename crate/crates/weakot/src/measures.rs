//! Finitely supported probability measures on R^d and maps on their support.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::normal_quantile;
use crate::tol;
use crate::util::{lex_cmp, norm2, pairwise_sum};

/// A finitely supported probability measure on R^d.
///
/// Canonical form: atoms sorted lexicographically, pairwise distinct
/// (near-duplicates merged at their weighted mean), strictly positive
/// weights summing to 1 within [`tol::WEIGHT_SUM`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} weights", points.len()),
                got: format!("{}", weights.len()),
            });
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::InvalidMeasure("zero-dimensional atoms".into()));
        }
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch(dim, p.len()));
            }
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite("measure atom"));
            }
        }
        let mut weights = weights;
        for w in &mut weights {
            if !w.is_finite() {
                return Err(Error::NonFinite("measure weight"));
            }
            if *w < 0.0 {
                if *w < -1e-12 {
                    return Err(Error::InvalidMeasure(format!("negative weight {w}")));
                }
                *w = 0.0;
            }
        }
        let total = pairwise_sum(&weights);
        if (total - 1.0).abs() > tol::WEIGHT_SUM {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {total}, expected 1"
            )));
        }

        // Canonicalize: drop zero atoms, sort, merge near-duplicates at
        // their weighted mean (mean-preserving, so convex order survives).
        let mut atoms: Vec<(Vec<f64>, f64)> = points
            .into_iter()
            .zip(weights)
            .filter(|(_, w)| *w > 0.0)
            .collect();
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("all atoms have zero weight".into()));
        }
        atoms.sort_by(|a, b| lex_cmp(&a.0, &b.0));
        let mut merged: Vec<(Vec<f64>, f64)> = Vec::with_capacity(atoms.len());
        for (p, w) in atoms {
            match merged.last_mut() {
                Some((q, wq))
                    if p.iter().zip(q.iter()).all(|(a, b)| (a - b).abs() <= tol::ATOM_MERGE) =>
                {
                    let wt = *wq + w;
                    for (qc, pc) in q.iter_mut().zip(&p) {
                        *qc = (*qc * *wq + pc * w) / wt;
                    }
                    *wq = wt;
                }
                _ => merged.push((p, w)),
            }
        }
        let (points, weights): (Vec<_>, Vec<_>) = merged.into_iter().unzip();
        Ok(Self { dim, points, weights })
    }

    /// Point mass at `point`.
    pub fn dirac(point: Vec<f64>) -> Self {
        Self::new(vec![point], vec![1.0]).expect("dirac is always valid")
    }

    /// Uniform weights on the given points.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        Self::new(points, vec![1.0 / n as f64; n])
    }

    /// 1D measure from scalar atoms.
    pub fn from_scalars(xs: &[f64], weights: &[f64]) -> Result<Self> {
        Self::new(xs.iter().map(|&x| vec![x]).collect(), weights.to_vec())
    }

    /// 1D empirical measure from samples, compressed into at most `bins`
    /// equal-count quantile bins, each replaced by its mean (so the overall
    /// barycenter is preserved and convex order is not broken upward).
    pub fn binned_from_samples(samples: &[f64], bins: usize) -> Result<Self> {
        if samples.is_empty() || bins == 0 {
            return Err(Error::InvalidParameter("need samples and at least one bin".into()));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
        let n = sorted.len();
        let bins = bins.min(n);
        let mut points = Vec::with_capacity(bins);
        let mut weights = Vec::with_capacity(bins);
        for b in 0..bins {
            let lo = b * n / bins;
            let hi = ((b + 1) * n / bins).max(lo + 1);
            let chunk = &sorted[lo..hi];
            points.push(pairwise_sum(chunk) / chunk.len() as f64);
            weights.push(chunk.len() as f64 / n as f64);
        }
        Self::from_scalars(&points, &weights)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn is_dirac(&self) -> bool {
        self.points.len() == 1
    }

    pub fn total_mass(&self) -> f64 {
        pairwise_sum(&self.weights)
    }

    /// Barycenter sum_i w_i y_i.
    pub fn mean(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|c| {
                let terms: Vec<f64> =
                    self.points.iter().zip(&self.weights).map(|(p, w)| p[c] * w).collect();
                pairwise_sum(&terms)
            })
            .collect()
    }

    /// Second moment sum_i w_i |y_i|^2.
    pub fn second_moment(&self) -> f64 {
        let terms: Vec<f64> =
            self.points.iter().zip(&self.weights).map(|(p, w)| norm2(p) * w).collect();
        pairwise_sum(&terms)
    }

    /// Scalar atoms of a 1D measure, ascending.
    pub fn scalars(&self) -> Result<Vec<f64>> {
        if self.dim != 1 {
            return Err(Error::NotOneDimensional(self.dim));
        }
        Ok(self.points.iter().map(|p| p[0]).collect())
    }

    /// Left-continuous generalized inverse of the cdf (1D only).
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if self.dim != 1 {
            return Err(Error::NotOneDimensional(self.dim));
        }
        if !(0.0..1.0).contains(&u) || u <= 0.0 {
            return Err(Error::InvalidParameter(format!("quantile level {u} not in (0,1)")));
        }
        let mut cum = 0.0;
        for (p, w) in self.points.iter().zip(&self.weights) {
            cum += w;
            if cum >= u {
                return Ok(p[0]);
            }
        }
        Ok(self.points.last().unwrap()[0])
    }

    /// Push the measure forward through a map defined on its support.
    pub fn pushforward<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let images: Vec<Vec<f64>> = self.points.iter().map(|p| f(p)).collect();
        Self::new(images, self.weights.clone())
    }

    /// Translate every atom by `shift`.
    pub fn translate(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.dim {
            return Err(Error::DimensionMismatch(self.dim, shift.len()));
        }
        self.pushforward(|p| p.iter().zip(shift).map(|(a, s)| a + s).collect())
    }

    /// Coordinate-wise support bounds.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = self.points[0].clone();
        let mut hi = self.points[0].clone();
        for p in &self.points {
            for c in 0..self.dim {
                lo[c] = lo[c].min(p[c]);
                hi[c] = hi[c].max(p[c]);
            }
        }
        (lo, hi)
    }

    /// Index of the atom equal to `x` within [`tol::ATOM_MERGE`], if any.
    pub fn find_atom(&self, x: &[f64]) -> Option<usize> {
        self.points
            .iter()
            .position(|p| p.iter().zip(x).all(|(a, b)| (a - b).abs() <= tol::ATOM_MERGE))
    }

    /// Load from the JSON measure file format.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: MeasureFile = serde_json::from_str(s)?;
        file.into_measure()
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let file = MeasureFile {
            dim: self.dim,
            points: self.points.clone(),
            weights: Some(self.weights.clone()),
        };
        serde_json::to_string_pretty(&file).expect("measure serialization cannot fail")
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_json())?)
    }
}

/// On-disk measure format: `{"dim": d, "points": [[..], ..], "weights": [..]}`
/// with weights optional (uniform when omitted).
#[derive(Debug, Serialize, Deserialize)]
struct MeasureFile {
    dim: usize,
    points: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

impl MeasureFile {
    fn into_measure(self) -> Result<DiscreteMeasure> {
        for p in &self.points {
            if p.len() != self.dim {
                return Err(Error::DimensionMismatch(self.dim, p.len()));
            }
        }
        let m = match self.weights {
            Some(w) => DiscreteMeasure::new(self.points, w)?,
            None => DiscreteMeasure::uniform(self.points)?,
        };
        Ok(m)
    }
}

/// Quantile-grid discretization of the d-dimensional standard normal.
///
/// 1D: n atoms at the midpoint quantiles, equal weights, recentered so the
/// mean is exactly zero. d > 1: d-fold product of the 1D grid.
pub fn discretize_gaussian(n: usize, d: usize) -> Result<DiscreteMeasure> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("gaussian grid needs n >= 2, got {n}")));
    }
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    let atoms = n.checked_pow(d as u32).filter(|&a| a <= tol::ATOM_BUDGET);
    let Some(n_atoms) = atoms else {
        return Err(Error::AtomBudget { requested: usize::MAX, budget: tol::ATOM_BUDGET });
    };

    let grid: Vec<f64> =
        (1..=n).map(|i| normal_quantile((i as f64 - 0.5) / n as f64)).collect();
    // Nested ascending loops produce lexicographically sorted product atoms.
    let mut points = vec![vec![0.0; d]];
    for c in 0..d {
        let mut next = Vec::with_capacity(points.len() * n);
        for p in &points {
            for &x in &grid {
                let mut q = p.clone();
                q[c] = x;
                next.push(q);
            }
        }
        points = next;
    }
    let w = 1.0 / n_atoms as f64;

    // Enforced recentering until the computed mean is exactly zero: bulk
    // shifts first, then sub-ulp corrections on a rotating atom to break
    // rounding cycles. The corrections move atoms by ~1e-15, far below
    // ATOM_MERGE, so the grid geometry is unaffected.
    let coord_mean = |pts: &[Vec<f64>], c: usize| -> f64 {
        let terms: Vec<f64> = pts.iter().map(|p| p[c] * w).collect();
        pairwise_sum(&terms)
    };
    for round in 0..256 {
        let m: Vec<f64> = (0..d).map(|c| coord_mean(&points, c)).collect();
        if m.iter().all(|&c| c == 0.0) {
            return DiscreteMeasure::new(points, vec![w; n_atoms]);
        }
        if m.iter().any(|c| c.abs() > 1e-14) {
            for p in points.iter_mut() {
                for c in 0..d {
                    p[c] -= m[c];
                }
            }
        } else {
            let k = round % n_atoms;
            for c in 0..d {
                points[k][c] -= m[c] / w;
            }
        }
    }
    Err(Error::Internal("gaussian grid recentering did not reach exact zero".into()))
}

/// A map defined on a finite support, stored as (point, value) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMap {
    support: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
}

impl PointMap {
    pub fn new(support: Vec<Vec<f64>>, values: Vec<Vec<f64>>) -> Result<Self> {
        if support.len() != values.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values", support.len()),
                got: format!("{}", values.len()),
            });
        }
        if support.is_empty() {
            return Err(Error::InvalidParameter("empty map support".into()));
        }
        Ok(Self { support, values })
    }

    pub fn identity(support: Vec<Vec<f64>>) -> Self {
        let values = support.clone();
        Self { support, values }
    }

    pub fn constant(support: Vec<Vec<f64>>, value: Vec<f64>) -> Self {
        let values = vec![value; support.len()];
        Self { support, values }
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn support(&self) -> &[Vec<f64>] {
        &self.support
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.support.iter().map(|p| p.as_slice()).zip(self.values.iter().map(|v| v.as_slice()))
    }

    /// Value at a support point (matched within [`tol::ATOM_MERGE`]).
    pub fn value_at(&self, x: &[f64]) -> Result<&[f64]> {
        self.support
            .iter()
            .position(|p| {
                p.len() == x.len()
                    && p.iter().zip(x).all(|(a, b)| (a - b).abs() <= tol::ATOM_MERGE)
            })
            .map(|i| self.values[i].as_slice())
            .ok_or_else(|| Error::InvalidParameter(format!("point {x:?} not in map support")))
    }

    /// Push `mu` forward through this map.
    pub fn pushforward(&self, mu: &DiscreteMeasure) -> Result<DiscreteMeasure> {
        let images: Result<Vec<Vec<f64>>> =
            mu.points().iter().map(|p| self.value_at(p).map(|v| v.to_vec())).collect();
        DiscreteMeasure::new(images?, mu.weights().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_point() -> DiscreteMeasure {
        DiscreteMeasure::from_scalars(&[-1.0, 1.0], &[0.5, 0.5]).unwrap()
    }

    #[test]
    fn mean_examples() {
        assert_eq!(DiscreteMeasure::dirac(vec![0.0]).mean(), vec![0.0]);
        assert_eq!(two_point().mean(), vec![0.0]);
        let m = DiscreteMeasure::from_scalars(&[0.0, 4.0], &[0.25, 0.75]).unwrap();
        assert_abs_diff_eq!(m.mean()[0], 3.0, epsilon = 1e-15);
    }

    #[test]
    fn second_moment_examples() {
        assert_eq!(DiscreteMeasure::dirac(vec![0.0]).second_moment(), 0.0);
        assert_abs_diff_eq!(two_point().second_moment(), 1.0, epsilon = 1e-15);
        let a = DiscreteMeasure::dirac(vec![3.0, 4.0]);
        assert_abs_diff_eq!(a.second_moment(), 25.0, epsilon = 1e-12);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(two_point().quantile(0.25).unwrap(), -1.0);
        assert_eq!(two_point().quantile(0.5).unwrap(), -1.0);
        assert_eq!(two_point().quantile(0.75).unwrap(), 1.0);
        let d = DiscreteMeasure::dirac(vec![2.5]);
        assert_eq!(d.quantile(0.1).unwrap(), 2.5);
        assert_eq!(d.quantile(0.99).unwrap(), 2.5);
        let m = DiscreteMeasure::from_scalars(&[0.0, 4.0], &[0.25, 0.75]).unwrap();
        assert_eq!(m.quantile(0.5).unwrap(), 4.0);
        assert_eq!(m.quantile(0.25).unwrap(), 0.0);
    }

    #[test]
    fn pushforward_examples() {
        let m = two_point();
        let same = m.pushforward(|p| p.to_vec()).unwrap();
        assert_eq!(same, m);

        let constant = m.pushforward(|_| vec![7.0]).unwrap();
        assert_eq!(constant, DiscreteMeasure::dirac(vec![7.0]));

        let squared = m.pushforward(|p| vec![p[0] * p[0]]).unwrap();
        assert_eq!(squared, DiscreteMeasure::dirac(vec![1.0]));
    }

    #[test]
    fn pushforward_preserves_mass() {
        let m = DiscreteMeasure::from_scalars(&[0.0, 1.0, 2.0, 3.0], &[0.1, 0.2, 0.3, 0.4])
            .unwrap();
        let pushed = m.pushforward(|p| vec![(p[0] * 0.0).abs()]).unwrap();
        assert_abs_diff_eq!(pushed.total_mass(), m.total_mass(), epsilon = 1e-15);
    }

    #[test]
    fn canonicalization_merges_duplicates() {
        let m = DiscreteMeasure::from_scalars(&[1.0, 1.0 + 1e-12, 0.0], &[0.3, 0.3, 0.4])
            .unwrap();
        assert_eq!(m.len(), 2);
        assert_abs_diff_eq!(m.weight(1), 0.6, epsilon = 1e-15);
        // Atoms are sorted ascending.
        assert!(m.point(0)[0] < m.point(1)[0]);
    }

    #[test]
    fn invalid_measures_are_rejected() {
        assert!(DiscreteMeasure::from_scalars(&[0.0], &[0.5]).is_err());
        assert!(DiscreteMeasure::from_scalars(&[0.0, 1.0], &[1.5, -0.5]).is_err());
        assert!(DiscreteMeasure::from_scalars(&[f64::NAN], &[1.0]).is_err());
        assert!(DiscreteMeasure::new(vec![vec![0.0], vec![0.0, 1.0]], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn gaussian_grid_two_atoms() {
        let g = discretize_gaussian(2, 1).unwrap();
        assert_eq!(g.len(), 2);
        // Phi^{-1}(3/4), frozen from the bisection oracle in gaussian.rs.
        assert_abs_diff_eq!(g.point(1)[0], 0.6744897501960817, epsilon = 1e-13);
        assert_abs_diff_eq!(g.point(0)[0], -0.6744897501960817, epsilon = 1e-13);
        assert_eq!(g.weight(0), 0.5);
    }

    #[test]
    fn gaussian_grid_mean_is_exactly_zero() {
        for n in 2..=64 {
            let g = discretize_gaussian(n, 1).unwrap();
            assert_eq!(g.mean(), vec![0.0], "n = {n}");
        }
        let g2 = discretize_gaussian(5, 2).unwrap();
        assert_eq!(g2.mean(), vec![0.0, 0.0]);
    }

    #[test]
    fn gaussian_grid_product_structure() {
        let g = discretize_gaussian(2, 2).unwrap();
        assert_eq!(g.len(), 4);
        let q = 0.6744897501960817;
        for p in g.points() {
            assert_abs_diff_eq!(p[0].abs(), q, epsilon = 1e-12);
            assert_abs_diff_eq!(p[1].abs(), q, epsilon = 1e-12);
        }
        assert_eq!(g.weight(0), 0.25);
    }

    #[test]
    fn gaussian_grid_variance_converges() {
        // Midpoint quantile grids underestimate the variance from below;
        // the defect at n = 256 is about 0.005.
        let mut last = 0.0;
        for &n in &[4, 16, 64, 256] {
            let v = discretize_gaussian(n, 1).unwrap().second_moment();
            assert!(v < 1.0);
            assert!(v > last);
            last = v;
        }
        assert!(last > 0.99);
    }

    #[test]
    fn gaussian_grid_budget() {
        assert!(matches!(
            discretize_gaussian(1000, 3),
            Err(Error::AtomBudget { .. })
        ));
        assert!(discretize_gaussian(1, 1).is_err());
    }

    #[test]
    fn point_map_lookup() {
        let map = PointMap::new(vec![vec![0.0], vec![1.0]], vec![vec![5.0], vec![6.0]]).unwrap();
        assert_eq!(map.value_at(&[1.0]).unwrap(), &[6.0]);
        assert_eq!(map.value_at(&[1.0 + 1e-12]).unwrap(), &[6.0]);
        assert!(map.value_at(&[2.0]).is_err());
    }

    #[test]
    fn measure_file_round_trip() {
        let m = DiscreteMeasure::from_scalars(&[0.5, -0.25], &[0.75, 0.25]).unwrap();
        let back = DiscreteMeasure::from_json_str(&m.to_json()).unwrap();
        assert_eq!(back, m);

        let uniform = DiscreteMeasure::from_json_str(
            r#"{"dim": 2, "points": [[0.0, 1.0], [1.0, 0.0]]}"#,
        )
        .unwrap();
        assert_eq!(uniform.weights(), &[0.5, 0.5]);

        assert!(DiscreteMeasure::from_json_str(r#"{"dim": 2, "points": [[0.0]]}"#).is_err());
    }
}
