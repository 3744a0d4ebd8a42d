//! Seeded random instances for tests and verification batteries.
//!
//! All generators take a `ChaCha8Rng` so batteries are reproducible from a
//! single seed.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::coupling::Coupling;
use crate::error::Result;
use crate::lp::transport::solve_transport;
use crate::measures::DiscreteMeasure;

/// Random 1D measure with 1..=max_atoms atoms in [lo, hi].
pub fn random_measure_1d(
    rng: &mut ChaCha8Rng,
    max_atoms: usize,
    lo: f64,
    hi: f64,
) -> DiscreteMeasure {
    let n = rng.gen_range(1..=max_atoms);
    let points: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    DiscreteMeasure::from_scalars(&points, &weights)
        .expect("random measure construction is valid")
}

/// Random 1D measure with at least two atoms.
pub fn random_spread_measure_1d(
    rng: &mut ChaCha8Rng,
    max_atoms: usize,
    lo: f64,
    hi: f64,
) -> DiscreteMeasure {
    loop {
        let m = random_measure_1d(rng, max_atoms.max(2), lo, hi);
        if m.len() >= 2 {
            return m;
        }
    }
}

/// Apply a random mean-preserving (martingale) kernel to `mu`: every atom x
/// splits into two atoms x - s*w_hi and x + s*w_lo with barycenter x.
/// The output is in convex order above `mu` by construction.
pub fn random_martingale_blowup(rng: &mut ChaCha8Rng, mu: &DiscreteMeasure) -> DiscreteMeasure {
    assert_eq!(mu.dim(), 1, "martingale blow-up generator is 1D");
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (p, &w) in mu.points().iter().zip(mu.weights()) {
        let x = p[0];
        let spread = rng.gen_range(0.1..0.8);
        let w_lo = rng.gen_range(0.2..0.8);
        let w_hi = 1.0 - w_lo;
        // Barycenter stays at x: w_lo*(x - spread*w_hi) + w_hi*(x + spread*w_lo) = x.
        points.push(x - spread * w_hi);
        points.push(x + spread * w_lo);
        weights.push(w * w_lo);
        weights.push(w * w_hi);
    }
    DiscreteMeasure::from_scalars(&points, &weights).expect("blow-up is a valid measure")
}

/// Random pair (mu, nu) with mu in convex order below nu.
pub fn random_convex_order_pair(
    rng: &mut ChaCha8Rng,
    max_atoms: usize,
) -> (DiscreteMeasure, DiscreteMeasure) {
    let mu = random_measure_1d(rng, max_atoms, -2.0, 2.0);
    let nu = random_martingale_blowup(rng, &mu);
    (mu, nu)
}

/// Random coupling in Pi(mu, nu): a convex mixture of transport vertices for
/// random cost matrices, plus a slice of the independent coupling so every
/// row keeps full support.
pub fn random_coupling(
    rng: &mut ChaCha8Rng,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<Coupling> {
    let (n, m) = (mu.len(), nu.len());
    let mut weights = vec![0.0; n * m];
    let n_vertices = rng.gen_range(1..=3);
    let mut coeffs: Vec<f64> = (0..n_vertices + 1).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = coeffs.iter().sum();
    coeffs.iter_mut().for_each(|c| *c /= total);

    for &coeff in coeffs.iter().take(n_vertices) {
        let cost: Vec<f64> = (0..n * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let vertex = solve_transport(mu.weights(), nu.weights(), &cost)?;
        for (w, v) in weights.iter_mut().zip(&vertex.flow) {
            *w += coeff * v;
        }
    }
    let mix = coeffs[n_vertices];
    for i in 0..n {
        for j in 0..m {
            weights[i * m + j] += mix * mu.weight(i) * nu.weight(j);
        }
    }
    Coupling::new(mu.clone(), nu.clone(), weights)
}
