//! Numerical tolerances used across the library.
//!
//! Every contract tolerance lives here so the acceptance suite and the
//! solvers agree on the same numbers.

/// Weights of a valid measure must sum to 1 within this bound.
pub const WEIGHT_SUM: f64 = 1e-12;

/// Atoms closer than this (in every coordinate) are merged at construction.
pub const ATOM_MERGE: f64 = 1e-9;

/// Coupling marginals must match the prescribed measures within this bound.
pub const MARGINAL: f64 = 1e-9;

/// Dual feasibility slack for transport certificates: u(x)+v(y) <= c(x,y)+DUAL_FEAS.
pub const DUAL_FEAS: f64 = 1e-9;

/// Relative duality-gap bound for exact LP solves: gap <= GAP_REL*(1+|value|).
pub const GAP_REL: f64 = 1e-9;

/// Phase-1 violation below this is treated as feasible in the convex-order LP.
pub const CONVEX_ORDER_FEAS: f64 = 1e-10;

/// Feasibility tolerance for replayed LP certificates (martingale couplings).
pub const CERT_REPLAY: f64 = 1e-8;

/// Agreement required between the transport LP and the 1D quantile closed form.
pub const QUANTILE_VS_LP: f64 = 1e-8;

/// Agreement required between the transport LP and the 1D comonotone coupling.
pub const COMONOTONE_VS_LP: f64 = 1e-9;

/// Residual bound for the W2/MCov polarization identity.
pub const W2_MCOV_IDENTITY: f64 = 1e-8;

/// Martingale constraint slack per atom in triple-coupling solutions.
pub const MARTINGALE: f64 = 1e-8;

/// Hard cap on the number of atoms any constructor may produce.
pub const ATOM_BUDGET: usize = 200_000;

/// Default solver tolerance for Frank-Wolfe gaps.
pub const DEFAULT_FW_TOL: f64 = 1e-6;

/// Default iteration cap for Frank-Wolfe solvers.
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Relative slack allowed for Monte Carlo vs quadrature energy comparisons.
pub const QUADRATURE_SLACK: f64 = 0.02;
