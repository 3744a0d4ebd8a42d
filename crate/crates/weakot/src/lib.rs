//! Solvers for weak optimal transport functionals of finitely supported
//! measures, and Monte Carlo verification of their dynamic formulations.

pub mod alphabeta;
pub mod bass;
pub mod convex_order;
pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod gaussian;
pub mod instances;
pub mod lp;
pub mod measures;
pub mod ot;
pub mod sbm;
pub mod tol;
pub mod util;
pub mod wot;

pub use alphabeta::{compose_optimizer, evaluate_alphabeta, solve_static_alphabeta, AlphaBetaResult};
pub use bass::{bass_fixed_point_1d, BassResult};
pub use convex_order::{check_convex_order, ConvexOrderCertificate, ConvexOrderWitness};
pub use coupling::{Coupling, TripleCoupling};
pub use dynamics::{
    epsilon_split_simulate, estimate_dynamic_objective, project_drift_on_initial,
    simulate_bass_paths, simulate_composite, simulate_constant_drift, EnergyEstimate,
    PathBundle,
};
pub use error::{Error, Result};
pub use measures::{discretize_gaussian, DiscreteMeasure, PointMap};
pub use ot::{mcov, solve_ot, t2, w2_mcov_identity_check, TransportResult};
pub use sbm::{solve_sbm, SbmResult};
pub use wot::{convex_order_projection, solve_barycentric_wot, WotResult};
