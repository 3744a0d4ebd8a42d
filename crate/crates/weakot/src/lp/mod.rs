//! Exact linear programming kernels: a transportation simplex for couplings
//! and a dense two-phase simplex for LPs with side constraints.

pub mod dense;
pub mod fw;
pub mod transport;
