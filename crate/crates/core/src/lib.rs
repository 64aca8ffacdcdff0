//! Exact computation of correlated Gromov-Witten invariants of P^1-bundles
//! over an elliptic curve, valued in the group algebra of its torsion.

pub mod arith;
pub mod diagrams;
pub mod error;
pub mod lattice;
pub mod polynomial;
pub mod qseries;
pub mod sigma;
pub mod torsion;

pub use error::{Error, Result};
