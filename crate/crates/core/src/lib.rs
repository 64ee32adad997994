//! Numerical workbench for two-weight commutator estimates: Bloom weights,
//! fractional weighted oscillations, sparse operators and discretized
//! Calderón–Zygmund commutators on a uniform lattice.

pub mod catalog;
pub mod dyadic;
pub mod error;
pub mod lattice;
pub mod normest;
pub mod operators;
pub mod oscillation;
pub mod sparse;
pub mod summation;
pub mod weights;

pub use error::{Error, Result};
pub use lattice::C64;
