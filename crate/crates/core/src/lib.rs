//! Modular commutators of cluster-type states: symbolic Pauli algebra, closed
//! forms, and a dense-matrix oracle to check them against.

pub mod algebra;
pub mod dense;
pub mod error;
pub mod modular;
pub mod pauli;
pub mod reduction;
pub mod states;
pub mod verify;

#[cfg(test)]
mod testing;

pub use error::{Error, Result};
