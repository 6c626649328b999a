//! Simulation primitives for spectator-qubit crosstalk detection.
//!
//! Qubit 0 is the leftmost tensor factor everywhere: in Pauli labels, gate
//! operands and measurement bitstrings.

pub mod channels;
pub mod characterize;
pub mod crosstalk;
pub mod error;
pub mod operator;
pub mod protocol;
pub mod simulator;

pub use error::{Error, Result};
