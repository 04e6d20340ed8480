//! Statevector simulation and verification kernels for the quantum fusion layer (QFL).
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure function of its
//! inputs plus an explicit seed; file formats, configuration and the command line live in
//! the companion `qfl` crate.
//!
//! Register convention used throughout: qubit 0 is the most significant bit of a basis
//! index. The index register occupies qubits `0..n_index` and the value qubit is the last
//! one, so the basis state `|j>|v>` sits at position `2 * j + v`.

#![no_std]

extern crate alloc;

pub mod ansatz;
pub mod baselines;
mod error;
pub mod gates;
pub mod linalg;
pub mod measurement;
pub mod qfl;
pub mod rng;
pub mod separation;
pub mod stateprep;
pub mod training;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, QuantumState, C64};
