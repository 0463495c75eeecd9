//! Feynman-Kac equations solved by variational imaginary time evolution on a
//! simulated statevector, with classical baselines to check the answer.
//!
//! The pipeline: an [`model::SdeSystem`] yields coefficient fields, which
//! [`generator::discretize`] turns into a sparse periodic generator. That
//! generator drives [`varqite::evolve`] (a scaled real-amplitude ansatz), the
//! forward-Euler and Monte Carlo baselines in [`baselines`], and is decomposed
//! into Pauli strings by [`pauli`] for shot-based estimation.

pub mod baselines;
pub mod circuit;
pub mod decompose;
pub mod error;
pub mod generator;
pub mod grid;
pub mod harness;
pub mod model;
pub mod optimize;
pub mod pauli;
pub mod readout;
pub mod rng;
pub mod varqite;

pub use error::{Error, Result};
pub use generator::{discretize, SparseGenerator};
pub use grid::Grid;
pub use model::{preset_system, Preset, SdeSystem};
