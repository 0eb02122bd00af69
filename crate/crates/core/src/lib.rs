//! Simulation and verification of constructive Moser-style resampling for commuting
//! k-local projector Hamiltonians.
//!
//! [`instance`] holds and checks the input, [`simulator`] is the dense statevector
//! kernel, [`scheduler`] decides which projector to measure next, [`solver`] runs
//! trajectories and enumerates histories exactly, and [`analysis`] holds the counting
//! bounds the runs are checked against.

pub mod analysis;
pub mod instance;
pub mod linalg;
pub mod rng;
pub mod scheduler;
pub mod simulator;
pub mod solver;

pub use instance::{LocalProjector, QsatInstance};
pub use solver::{RunParams, Solver, Status};
