//! Space-bounded k-SUM solvers.
//!
//! The crate provides instance generation, an almost-linear hash family with
//! a balancing cascade, metered workspace accounting, and a family of
//! solvers that trade time for space through self-reduction.

pub mod context;
pub mod deterministic;
pub mod error;
pub mod harness;
pub mod hashing;
pub mod instance;
pub mod kernel;
pub mod reference;
pub mod selfreduce;
pub mod solver;
pub mod special;
pub mod view;
pub mod wanglv;
pub mod workspace;

pub use error::{KsumError, Result};
pub use instance::{KSumInstance, RunStats, SolverReport, Witness};
pub use solver::{run_solver, SolverKind};
