//! Numerical laboratory for backward stochastic differential equations
//! driven by Lévy processes with finite atomic jump measures.
//!
//! The crate simulates seeded forward ensembles, solves the backward
//! equation by implicit least-squares time stepping, audits generator
//! assumptions by sampled falsification, and runs the stability,
//! truncation, comparison and integral-inequality harnesses. Everything is
//! deterministic for a fixed seed, independent of thread count.

// `!(x > 0.0)` is used deliberately: it rejects NaN along with nonpositives
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod checks;
pub mod comparison;
pub mod csvio;
pub mod error;
pub mod generator;
pub mod inequalities;
pub mod model;
pub mod registry;
pub mod regression;
pub mod rho;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use generator::{GeneratorSpec, PathContext};
pub use model::{simulate_forward, truncate_levy, JumpAtom, LevyModel, PathEnsemble, TimeGrid};
pub use rho::RhoFunction;
pub use solver::{solve_bsde, BsdeSolution, SchemeConfig, TerminalCondition};
