//! Unambiguous discrimination of linearly independent pure states.
//!
//! * [`stateset`]: instances, validation, Gram data, JSON format.
//! * [`phase_bound`]: the phase-minimization upper bound on `P_opt`.
//! * [`schmidt`]: the entanglement-transfer construction behind the bound
//!   (`eta_k` vectors, Schmidt spectrum, Vidal conversion probability).
//! * [`solver`]: the exact optimum over the feasible set, its classification
//!   and a witnessing POVM.
//! * [`closed_forms`]: analytic bound values for structured instances.
//! * [`corpus`] and [`report`]: the built-in regression corpus and its output.

#![forbid(unsafe_code)]

pub mod closed_forms;
pub mod corpus;
pub mod error;
mod linalg;
pub mod phase_bound;
pub mod report;
pub mod schmidt;
pub mod solver;
pub mod stateset;

pub use error::{Result, UsdError};
pub use linalg::{CMatrix, CVector};
pub use num_complex::Complex64;
pub use phase_bound::{minimize_bound, BoundResult, MinimizerConfig, PhaseVector};
pub use solver::{solve_optimal, SolutionClass, SolverConfig, SolverResult};
pub use stateset::{parse_stateset, GramData, StateSet};
