//! Finite-volume simulator for the doubly degenerate nutrient-taxis system
//!
//!   u_t = ∇·(u v ∇u) − χ∇·(u^α v ∇v) + ℓ u v
//!   v_t = Δv − u v
//!
//! under zero-flux boundary conditions on rectangular boxes, together with a
//! diagnostics engine for the quantities controlling its long-time behavior
//! (mass budgets, quasi-energies, dissipation integrals), a certified
//! (W¹,∞)*-dual-norm solver, a functional-inequality fuzzing harness, and
//! experiment drivers for stabilization studies.

// validation uses negated comparisons (`!(x > 0.0)`) so NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod dualnorm;
pub mod error;
pub mod functionals;
pub mod grid;
pub mod inequalities;
pub mod linsolve;
pub mod model;
pub mod output;
pub mod rng;
pub mod scenarios;
pub mod snapshot;
pub mod stepper;

pub use error::Error;
