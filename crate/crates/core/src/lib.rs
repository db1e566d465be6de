//! Finite-element solver and certification suite for Dirichlet problems
//!
//! ```text
//!   -Δ_p u = f(u) in Ω,   u > 0 in Ω,   u = 0 on ∂Ω
//! ```
//!
//! where the reaction `f` may blow up at `s = 0` like `s^{-γ}` and may jump on
//! a countable set of levels.
//!
//! The pipeline mirrors a constructive existence argument:
//!
//! 1. [`eigen`] computes the first Dirichlet eigenpair of `-Δ_p`.
//! 2. [`reaction`] certifies the structural hypotheses on `f`, truncates it
//!    through a sub-solution and mollifies it at scale `ε`.
//! 3. [`solver`] builds the sub-solution `k φ₁`, minimizes the regularized
//!    energy for a decreasing `ε` schedule and recovers the flux divergence
//!    `v = -Δ_p u` of the limit.
//! 4. [`verify`] checks the differential inclusion `f̲(u) ≤ v ≤ f̄(u)`, the
//!    sub-solution ordering, boundary growth and the strong-locality
//!    mechanism on discontinuity levels.
//!
//! Everything is built on continuous piecewise-linear elements ([`mesh`]).

// Negated comparisons such as `!(x > 0.0)` deliberately reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eigen;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod reaction;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
