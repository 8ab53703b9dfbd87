//! Numerical toolkit for semilinear nonautonomous evolution equations
//! `x' = A(t)x + f(t, x)`.
//!
//! The crate works with mild solutions of the variation-of-constants
//! equation, the evolution families they generate, the Green's operator
//! `(G f)(t) = ∫₀ᵗ X(t,s) f(s) ds`, and explicit exponential-stability
//! certificates `‖X(t,s)‖_lip ≤ N e^{-ν(t-s)}` derived from an
//! admissibility constant of `G` between `Lᵖ` and `Lᵠ`.
//!
//! Modules:
//! - [`lp`]: sampled signals, grid `Lᵖ` norms and the gauge functions `a_p`, `b_p`.
//! - [`evolution`]: the evolution-family abstraction, axiom checks and Lipschitz estimates.
//! - [`mild`]: Picard solver for mild solutions and the generated nonlinear family.
//! - [`green`]: the Green's operator and empirical admissibility constants.
//! - [`stability`]: the certificate pipeline and the exponential convolution estimates.
//! - [`models`]: the scalar `H`-flow, the spectral Neumann heat model, evolution semigroups.
//! - [`cli`]: configuration, commands and report output for the `evostab` binary.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod evolution;
pub mod green;
pub mod lp;
pub mod mild;
pub mod models;
pub mod stability;
pub mod state;

pub use error::{Error, Result};
pub use evolution::{EvolutionFamily, FamilyKind, Growth, StateSampler};
pub use lp::{Exponent, Grid, SampledSignal};
pub use state::State;
