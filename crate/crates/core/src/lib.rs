//! Numerical laboratory for the slow-fast Bazykin prey-predator model.
//!
//! The crate covers the temporal system (equilibria, Hopf and fold curves,
//! canard cycles and their slow divergence integrals, limit-cycle detection)
//! and the one-dimensional reaction-diffusion extension (Turing analysis,
//! IMEX simulation, heterogeneity norms and transient durations).

pub mod bifurcation;
pub mod error;
pub mod model;
pub mod numerics;
pub mod ode;
pub mod pde;
pub mod slow_fast;
pub mod transients;
pub mod turing;

pub use error::{Error, ErrorKind, Result};
pub use model::{Equilibrium, EquilibriumKind, Jac2, Params, Stability, State};
