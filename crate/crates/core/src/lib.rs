//! Finite-difference laboratory for the singular-degenerate stochastic porous
//! medium equation `dX ∈ Δφ(X) dt + B dW` on (−1, 1) with zero Dirichlet data.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`]: the uniform grid, fields, and the L², L∞, H⁻¹ geometry;
//! * [`monotone`]: φ, ψ, and the closed-form resolvent / Yosida approximation;
//! * [`noise`]: truncated Q-Wiener noise and the non-degenerate forcing g;
//! * [`sde`]: implicit and explicit Euler–Maruyama for the regularised SPDE;
//! * [`det`]: the deterministic control flow, its fixed point, comparison;
//! * [`ergodics`]: Monte-Carlo suites probing the invariant-measure theory.

// `!(x > 0.0)` is used on purpose so that NaN is rejected as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod det;
pub mod ergodics;
pub mod error;
pub mod grid;
pub mod monotone;
pub mod noise;
pub mod parallel;
pub mod sde;
pub mod stats;
pub mod tridiag;

pub use ergodics::ErgodicsReport;
pub use error::{Error, Result};
pub use grid::{Field, Grid};
pub use monotone::YosidaParams;
pub use noise::{NoiseModel, NoiseSpec};
pub use sde::{Scheme, SolverConfig};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
