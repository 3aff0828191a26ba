//! Numerical laboratory for the ergodic harvesting (stochastic Faustmann)
//! impulse-control problem on scalar diffusions.
//!
//! The crate is organised bottom-up:
//!
//! - [`diffusion`]: drift/diffusion descriptors, class validation, the
//!   quadrature oracle for the invariant density and the expected hitting
//!   time `xi`, and Euler–Maruyama path simulation.
//! - [`problem`]: harvest rewards and the full-information solution
//!   `Phi(b) = max g/xi` with its optimal threshold.
//! - [`estimation`]: occupation-based invariant density estimators, the
//!   plug-in `xi` estimate and the estimated threshold.
//! - [`control`]: controlled runs (fixed threshold and the data-driven
//!   exploration/exploitation strategy) and their regret.
//! - [`bench`]: replicated horizon sweeps with log-log rate fitting.

pub mod bench;
pub mod catalog;
pub mod control;
pub mod diffusion;
pub mod error;
pub mod estimation;
pub mod func;
pub mod problem;
pub mod quad;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use func::Func;
