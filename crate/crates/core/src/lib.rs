//! Solvers for one-dimensional Hamilton-Jacobi-Bellman equations.
//!
//! Two routes to the same viscosity solution are provided: piecewise constant
//! policy timestepping, formulated as a switching system with switching cost and
//! optional per-policy meshes ([`pcpt`]), and a fully implicit direct-control scheme
//! solved by policy iteration ([`howard`]). Both use the monotone finite differences
//! in [`fd`]. [`models`] holds the uncertain volatility and mean-variance problems and
//! [`harness`] drives convergence studies.

pub mod error;
pub mod fd;
pub mod harness;
pub mod howard;
pub mod interp;
pub mod mesh;
pub mod models;
pub mod pcpt;

pub use error::{Error, Result};
