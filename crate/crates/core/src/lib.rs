//! Spectral-Galerkin simulation and mean-square stability analysis for the
//! linear stochastic heat equation
//!
//! ```text
//! ∂u/∂t = Δu − β0 u + β1 u Ẇ,   x ∈ [0, 1],   u(t, 0) = u(t, 1) = 0,
//! ```
//!
//! driven by Gaussian noise that is white in time with spatial covariance
//! `q(x, y)`. The solution is expanded in the Dirichlet sine basis
//! `e_k(x) = √2 sin(kπx)`, truncated to `N` solution modes and `M` noise modes,
//! and stepped with implicit, explicit or stiff-implicit Euler–Maruyama.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod convergence;
pub mod covariance;
pub mod error;
pub mod galerkin;
pub mod integrators;
pub mod linalg;
pub mod montecarlo;
pub mod noise;
pub mod par;
pub mod quadrature;
pub mod stability;

pub use error::{Error, Result};
pub use par::Exec;
