//! Spectral-Galerkin tools for the pseudo-relativistic Lane-Emden problem
//! `(sqrt(-Delta + m^2) - m) u = |u|^{p-1} u` on boxes with Dirichlet data.

pub mod bubbles;
pub mod cylinder;
pub mod eigenbasis;
pub mod error;
pub mod field;
pub mod perturbative;
mod krylov;
pub mod spectral_calculus;
pub mod special;
pub mod variational;

pub use error::{Error, Result};
pub use field::SpectralField;
