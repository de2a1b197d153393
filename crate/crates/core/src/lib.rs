//! Weak solutions of Dirichlet problems for Kolmogorov-Fokker-Planck
//! operators `∇_X·(A∇_X u) + X·∇_Y u − ∂_t u` with rough coefficients.

pub mod analytic_kernel;
pub mod coefficients;
pub mod discretization;
pub mod error;
pub mod exhaustion;
pub mod function_spaces;
pub mod geometry;
pub mod sparse;
pub mod stochastic;
pub mod variational;

pub use error::{KfpError, Result};
