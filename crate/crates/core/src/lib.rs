//! Explicit-in-time fourth-order vector compact finite-difference solver for
//! the n-dimensional wave equation on rectangular grids.
//!
//! Besides the solution itself, the scheme carries its second spatial
//! derivatives as independent mesh functions, each recovered per axis by a
//! tridiagonal Numerov solve; the time update is then fully explicit. The
//! crate provides the meshes and operators, the time steppers (including
//! non-uniform meshes in space and time and variable coefficients), CFL-type
//! stability certificates, discrete energy diagnostics, manufactured
//! problems, and a convergence-study harness.

pub mod diagnostics;
pub mod error;
pub mod extensions;
pub mod grid;
pub mod problems;
pub mod scheme;
pub mod stability;
pub mod stencil;
pub mod study;

pub use error::{Result, SolverError};
pub use grid::{Axis, Field, Grid, TimeMesh};
