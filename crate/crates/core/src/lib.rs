//! Isogeometric Galerkin eigenvalue solver for the Laplace operator on
//! circular sectors.
//!
//! The domain is a sector of the unit disk with opening angle `omega`,
//! parameterized by a single polar-like NURBS patch that collapses one edge
//! of the parametric square into the sector vertex.  Homogeneous Dirichlet
//! conditions are imposed on the circular edge and natural (Neumann)
//! conditions on the straight legs.  Exact eigenvalues are squared zeros of
//! Bessel functions of fractional order, which makes the setup a convenient
//! benchmark for spline spaces with radially graded knots and hierarchical
//! angular refinement around the vertex.
//!
//! Module map:
//! - [`splines`]: open knot vectors, B-spline evaluation, knot insertion and
//!   degree elevation with coefficient transfer matrices.
//! - [`nurbs`]: tensor-product rational bases and weight functions.
//! - [`geometry`]: the sector patch, its singular map and Bezier meshes.
//! - [`spaces`]: tensor-product and hierarchical discrete spaces.
//! - [`quadrature`]: Gauss-Legendre element rules.
//! - [`assembly`]: sparse stiffness/mass assembly and Dirichlet masking.
//! - [`eigensolve`]: generalized symmetric eigensolvers (shift-invert and a
//!   dense full-spectrum fallback).
//! - [`exact`]: Bessel machinery and the exact sector spectrum.
//! - [`errors`]: quadrature seminorms, spectrum matching, convergence rates.

pub mod assembly;
pub mod eigensolve;
pub mod errors;
pub mod exact;
pub mod geometry;
pub mod nurbs;
pub mod quadrature;
pub mod spaces;
pub mod splines;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid knot vector: {0}")]
    InvalidKnots(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("geometry map is singular at zeta1 = 0")]
    SingularPoint,
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("eigensolver failed to converge: {0}")]
    NoConvergence(String),
    #[error("problem size {size} exceeds dense solver guard {guard}")]
    TooLargeForDense { size: usize, guard: usize },
    #[error("spectrum matching failed: {0}")]
    MatchingFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;
