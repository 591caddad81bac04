//! Riemannian gradient methods on product manifolds under preconditioned
//! metrics, with the canonical correlation, truncated SVD, tensor-ring
//! completion and ellipsoid applications.

pub mod cca;
pub mod ellipsoid;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod rng;
pub mod solvers;
pub mod spectrum;
pub mod trcomp;
pub mod tsvd;

pub use error::{Error, Result};
