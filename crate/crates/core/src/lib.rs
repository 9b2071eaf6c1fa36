//! Numerical laboratory for decoupling inequalities of nondegenerate
//! surfaces in R^4.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`] builds surfaces (quadratic models, curve lifts), extracts
//!   quadratic normal forms and evaluates the nondegeneracy determinants.
//! * [`transversality`] implements the transversality form of a quadratic
//!   surface, its eigen-strip geometry and the bilinear Jacobian identity.
//! * [`fields`] holds amplitude fields and evaluates extension operators,
//!   cap by cap.
//! * [`norms`] estimates weighted `L^p` norms over balls in `R^d`.
//! * [`harness`] assembles decoupling measurements and scaling studies.
//! * [`rescale`] implements parabolic rescaling and its exact identity.
//! * [`exponents`] mechanizes the exponent bookkeeping of the induction on
//!   scales.

// `!(x > 0.0)` style guards reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exponents;
pub mod fields;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod norms;
pub mod phase;
pub mod quadrature;
pub mod rescale;
pub mod transversality;

mod linalg;

pub use error::{Error, Result};
pub use num_complex::Complex64;
