//! Inexact stochastic ADMM for linearly constrained composite nonconvex
//! problems
//!
//! ```text
//! min_{x, y}  f(x) + g(y)   s.t.  A x + B y = b
//! ```
//!
//! with `f` a smooth finite sum and `g` a separable, possibly nonconvex
//! regularizer (`l1` or SCAD). The x-subproblem is solved inexactly, either
//! by one linearized step with a stochastic gradient estimator or by the
//! accelerated hybrid inner solver in [`inner`].

pub mod admm;
pub mod constraint;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod inner;
pub mod objective;
pub mod prox;

pub use error::{Error, Result};
