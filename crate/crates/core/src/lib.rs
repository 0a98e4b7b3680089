//! Stochastic augmented Lagrangian method on (product) Riemannian
//! manifolds.
//!
//! The outer loop safeguards the multipliers, runs a randomly stopped
//! mini-batch stochastic gradient inner loop on the augmented Lagrangian
//! and updates multipliers and penalty from a feasibility measure. Shipped
//! problems are Euclidean quadratics with known KKT points and a
//! multi-shape benchmark on polygonal curves with volume and perimeter
//! constraints.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod auglag;
pub mod cone;
pub mod constraints;
pub mod diagnostics;
pub mod error;
pub mod inner;
pub mod manifold;
pub mod outer;
pub mod problems;
pub mod shapes;
pub mod stochastic;

pub use error::{Error, Result};
