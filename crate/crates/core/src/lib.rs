//! Parametric reduced-order modeling of linearized fluid-structure systems
//! for flutter-constrained design optimization.
//!
//! The offline stage compresses the design space to an active subspace,
//! greedily samples it with projection-based reduced models and aligns them
//! into a consistent database. The online stage interpolates that database on
//! matrix manifolds to evaluate flutter damping ratios and their gradients
//! inside a sequential quadratic programming loop.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod asub;
pub mod database;
pub mod error;
pub mod flutter;
pub mod hdm;
pub mod interp;
pub mod manifolds;
pub mod optimizer;
pub mod pipeline;
pub mod rom;
pub mod sampling;

pub use error::{Error, Result};

/// Dense real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense real vector used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
