//! Bayesian smoothing of curve bundles with a Gaussian graphical model on the
//! B-spline coefficients.
//!
//! Each curve is expanded in a cubic B-spline basis; the coefficient vectors
//! share a mean and a precision matrix that is Markov with respect to an
//! unknown graph. A Gibbs sampler updates the coefficients, their mean and the
//! noise variance, and a birth-death step moves the graph one edge at a time.
//! Graph summaries weight every visited state by its expected holding time.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bdmcmc;
pub mod bspline;
pub mod dataset;
pub mod error;
pub mod gibbs;
pub mod graph;
pub mod gwishart;
pub mod io;
pub mod linalg;
pub mod parallel;
pub mod posterior;
pub mod rng;
pub mod simulation;
pub mod stats;

pub use error::{Error, Result};
