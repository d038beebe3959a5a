//! Confidence sets for parameters defined as solutions of linear or convex
//! quadratic programs whose coefficients are estimated from data.
//!
//! A program such as `max c'θ s.t. Aθ ≤ b` with estimated `(Â, b̂, ĉ)` does
//! not admit normal-theory or bootstrap inference on its argmax, because the
//! solution is a non-differentiable function of the coefficients. This crate
//! instead rewrites the program's optimality conditions (primal feasibility,
//! dual feasibility, complementary slackness) as a set of equalities that are
//! linear in the estimated coefficients, profiles a GMM-style quadratic form
//! over the multiplier and slack nuisance parameters subject to the
//! complementarity constraints, and inverts the resulting chi-square test to
//! obtain a confidence set for θ.
//!
//! Module map:
//!
//! - [`densela`]: dense matrix/vector kernel (vec, Kronecker, solves).
//! - [`lp`], [`qp`]: simplex and active-set solvers that return the
//!   multipliers and slacks the optimality system needs.
//! - [`kkt`]: builds the stochastic moment system from a program and its
//!   estimated coefficients.
//! - [`mpcc`]: profiles the test statistic over nuisance parameters by
//!   enumerating complementarity pieces.
//! - [`stats`]: chi-square quantiles, seeded sampling, covariance estimators.
//! - [`inference`]: membership tests, grid scans, projection intervals.
//! - [`experiments`]: Monte Carlo coverage studies on two LP designs.
//! - [`portfolio`]: end-to-end minimum-variance portfolio application.

pub mod densela;
pub mod exec;
pub mod experiments;
pub mod inference;
pub mod kkt;
pub mod lp;
pub mod mpcc;
pub mod portfolio;
pub mod qp;
pub mod stats;

pub use densela::{DenseMatrix, DenseVector, LinAlgError};
pub use inference::{ConfidenceSet, ConfidenceSpec, ThetaConstraint};
pub use kkt::{EstimatedCoefficients, KktSystem};
pub use lp::{LpProblem, LpSolution, LpStatus};
pub use mpcc::ProfileResult;
pub use qp::{QpProblem, QpSolution, QpStatus};
pub use stats::Rng;


