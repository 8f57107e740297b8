//! Gradient projection solvers for quadratic programs with box bounds and at
//! most one linear equality constraint.
//!
//! The main entry point is [`driver::solve`]. [`gen`] builds random test
//! problems with a known stationary point, [`svmio`] turns LIBSVM data into
//! SVM dual problems and [`bench`] runs batches and computes performance
//! profiles.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod driver;
pub mod error;
pub mod eval;
pub mod format;
pub mod gen;
pub mod linalg;
pub mod model;
pub mod phase1;
pub mod projection;
pub mod reduced;
pub mod stationarity;
pub mod steplength;
pub mod svmio;

pub use driver::{solve, Mode, SolveReport, SolverConfig, Status, TolMode};
pub use error::{Error, Result};
pub use model::{ActiveSets, Activity, Counters, CooSym, DenseSym, Hessian, LinearConstraint, LinearOperator, Problem};
