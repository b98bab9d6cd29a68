//! Safety filters built on backup control barrier functions.
//!
//! A backup policy is integrated forward from the current state together with
//! its sensitivity Jacobian. The implicit barrier is the minimum of the safety
//! constraints along that flow and a terminal-set function at the horizon, and
//! the filter solves a small QP that keeps every sampled constraint row
//! satisfied. A grid Hamilton-Jacobi solver provides a near-maximal invariant
//! set for comparison.
//!
//! Module map:
//!
//! - [`systems`]: control-affine models, backup policies, safety specs and the
//!   benchmark instances.
//! - [`flow`]: fixed-step RK4 integration of the closed-loop flow with
//!   sensitivities.
//! - [`barrier`]: barrier evaluation, constraint assembly and the filter.
//! - [`qp`]: dense dual active-set solver for `min |u - u0|^2`.
//! - [`hjgrid`]: level grids, the viability value iteration and set metrics.
//! - [`harness`]: scenarios, closed-loop simulation, timing and file output.

pub mod barrier;
pub mod error;
pub mod flow;
pub mod harness;
pub mod hjgrid;
pub mod qp;
pub mod systems;

pub use error::{Error, Result};

/// State, input and covector values share one dense representation.
pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;
