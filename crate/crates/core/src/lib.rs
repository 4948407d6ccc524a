//! Age-structured SIRS epidemic model with Holling type III saturated treatment.
//!
//! The crate covers the uncontrolled dynamics ([`model`], [`integrator`]),
//! equilibria and the basic reproduction number ([`reproduction`]), an
//! optimal treatment problem solved by forward-backward sweep ([`control`]),
//! one-at-a-time parameter sensitivity ([`sensitivity`]) and the scripted
//! studies built on top of them ([`experiments`], [`commands`]).
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which is what the studies and the CLI use.

// `!(x > 0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod battery;
pub mod commands;
pub mod config;
pub mod control;
pub mod error;
pub mod experiments;
pub mod integrator;
pub mod linalg;
pub mod model;
pub mod output;
pub mod reproduction;
pub mod scalar;
pub mod sensitivity;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Params = model::ModelParams<f64>;
pub type State = model::StateVector<f64>;
pub type Controls = model::ControlPair<f64>;
pub type Grid = integrator::TimeGrid<f64>;
pub type StateTrajectory = integrator::Trajectory<f64, { model::DIM }>;
pub type Weights = control::CostWeights<f64>;
pub type Bounds = control::ControlBounds<f64>;
pub type Settings = control::SweepSettings<f64>;
pub type Schedule = control::ControlSchedule<f64>;
pub type Problem = control::ControlProblem<f64>;
pub type Sweep = control::SweepOutcome<f64>;
