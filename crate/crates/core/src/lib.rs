//! Closed-loop benchmark toolkit for multirotor trajectory tracking with
//! linear and nonlinear model predictive control.
//!
//! The crate models a multirotor abstracted to an attitude-plus-thrust
//! cascade interface: an identified first-order inner attitude loop driven
//! by roll/pitch commands, a heading-rate passthrough, and a mass-normalized
//! collective thrust. On top of that model it provides
//!
//! - a hover-linearized discrete model and a condensed-QP linear MPC,
//! - a multiple-shooting nonlinear MPC solved by Gauss-Newton real-time
//!   iterations with an implicit fourth-order Runge-Kutta integrator,
//! - an augmented-state EKF estimating external forces for offset-free
//!   tracking,
//! - a deterministic closed-loop simulator with wind injection, and
//! - scenario configs, logs, and tracking metrics for benchmarking the two
//!   controllers against each other.
//!
//! Core numerics (dynamics, integrator, QP, Riccati) are generic over the
//! scalar type through the [`Real`] trait; the controllers, estimator and
//! simulator run in `f64`.

pub mod dynamics;
pub mod ekf;
pub mod error;
pub mod lmpc;
pub mod metrics;
pub mod nmpc;
pub mod ocp;
pub mod qp;
pub mod riccati;
pub mod rk;
pub mod scalar;
pub mod scenario;
pub mod sim;
pub mod trajectory;

pub use error::Error;
pub use scalar::Real;

/// Default scalar for the benchmark harness.
pub type Scalar = f64;

pub type MavState = dynamics::MavState<Scalar>;
pub type AttitudeThrustCommand = dynamics::AttitudeThrustCommand<Scalar>;
pub type ModelParams = dynamics::ModelParams<Scalar>;
pub type InputLimits = dynamics::InputLimits<Scalar>;
pub type ExternalForce = dynamics::ExternalForce<Scalar>;
pub type LinearModel = dynamics::LinearModel<Scalar>;
pub type BoxQp = qp::BoxQp<Scalar>;
pub type QpSolution = qp::QpSolution<Scalar>;
pub type ActiveSetSolver = qp::ActiveSetSolver<Scalar>;
pub type Integrator = rk::Irk4<Scalar>;
