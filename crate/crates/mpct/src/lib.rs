//! MPC for tracking with artificial references.
//!
//! The crate provides the building blocks of the tracking-MPC family in
//! which a steady state (or periodic / harmonic trajectory) is optimized
//! jointly with the predicted trajectory:
//!
//! * [`model`] — linear systems, polytopes/zonotopes, reachable steady states;
//! * [`setops`] — invariant sets, robust positive invariant tubes, tightening;
//! * [`design`] — Riccati/Lyapunov synthesis and design validation;
//! * [`formulations`] — translation of a design into structured QPs/SOCPs;
//! * [`solver`] — first-order ADMM solvers exploiting the banded-plus-low-rank
//!   cost structure, plus an independent interior-point reference backend;
//! * [`sim`] — closed-loop simulation, disturbance sampling and
//!   domain-of-attraction scans.
//!
//! All numerical code is generic over the scalar type through
//! [`scalar::Scalar`]; the aliases below fix `f64` for the common case.

pub mod conic;
pub mod design;
pub mod formulations;
pub mod model;
pub mod sampling;
pub mod scalar;
pub mod schema;
pub mod setops;
pub mod sim;
pub mod solver;
pub mod sparse;

pub use scalar::{convert, to_f64, Scalar};

/// `f64` aliases for the main domain types.
pub type LinearSystem64 = model::LinearSystem<f64>;
pub type Polytope64 = model::Polytope<f64>;
pub type Zonotope64 = model::Zonotope<f64>;
pub type TrackingDesign64 = design::TrackingDesign<f64>;
pub type StructuredProgram64 = formulations::StructuredProgram<f64>;
pub type ControllerSpec64 = formulations::ControllerSpec<f64>;
pub type SolverSettings64 = solver::SolverSettings<f64>;
pub type ClosedLoopTrace64 = sim::ClosedLoopTrace<f64>;
