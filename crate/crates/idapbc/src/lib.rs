//! Synthesis and certification of IDA-PBC controllers for underactuated
//! mechanical systems, built around the homogeneous solution of the
//! potential-energy matching PDE.
//!
//! The crate evaluates the kinetic/potential matching residuals, checks the
//! equilibrium stability condition through the Hessians of the shaped
//! potential and of the gravity-correction functional, derives gain lower
//! bounds for the two-DOF case, searches feasible gains for the general case,
//! and simulates the closed loop with a Lyapunov audit. Five benchmark
//! systems (cable robot, acrobot, pendubot, cart-pole, VTOL) ship with their
//! published desired inertias and potential bases.

pub mod benchmarks;
pub mod condition;
pub mod control;
pub mod error;
pub mod linalg;
pub mod matching;
pub mod model;
pub mod simulator;

pub use error::{Error, Result};
pub use model::{ClosedLoopDesign, J2Policy, PhaseState, ScalarField, SystemModel, Workspace};
