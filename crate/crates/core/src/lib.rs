//! Prescribed-time dual-mode extremum-seeking control.
//!
//! The controller drives an unknown control-affine plant to the input that
//! minimizes its measured output within a user-chosen horizon `T`. Gains and
//! filter rates are scheduled through the time dilation `τ = Tt/(T−t)`, so
//! convergence that would take infinite time in `τ` completes before `T`.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the
//! `*64` aliases below fix the scalar to `f64`.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod controller;
pub mod error;
pub mod plant;
mod scalar;
pub mod sim;
pub mod timescale;

pub use analysis::{
    compare_trajectories, convergence_report, decay_envelope_check, estimate_tracking, ConvergenceReport, Discrepancy,
    EnvelopeCheck, Signal,
};
pub use controller::{AveragedRates, ControllerState, EscParams};
pub use error::{Error, Result};
pub use plant::{Optimum, PlantModel, StateBox};
pub use scalar::Real;
pub use sim::{simulate, IntegratorConfig, Method, Mode, RunStatus, Trajectory};
pub use timescale::PrescribedTime;

pub type PrescribedTime64 = PrescribedTime<f64>;
pub type EscParams64 = EscParams<f64>;
pub type PlantModel64 = PlantModel<f64>;
pub type Trajectory64 = Trajectory<f64>;
pub type IntegratorConfig64 = IntegratorConfig<f64>;

pub type PrescribedTime32 = PrescribedTime<f32>;
pub type EscParams32 = EscParams<f32>;
pub type PlantModel32 = PlantModel<f32>;
pub type Trajectory32 = Trajectory<f32>;
pub type IntegratorConfig32 = IntegratorConfig<f32>;
