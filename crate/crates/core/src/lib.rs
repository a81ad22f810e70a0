//! Tool-tip trajectory tracking for kinematically redundant serial arms under a
//! remote-center-of-motion (RCM) constraint.
//!
//! The math is generic over the scalar type through [`Real`]; the aliases at the
//! bottom of this file fix it to `f64` (the simulator and CLI) or `f32`.
//!
//! Module map:
//!
//! - [`kinematics`]: DH forward kinematics, geometric Jacobians, finite-difference oracle.
//! - [`rcm`]: RCM task function, its Jacobian, insertion depth and ratio.
//! - [`controller`]: QP-based joint-velocity command and Euler integration.
//! - [`manipulability`] / [`anneal`]: RCM-aware manipulability and start-configuration search.
//! - [`trajectory`]: helical reference and constant targets.
//! - [`sim`] / [`config`]: closed-loop runner, CSV log, summaries, config files.
//! - [`verify`]: property checks used by the `check` CLI subcommand.
// `!(x > 0)` is used on purpose throughout: unlike `x <= 0` it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anneal;
pub mod config;
pub mod controller;
mod error;
pub mod kinematics;
pub mod manipulability;
pub mod rcm;
pub mod sim;
pub mod trajectory;
pub mod verify;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

pub use error::{Error, Result};

/// Scalar type accepted by every numeric routine in the crate.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {
    /// Relative pivot size below which a dense solve is declared singular.
    fn pivot_tolerance() -> Self {
        let floor: Self = nalgebra::convert(1e-12);
        floor.max(Self::default_epsilon() * nalgebra::convert(100.0))
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for `nalgebra::convert::<f64, T>`.
#[inline]
pub(crate) fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Degrees to radians, converted in `f64` before narrowing.
#[inline]
pub(crate) fn radians<T: Real>(deg: f64) -> T {
    lit(deg.to_radians())
}

#[inline]
pub(crate) fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

pub use anneal::{anneal_start_config, AnnealParams, StartConfigProblem, WorkspaceBox};
pub use controller::{
    compute_command, integrate_step, step, ControlCommand, ControlParams, Integrated, TaskGains,
    TrackingError,
};
pub use kinematics::{
    finite_difference_jacobians, forward_kinematics, jacobians, DhRow, Frame, JacobianPair,
    JointConfig, JointLimit, KinematicChain,
};
pub use manipulability::{min_norm_velocity, rcm_manipulability, ManipulabilityReport};
pub use rcm::{
    fulcrum_from_config, insertion_depth, insertion_ratio, projection_error, rcm_error,
    rcm_jacobian, RcmError, RcmJacobian, RcmSetup,
};
pub use sim::{
    compare_insertion_ratios, inject_measurement_noise, run_simulation, Comparison, SimConfig,
    SimRecord, SimSummary,
};
pub use trajectory::{helical_reference, ConstantPoint, HelixParams, Trajectory, TrajectorySample};

pub type KinematicChainF64 = KinematicChain<f64>;
pub type KinematicChainF32 = KinematicChain<f32>;
pub type JointConfigF64 = JointConfig<f64>;
pub type JointConfigF32 = JointConfig<f32>;
pub type FrameF64 = Frame<f64>;
pub type FrameF32 = Frame<f32>;
pub type JacobianPairF64 = JacobianPair<f64>;
pub type RcmSetupF64 = RcmSetup<f64>;
pub type RcmSetupF32 = RcmSetup<f32>;
pub type TaskGainsF64 = TaskGains<f64>;
pub type HelixParamsF64 = HelixParams<f64>;
pub type SimConfigF64 = SimConfig<f64>;
pub type SimRecordF64 = SimRecord<f64>;
pub type SimSummaryF64 = SimSummary<f64>;
