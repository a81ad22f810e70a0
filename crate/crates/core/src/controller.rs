//! Joint-velocity controller.
//!
//! Each cycle imposes `ṙ_T = −K_T r_T` (tool-tip tracking) as a hard equality
//! and `ṙ_F = −K_F r_F` (RCM) in the least-squares sense:
//!
//! ```text
//! min_u ‖J_F u + K_F r_F‖² + ε‖u‖²   s.t.   J_v u = −K_T r_T (+ ṗ_d)
//! ```
//!
//! The QP has no inequalities, so it is solved through its KKT system
//!
//! ```text
//! [ J_FᵀJ_F + εI   J_vᵀ ] [u]   [ −K_F J_Fᵀ r_F ]
//! [ J_v            0    ] [γ] = [ −K_T r_T      ]
//! ```
//!
//! with a pivoted dense LU factorization.

use log::warn;
use nalgebra::{DMatrix, DVector, Vector3};

use crate::kinematics::{forward_kinematics, jacobians, JacobianPair, JointConfig, KinematicChain};
use crate::rcm::{
    insertion_depth, ratio_at_depth, rcm_error, rcm_jacobian, RcmError, RcmJacobian, RcmSetup,
};
use crate::sim::SimRecord;
use crate::trajectory::TrajectorySample;
use crate::{lit, to_f64, Error, Real, Result};

pub const DEFAULT_K_TRACKING: f64 = 14.0;
pub const DEFAULT_K_RCM: f64 = 27.0;
pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_FREQUENCY: f64 = 250.0;

/// Task-dynamics gains in 1/s and the velocity regularizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskGains<T> {
    pub k_tracking: T,
    pub k_rcm: T,
    pub epsilon: T,
}

impl<T: Real> TaskGains<T> {
    pub fn new(k_tracking: T, k_rcm: T, epsilon: T) -> Result<Self> {
        for (name, v) in [("K_T", k_tracking), ("K_F", k_rcm), ("epsilon", epsilon)] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive, got {}",
                    to_f64(v)
                )));
            }
        }
        Ok(Self {
            k_tracking,
            k_rcm,
            epsilon,
        })
    }
}

impl<T: Real> Default for TaskGains<T> {
    fn default() -> Self {
        Self {
            k_tracking: lit(DEFAULT_K_TRACKING),
            k_rcm: lit(DEFAULT_K_RCM),
            epsilon: lit(DEFAULT_EPSILON),
        }
    }
}

/// `p_T − p_d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingError<T: Real>(pub Vector3<T>);

#[derive(Debug, Clone, PartialEq)]
pub struct ControlCommand<T: Real> {
    /// Joint velocities in rad/s.
    pub velocity: DVector<T>,
    /// Lagrange multiplier of the tracking constraint.
    pub multiplier: Vector3<T>,
}

pub fn compute_command<T: Real>(
    jac: &JacobianPair<T>,
    rcm_jac: &RcmJacobian<T>,
    r_t: &TrackingError<T>,
    r_f: &RcmError<T>,
    gains: &TaskGains<T>,
    feedforward: Option<&Vector3<T>>,
) -> Result<ControlCommand<T>> {
    let n = jac.ncols();
    if jac.angular.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: jac.angular.ncols(),
        });
    }
    if rcm_jac.0.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: rcm_jac.0.ncols(),
        });
    }
    let finite = jac.linear.iter().all(|v| v.is_finite())
        && rcm_jac.0.iter().all(|v| v.is_finite())
        && r_t.0.iter().all(|v| v.is_finite())
        && r_f.0.iter().all(|v| v.is_finite())
        && feedforward.is_none_or(|v| v.iter().all(|x| x.is_finite()));
    if !finite {
        return Err(Error::InvalidInput("non-finite controller input".into()));
    }

    let j_v = &jac.linear;
    let j_f = &rcm_jac.0;
    let dim = n + 3;
    let mut kkt = DMatrix::<T>::zeros(dim, dim);
    let mut hessian = j_f.transpose() * j_f;
    for i in 0..n {
        hessian[(i, i)] += gains.epsilon;
    }
    kkt.view_mut((0, 0), (n, n)).copy_from(&hessian);
    kkt.view_mut((0, n), (n, 3)).copy_from(&j_v.transpose());
    kkt.view_mut((n, 0), (3, n)).copy_from(j_v);

    let mut target = -r_t.0 * gains.k_tracking;
    if let Some(v) = feedforward {
        target += v;
    }
    let mut rhs = DVector::<T>::zeros(dim);
    rhs.rows_mut(0, n)
        .copy_from(&(j_f.transpose() * r_f.0 * (-gains.k_rcm)));
    rhs.rows_mut(n, 3).copy_from(&target);

    let scale = kkt.amax();
    let lu = kkt.lu();
    let u_factor = lu.u();
    let tol = T::pivot_tolerance() * scale.max(T::default_epsilon());
    if let Some(i) = (0..dim).find(|&i| u_factor[(i, i)].abs() < tol) {
        return Err(Error::Singular {
            q: Vec::new(),
            reason: format!(
                "KKT pivot {} of {} is {:e} (scale {:e}); tracking Jacobian lost rank",
                i + 1,
                dim,
                to_f64(u_factor[(i, i)]),
                to_f64(scale)
            ),
        });
    }
    let sol = lu.solve(&rhs).ok_or_else(|| Error::Singular {
        q: Vec::new(),
        reason: "KKT system is singular".into(),
    })?;
    Ok(ControlCommand {
        velocity: sol.rows(0, n).into_owned(),
        multiplier: Vector3::new(sol[n], sol[n + 1], sol[n + 2]),
    })
}

/// Result of one Euler step. `violations` lists joints now outside their limits.
#[derive(Debug, Clone, PartialEq)]
pub struct Integrated<T: Real> {
    pub q: JointConfig<T>,
    pub violations: Vec<usize>,
}

/// `q_k = q_{k-1} + u / frequency`. Limit violations are reported and logged,
/// never clipped.
pub fn integrate_step<T: Real>(
    chain: &KinematicChain<T>,
    q_prev: &JointConfig<T>,
    u: &ControlCommand<T>,
    frequency: T,
) -> Result<Integrated<T>> {
    if !(frequency > T::zero()) || !frequency.is_finite() {
        return Err(Error::InvalidInput(format!(
            "control frequency must be positive, got {}",
            to_f64(frequency)
        )));
    }
    if u.velocity.len() != q_prev.len() {
        return Err(Error::DimensionMismatch {
            expected: q_prev.len(),
            got: u.velocity.len(),
        });
    }
    let next = q_prev.as_vector() + &u.velocity / frequency;
    let q = JointConfig::from_vector(next);
    let violations = chain.limit_violations(&q);
    if !violations.is_empty() {
        warn!(
            "joint limit exceeded on joints {:?} at q = {:?}",
            violations.iter().map(|i| i + 1).collect::<Vec<_>>(),
            q.to_degrees()
        );
    }
    Ok(Integrated { q, violations })
}

/// Controller settings that stay fixed over a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlParams<T> {
    pub gains: TaskGains<T>,
    pub frequency: T,
    /// Add the reference velocity to the tracking constraint.
    pub feedforward: bool,
}

impl<T: Real> Default for ControlParams<T> {
    fn default() -> Self {
        Self {
            gains: TaskGains::default(),
            frequency: lit(DEFAULT_FREQUENCY),
            feedforward: false,
        }
    }
}

/// One control cycle at time `t`: evaluates the state at `q`, computes the
/// command against `reference`, and integrates it. The returned record
/// describes the state at `q` (before the update).
pub fn step<T: Real>(
    chain: &KinematicChain<T>,
    setup: &RcmSetup<T>,
    params: &ControlParams<T>,
    q: &JointConfig<T>,
    t: T,
    reference: &TrajectorySample<T>,
) -> Result<(Integrated<T>, SimRecord<T>)> {
    let frame = forward_kinematics(chain, q)?;
    let jac = jacobians(chain, q)?;
    let r_f = rcm_error(&frame, setup);
    let j_f = rcm_jacobian(&frame, &jac, setup);
    let r_t = TrackingError(frame.origin - reference.position);
    let ff = params.feedforward.then_some(&reference.velocity);
    let cmd = compute_command(&jac, &j_f, &r_t, &r_f, &params.gains, ff).map_err(|e| match e {
        Error::Singular { reason, .. } => Error::Singular {
            q: q.to_f64_vec(),
            reason,
        },
        other => other,
    })?;
    let lambda = insertion_depth(&frame, setup);
    let rho = ratio_at_depth(lambda, setup.tool_length)?;
    let record = SimRecord {
        t,
        q: q.clone(),
        tip: frame.origin,
        desired: reference.position,
        tracking_error: r_t.0.norm(),
        rcm_error: r_f.norm(),
        insertion_depth: lambda,
        insertion_ratio: rho,
        command_norm: cmd.velocity.norm(),
        measured_tip: None,
    };
    let next = integrate_step(chain, q, &cmd, params.frequency)?;
    Ok((next, record))
}
