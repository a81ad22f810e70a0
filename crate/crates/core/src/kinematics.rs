//! Forward kinematics and geometric Jacobians of a revolute serial chain
//! described by standard Denavit–Hartenberg rows, with a rigid tool mounted
//! on the flange.
//!
//! Joint `i` transforms frame `i-1` into frame `i` by
//! `Rz(q_i + theta_offset) * Tz(d) * Tx(a) * Rx(alpha)`. The world frame is
//! the base frame of the chain. The tool tip frame is `flange * tool`, and the
//! tool shaft is aligned with the tip frame's z axis.

use nalgebra::{DVector, Isometry3, Matrix3, Matrix3xX, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::{lit, radians, to_f64, Error, Real, Result};

/// One standard DH row. Lengths in meters, angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhRow<T> {
    pub a: T,
    pub alpha: T,
    pub d: T,
    pub theta_offset: T,
}

impl<T: Real> DhRow<T> {
    pub fn new(a: T, alpha: T, d: T, theta_offset: T) -> Self {
        Self {
            a,
            alpha,
            d,
            theta_offset,
        }
    }

    /// Transform from the previous link frame to this one at joint angle `q`.
    pub fn transform(&self, q: T) -> Isometry3<T> {
        let theta = q + self.theta_offset;
        let (s, c) = theta.sin_cos();
        let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), theta)
            * UnitQuaternion::from_axis_angle(&Vector3::x_axis(), self.alpha);
        Isometry3::from_parts(Translation3::new(self.a * c, self.a * s, self.d), rot)
    }
}

/// Joint range in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimit<T> {
    pub min: T,
    pub max: T,
}

impl<T: Real> JointLimit<T> {
    pub fn new(min: T, max: T) -> Self {
        Self { min, max }
    }

    pub fn symmetric(bound: T) -> Self {
        Self {
            min: -bound,
            max: bound,
        }
    }

    pub fn contains(&self, q: T) -> bool {
        q >= self.min && q <= self.max
    }

    pub fn midpoint(&self) -> T {
        (self.min + self.max) * lit(0.5)
    }
}

/// An n-joint revolute arm plus a rigid tool.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain<T: Real> {
    rows: Vec<DhRow<T>>,
    limits: Vec<JointLimit<T>>,
    tool: Isometry3<T>,
    tool_length: T,
}

impl<T: Real> KinematicChain<T> {
    pub fn new(
        rows: Vec<DhRow<T>>,
        limits: Vec<JointLimit<T>>,
        tool: Isometry3<T>,
        tool_length: T,
    ) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "an RCM-constrained chain needs at least 2 joints, got {}",
                rows.len()
            )));
        }
        if limits.len() != rows.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: limits.len(),
            });
        }
        if !(tool_length > T::zero()) {
            return Err(Error::InvalidInput(format!(
                "tool length must be positive, got {}",
                to_f64(tool_length)
            )));
        }
        for (i, lim) in limits.iter().enumerate() {
            if !(lim.min < lim.max) {
                return Err(Error::InvalidInput(format!(
                    "joint {} limits are empty: [{}, {}]",
                    i + 1,
                    to_f64(lim.min),
                    to_f64(lim.max)
                )));
            }
        }
        let all_finite = rows.iter().all(|r| {
            r.a.is_finite() && r.alpha.is_finite() && r.d.is_finite() && r.theta_offset.is_finite()
        });
        if !all_finite {
            return Err(Error::InvalidInput("non-finite DH parameter".into()));
        }
        Ok(Self {
            rows,
            limits,
            tool,
            tool_length,
        })
    }

    /// KUKA LBR iiwa 14 R820 geometry with a straight tool of `tool_length`
    /// meters along the flange z axis.
    pub fn iiwa14(tool_length: T) -> Result<Self> {
        let half_pi = T::frac_pi_2();
        let alphas = [
            -half_pi,
            half_pi,
            half_pi,
            -half_pi,
            -half_pi,
            half_pi,
            T::zero(),
        ];
        let ds = [0.36, 0.0, 0.42, 0.0, 0.40, 0.0, 0.126];
        let limits_deg = [170.0, 120.0, 170.0, 120.0, 170.0, 120.0, 175.0];
        let rows = alphas
            .iter()
            .zip(ds)
            .map(|(&alpha, d)| DhRow::new(T::zero(), alpha, lit(d), T::zero()))
            .collect();
        let limits = limits_deg
            .iter()
            .map(|&deg| JointLimit::symmetric(radians::<T>(deg)))
            .collect();
        let tool = Isometry3::translation(T::zero(), T::zero(), tool_length);
        Self::new(rows, limits, tool, tool_length)
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[DhRow<T>] {
        &self.rows
    }

    pub fn limits(&self) -> &[JointLimit<T>] {
        &self.limits
    }

    pub fn tool(&self) -> &Isometry3<T> {
        &self.tool
    }

    pub fn tool_length(&self) -> T {
        self.tool_length
    }

    pub fn check_config(&self, q: &JointConfig<T>) -> Result<()> {
        if q.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: q.len(),
            });
        }
        if !q.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(
                "joint configuration is not finite".into(),
            ));
        }
        Ok(())
    }

    pub fn within_limits(&self, q: &JointConfig<T>) -> bool {
        q.iter().zip(&self.limits).all(|(&v, lim)| lim.contains(v))
    }

    /// Indices of joints outside their limits.
    pub fn limit_violations(&self, q: &JointConfig<T>) -> Vec<usize> {
        q.iter()
            .zip(&self.limits)
            .enumerate()
            .filter(|(_, (&v, lim))| !lim.contains(v))
            .map(|(i, _)| i)
            .collect()
    }

    /// Total angle by which `q` lies outside the joint limits.
    pub fn limit_excess(&self, q: &JointConfig<T>) -> T {
        q.iter()
            .zip(&self.limits)
            .fold(T::zero(), |acc, (&v, lim)| {
                acc + (lim.min - v).max(T::zero()) + (v - lim.max).max(T::zero())
            })
    }

    pub fn clamp(&self, q: &JointConfig<T>) -> JointConfig<T> {
        JointConfig::from_iterator(
            q.iter()
                .zip(&self.limits)
                .map(|(&v, lim)| v.max(lim.min).min(lim.max)),
        )
    }

    pub fn limit_midpoints(&self) -> JointConfig<T> {
        JointConfig::from_iterator(self.limits.iter().map(JointLimit::midpoint))
    }

    /// Per-link frames `T_0 .. T_n` followed by the tool tip.
    fn link_frames(&self, q: &JointConfig<T>) -> (Vec<Isometry3<T>>, Isometry3<T>) {
        let mut frames = Vec::with_capacity(self.n() + 1);
        let mut current = Isometry3::identity();
        frames.push(current);
        for (row, &qi) in self.rows.iter().zip(q.iter()) {
            current *= row.transform(qi);
            frames.push(current);
        }
        let tip = current * self.tool;
        (frames, tip)
    }

    fn tip(&self, q: &JointConfig<T>) -> Isometry3<T> {
        self.link_frames(q).1
    }
}

/// Joint positions in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct JointConfig<T: Real>(DVector<T>);

impl<T: Real> JointConfig<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self(DVector::from_vec(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DVector::zeros(n))
    }

    pub fn from_degrees(degrees: &[f64]) -> Self {
        Self::from_iterator(degrees.iter().map(|&d| radians::<T>(d)))
    }

    pub fn from_iterator<I: IntoIterator<Item = T>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }

    pub fn from_vector(v: DVector<T>) -> Self {
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.0.iter()
    }

    pub fn as_vector(&self) -> &DVector<T> {
        &self.0
    }

    pub fn as_slice(&self) -> &[T] {
        self.0.as_slice()
    }

    pub fn to_degrees(&self) -> Vec<f64> {
        self.0.iter().map(|&v| to_f64(v).to_degrees()).collect()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.0.iter().map(|&v| to_f64(v)).collect()
    }
}

impl<T: Real> std::ops::Index<usize> for JointConfig<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

/// Tool tip frame in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame<T: Real> {
    pub x_axis: Vector3<T>,
    pub y_axis: Vector3<T>,
    pub z_axis: Vector3<T>,
    pub origin: Vector3<T>,
}

impl<T: Real> Frame<T> {
    pub fn from_isometry(iso: &Isometry3<T>) -> Self {
        let r = iso.rotation.to_rotation_matrix().into_inner();
        Self {
            x_axis: r.column(0).into_owned(),
            y_axis: r.column(1).into_owned(),
            z_axis: r.column(2).into_owned(),
            origin: iso.translation.vector,
        }
    }

    /// Builds a frame from a rotation matrix whose columns are the axes.
    pub fn from_rotation(r: &Matrix3<T>, origin: Vector3<T>) -> Self {
        Self {
            x_axis: r.column(0).into_owned(),
            y_axis: r.column(1).into_owned(),
            z_axis: r.column(2).into_owned(),
            origin,
        }
    }

    pub fn rotation(&self) -> Matrix3<T> {
        Matrix3::from_columns(&[self.x_axis, self.y_axis, self.z_axis])
    }

    /// Largest deviation of `RᵀR` from identity and of `x × y` from `z`.
    pub fn orthonormality_error(&self) -> T {
        let r = self.rotation();
        let gram = (r.transpose() * r - Matrix3::identity()).amax();
        let hand = (self.x_axis.cross(&self.y_axis) - self.z_axis).amax();
        gram.max(hand)
    }
}

/// Geometric Jacobians of the tool tip frame, both expressed in world axes.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianPair<T: Real> {
    pub linear: Matrix3xX<T>,
    pub angular: Matrix3xX<T>,
}

impl<T: Real> JacobianPair<T> {
    pub fn ncols(&self) -> usize {
        self.linear.ncols()
    }
}

pub fn forward_kinematics<T: Real>(
    chain: &KinematicChain<T>,
    q: &JointConfig<T>,
) -> Result<Frame<T>> {
    chain.check_config(q)?;
    Ok(Frame::from_isometry(&chain.tip(q)))
}

/// Column `i` of the linear part is `z_{i-1} × (p_T − o_{i-1})`, of the
/// angular part `z_{i-1}`.
pub fn jacobians<T: Real>(
    chain: &KinematicChain<T>,
    q: &JointConfig<T>,
) -> Result<JacobianPair<T>> {
    chain.check_config(q)?;
    let (frames, tip) = chain.link_frames(q);
    let p_tip = tip.translation.vector;
    let n = chain.n();
    let mut linear = Matrix3xX::zeros(n);
    let mut angular = Matrix3xX::zeros(n);
    for (i, frame) in frames.iter().take(n).enumerate() {
        let axis = frame.rotation * Vector3::z();
        let origin = frame.translation.vector;
        linear.set_column(i, &axis.cross(&(p_tip - origin)));
        angular.set_column(i, &axis);
    }
    Ok(JacobianPair { linear, angular })
}

/// Central-difference Jacobians. The angular part is read off the
/// skew-symmetric matrix `dR · Rᵀ`.
pub fn finite_difference_jacobians<T: Real>(
    chain: &KinematicChain<T>,
    q: &JointConfig<T>,
    step: T,
) -> Result<JacobianPair<T>> {
    chain.check_config(q)?;
    if !(step > T::zero()) || !step.is_finite() {
        return Err(Error::InvalidInput(format!(
            "finite-difference step must be positive, got {}",
            to_f64(step)
        )));
    }
    let n = chain.n();
    let r0 = forward_kinematics(chain, q)?.rotation();
    let two_h = step + step;
    let mut linear = Matrix3xX::zeros(n);
    let mut angular = Matrix3xX::zeros(n);
    for i in 0..n {
        let mut plus = q.as_vector().clone();
        let mut minus = q.as_vector().clone();
        plus[i] += step;
        minus[i] -= step;
        let fp = forward_kinematics(chain, &JointConfig::from_vector(plus))?;
        let fm = forward_kinematics(chain, &JointConfig::from_vector(minus))?;
        linear.set_column(i, &((fp.origin - fm.origin) / two_h));
        let dr = (fp.rotation() - fm.rotation()) / two_h;
        let s = dr * r0.transpose();
        let half: T = lit(0.5);
        let omega = Vector3::new(
            (s[(2, 1)] - s[(1, 2)]) * half,
            (s[(0, 2)] - s[(2, 0)]) * half,
            (s[(1, 0)] - s[(0, 1)]) * half,
        );
        angular.set_column(i, &omega);
    }
    Ok(JacobianPair { linear, angular })
}
