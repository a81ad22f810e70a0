//! Tool-tip reference trajectories.

use nalgebra::Vector3;

use crate::{lit, to_f64, Error, Real, Result};

/// Desired tip position and its time derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample<T: Real> {
    pub position: Vector3<T>,
    pub velocity: Vector3<T>,
}

/// A time-indexed tool-tip reference.
pub trait Trajectory<T: Real> {
    fn sample(&self, t: T) -> Result<TrajectorySample<T>>;
}

/// A fixed target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantPoint<T: Real>(pub Vector3<T>);

impl<T: Real> Trajectory<T> for ConstantPoint<T> {
    fn sample(&self, t: T) -> Result<TrajectorySample<T>> {
        check_time(t)?;
        Ok(TrajectorySample {
            position: self.0,
            velocity: Vector3::zeros(),
        })
    }
}

/// Helical suturing path around a start point.
///
/// With `α(t) = min(1, t / ramp_time)`:
///
/// ```text
/// p_d(t) = p0 + ( r α cos(ω₁ t),  r sin(ω₁ t),  a sin(ω₂ t) − δ α )
/// ```
///
/// so that `p_d(0) = p0` and the circle and the downward offset fade in over
/// the ramp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HelixParams<T: Real> {
    pub start: Vector3<T>,
    pub radius_xy: T,
    pub z_amplitude: T,
    pub z_drop: T,
    pub omega_xy: T,
    pub omega_z: T,
    pub ramp_time: T,
}

impl<T: Real> HelixParams<T> {
    /// 3 cm circle at π/5 rad/s, 6 cm vertical oscillation at π/10 rad/s,
    /// 4 cm drop, 5 s ramp.
    pub fn suturing(start: Vector3<T>) -> Self {
        Self {
            start,
            radius_xy: lit(0.03),
            z_amplitude: lit(0.06),
            z_drop: lit(0.04),
            omega_xy: T::pi() / lit(5.0),
            omega_z: T::pi() / lit(10.0),
            ramp_time: lit(5.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let scalars = [
            ("radius_xy", self.radius_xy),
            ("z_amplitude", self.z_amplitude),
            ("z_drop", self.z_drop),
            ("omega_xy", self.omega_xy),
            ("omega_z", self.omega_z),
            ("ramp_time", self.ramp_time),
        ];
        for (name, v) in scalars {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "helix {name} must be positive, got {}",
                    to_f64(v)
                )));
            }
        }
        if !self.start.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("helix start is not finite".into()));
        }
        Ok(())
    }
}

fn check_time<T: Real>(t: T) -> Result<()> {
    if t >= T::zero() && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "trajectory time must be non-negative, got {}",
            to_f64(t)
        )))
    }
}

/// Samples the helix. At `t = ramp_time` the velocity is the right-hand
/// derivative (the ramp has ended).
pub fn helical_reference<T: Real>(params: &HelixParams<T>, t: T) -> Result<TrajectorySample<T>> {
    check_time(t)?;
    let (alpha, alpha_dot) = if t < params.ramp_time {
        (t / params.ramp_time, T::one() / params.ramp_time)
    } else {
        (T::one(), T::zero())
    };
    let r = params.radius_xy;
    let (s1, c1) = (params.omega_xy * t).sin_cos();
    let (s2, c2) = (params.omega_z * t).sin_cos();
    let offset = Vector3::new(
        r * alpha * c1,
        r * s1,
        params.z_amplitude * s2 - params.z_drop * alpha,
    );
    let velocity = Vector3::new(
        r * (alpha_dot * c1 - alpha * params.omega_xy * s1),
        r * params.omega_xy * c1,
        params.z_amplitude * params.omega_z * c2 - params.z_drop * alpha_dot,
    );
    Ok(TrajectorySample {
        position: params.start + offset,
        velocity,
    })
}

impl<T: Real> Trajectory<T> for HelixParams<T> {
    fn sample(&self, t: T) -> Result<TrajectorySample<T>> {
        helical_reference(self, t)
    }
}
