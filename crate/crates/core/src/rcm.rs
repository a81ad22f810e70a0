//! The RCM task: a two-component error that vanishes exactly when the tool
//! axis passes through the fulcrum, and its analytic Jacobian.
//!
//! With `d = p_T − p_F` the error is `(x_Tᵀ d, y_Tᵀ d)`. It is zero iff `d`
//! is parallel to `z_T`, in which case `d = λ z_T` with `λ` the insertion
//! depth. The fulcrum is fixed for a whole run.

use nalgebra::{Matrix2xX, Matrix3, Vector2, Vector3};

use crate::kinematics::{Frame, JacobianPair};
use crate::{lit, to_f64, Error, Real, Result};

/// |λ| below this is treated as the tool tip sitting on the fulcrum.
pub const DEGENERATE_INSERTION: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcmSetup<T: Real> {
    pub fulcrum: Vector3<T>,
    pub lambda0: T,
    pub tool_length: T,
}

impl<T: Real> RcmSetup<T> {
    pub fn new(fulcrum: Vector3<T>, lambda0: T, tool_length: T) -> Result<Self> {
        check_depth(lambda0, tool_length)?;
        if !fulcrum.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("fulcrum position is not finite".into()));
        }
        Ok(Self {
            fulcrum,
            lambda0,
            tool_length,
        })
    }

    /// Places the fulcrum on the tool axis `lambda0` behind the tip of `frame`.
    pub fn at_frame(frame: &Frame<T>, lambda0: T, tool_length: T) -> Result<Self> {
        let fulcrum = fulcrum_from_config(frame, lambda0, tool_length)?;
        Self::new(fulcrum, lambda0, tool_length)
    }
}

fn check_depth<T: Real>(lambda0: T, tool_length: T) -> Result<()> {
    if lambda0 > T::zero() && lambda0 < tool_length {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "nominal insertion depth must lie in (0, {}), got {}",
            to_f64(tool_length),
            to_f64(lambda0)
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcmError<T: Real>(pub Vector2<T>);

impl<T: Real> RcmError<T> {
    pub fn norm(&self) -> T {
        self.0.norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RcmJacobian<T: Real>(pub Matrix2xX<T>);

pub fn rcm_error<T: Real>(frame: &Frame<T>, setup: &RcmSetup<T>) -> RcmError<T> {
    let d = frame.origin - setup.fulcrum;
    RcmError(Vector2::new(frame.x_axis.dot(&d), frame.y_axis.dot(&d)))
}

/// Row `k` is `a_kᵀ J_v + (a_k × (p_T − p_F))ᵀ J_ω` with `a_1 = x_T`, `a_2 = y_T`.
pub fn rcm_jacobian<T: Real>(
    frame: &Frame<T>,
    jac: &JacobianPair<T>,
    setup: &RcmSetup<T>,
) -> RcmJacobian<T> {
    let d = frame.origin - setup.fulcrum;
    let row = |axis: &Vector3<T>| {
        axis.transpose() * &jac.linear + axis.cross(&d).transpose() * &jac.angular
    };
    let mut out = Matrix2xX::zeros(jac.ncols());
    out.set_row(0, &row(&frame.x_axis));
    out.set_row(1, &row(&frame.y_axis));
    RcmJacobian(out)
}

/// Signed depth `z_Tᵀ (p_T − p_F)`; positive iff the tool is inserted.
pub fn insertion_depth<T: Real>(frame: &Frame<T>, setup: &RcmSetup<T>) -> T {
    frame.z_axis.dot(&(frame.origin - setup.fulcrum))
}

/// `|(L − λ) / λ|`: outside length over inserted length.
pub fn insertion_ratio<T: Real>(frame: &Frame<T>, setup: &RcmSetup<T>) -> Result<T> {
    ratio_at_depth(insertion_depth(frame, setup), setup.tool_length)
}

pub(crate) fn ratio_at_depth<T: Real>(lambda: T, tool_length: T) -> Result<T> {
    if lambda.abs() <= lit(DEGENERATE_INSERTION) {
        return Err(Error::DegenerateInsertion {
            lambda: to_f64(lambda),
        });
    }
    Ok(((tool_length - lambda) / lambda).abs())
}

/// `p_T − λ₀ z_T`.
pub fn fulcrum_from_config<T: Real>(
    frame: &Frame<T>,
    lambda0: T,
    tool_length: T,
) -> Result<Vector3<T>> {
    check_depth(lambda0, tool_length)?;
    Ok(frame.origin - frame.z_axis * lambda0)
}

/// Projection-based RCM error `(I − z_T z_Tᵀ)(p_T − p_F)`. Its components
/// along `x_T` and `y_T` are exactly [`rcm_error`].
pub fn projection_error<T: Real>(frame: &Frame<T>, setup: &RcmSetup<T>) -> Vector3<T> {
    let z = frame.z_axis;
    let projector = Matrix3::identity() - z * z.transpose();
    projector * (frame.origin - setup.fulcrum)
}

/// The point where the tool attaches to the robot, `p_T − L z_T`.
pub fn tool_base<T: Real>(frame: &Frame<T>, tool_length: T) -> Vector3<T> {
    frame.origin - frame.z_axis * tool_length
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Vector3};

    fn frame(axis_angle: Vector3<f64>, origin: Vector3<f64>) -> Frame<f64> {
        Frame::from_rotation(Rotation3::new(axis_angle).matrix(), origin)
    }

    fn setup(fulcrum: Vector3<f64>) -> RcmSetup<f64> {
        RcmSetup::new(fulcrum, 0.1, 0.4).unwrap()
    }

    #[test]
    fn zero_error_on_axis() {
        let p_f = Vector3::new(0.3, -0.2, 0.1);
        let r = Rotation3::new(Vector3::new(0.3, -1.1, 0.7));
        for lambda in [-0.3, 0.0, 0.05, 0.1, 0.37] {
            let f = Frame::from_rotation(r.matrix(), p_f + r.matrix().column(2) * lambda);
            let e = rcm_error(&f, &setup(p_f));
            assert!(e.norm() < 1e-15, "lambda {lambda}: {:?}", e);
        }
    }

    #[test]
    fn lateral_offset_shows_in_first_component() {
        let p_f = Vector3::new(0.1, 0.2, 0.3);
        let r = Rotation3::new(Vector3::new(-0.4, 0.2, 1.3));
        let m = r.matrix();
        let f = Frame::from_rotation(m, p_f + m.column(0) * 0.001 + m.column(2) * 0.12);
        let e = rcm_error(&f, &setup(p_f));
        assert!((e.0.x - 0.001).abs() < 1e-15);
        assert!(e.0.y.abs() < 1e-15);
    }

    #[test]
    fn nonzero_error_off_axis() {
        // converse direction: off-axis displacement is always detected
        let p_f = Vector3::zeros();
        let r = Rotation3::new(Vector3::new(0.9, 0.1, -0.5));
        let m = r.matrix();
        for (a, b) in [(1e-6, 0.0), (0.0, -2e-4), (3e-3, 3e-3)] {
            let f = Frame::from_rotation(m, m.column(0) * a + m.column(1) * b + m.column(2) * 0.2);
            let e = rcm_error(&f, &setup(p_f));
            assert!(e.norm() > 0.5 * (a * a + b * b).sqrt());
        }
    }

    #[test]
    fn jacobian_special_cases() {
        let f = frame(Vector3::new(0.2, 0.4, -0.3), Vector3::new(0.5, 0.1, 0.2));
        let lin = Matrix3xX::from_fn(4, |i, j| ((i * 4 + j) as f64).sin());
        let zero = Matrix3xX::zeros(4);
        let ang = Matrix3xX::from_fn(4, |i, j| ((i + 2 * j) as f64).cos());

        // pure translation: angular Jacobian vanishes
        let pure = JacobianPair {
            linear: lin.clone(),
            angular: zero,
        };
        let j = rcm_jacobian(&f, &pure, &setup(Vector3::new(0.0, 0.3, -0.1)));
        assert!((j.0.row(0) - f.x_axis.transpose() * &lin).amax() < 1e-15);
        assert!((j.0.row(1) - f.y_axis.transpose() * &lin).amax() < 1e-15);

        // tip on the fulcrum: cross term vanishes
        let full = JacobianPair {
            linear: lin.clone(),
            angular: ang,
        };
        let j = rcm_jacobian(&f, &full, &setup(f.origin));
        assert!((j.0.row(0) - f.x_axis.transpose() * &lin).amax() < 1e-15);
        assert!((j.0.row(1) - f.y_axis.transpose() * &lin).amax() < 1e-15);
    }

    use nalgebra::Matrix3xX;

    #[test]
    fn depth_and_ratio() {
        let p_f = Vector3::new(0.0, 0.0, 0.5);
        let r = Rotation3::new(Vector3::new(0.1, 0.2, 0.3));
        let z = r.matrix().column(2).into_owned();
        let s = setup(p_f);
        let inserted = Frame::from_rotation(r.matrix(), p_f + z * 0.1);
        assert!((insertion_depth(&inserted, &s) - 0.1).abs() < 1e-15);
        assert!((insertion_ratio(&inserted, &s).unwrap() - 3.0).abs() < 1e-12);

        let out = Frame::from_rotation(r.matrix(), p_f - z * 0.05);
        assert!((insertion_depth(&out, &s) + 0.05).abs() < 1e-15);

        let half = Frame::from_rotation(r.matrix(), p_f + z * 0.2);
        assert!((insertion_ratio(&half, &s).unwrap() - 1.0).abs() < 1e-12);

        let full = Frame::from_rotation(r.matrix(), p_f + z * 0.4);
        assert!(insertion_ratio(&full, &s).unwrap().abs() < 1e-12);

        let at_fulcrum = Frame::from_rotation(r.matrix(), p_f);
        assert!(matches!(
            insertion_ratio(&at_fulcrum, &s),
            Err(Error::DegenerateInsertion { .. })
        ));
    }

    #[test]
    fn fulcrum_placement() {
        let f = frame(
            Vector3::new(-0.7, 0.3, 0.2),
            Vector3::new(0.56, -0.09, -0.12),
        );
        let s = RcmSetup::at_frame(&f, 0.1, 0.4).unwrap();
        assert!(rcm_error(&f, &s).norm() < 1e-12);
        assert!((insertion_depth(&f, &s) - 0.1).abs() < 1e-15);

        let s2 = RcmSetup::at_frame(&f, 0.2, 0.4).unwrap();
        assert!((insertion_ratio(&f, &s2).unwrap() - 1.0).abs() < 1e-12);

        let mid = fulcrum_from_config(&f, 0.2, 0.4).unwrap();
        let midpoint = (f.origin + tool_base(&f, 0.4)) * 0.5;
        assert!((mid - midpoint).norm() < 1e-15);

        for bad in [0.0, -0.1, 0.4, 0.5] {
            assert!(fulcrum_from_config(&f, bad, 0.4).is_err());
        }
    }

    #[test]
    fn projection_error_properties() {
        let f = frame(Vector3::new(1.0, -0.2, 0.4), Vector3::new(0.2, 0.2, 0.2));
        let s = setup(Vector3::new(0.25, 0.1, 0.3));
        let r2 = projection_error(&f, &s);
        assert!(f.z_axis.dot(&r2).abs() < 1e-15);
        let e = rcm_error(&f, &s);
        assert!((f.x_axis.dot(&r2) - e.0.x).abs() < 1e-15);
        assert!((f.y_axis.dot(&r2) - e.0.y).abs() < 1e-15);

        let on_axis = Frame {
            origin: s.fulcrum + f.z_axis * 0.17,
            ..f
        };
        assert!(projection_error(&on_axis, &s).norm() < 1e-15);
    }

    #[test]
    fn setup_validation() {
        assert!(RcmSetup::new(Vector3::zeros(), 0.1, 0.4).is_ok());
        assert!(RcmSetup::new(Vector3::zeros(), 0.4, 0.4).is_err());
        assert!(RcmSetup::new(Vector3::new(f64::NAN, 0.0, 0.0), 0.1, 0.4).is_err());
    }
}
