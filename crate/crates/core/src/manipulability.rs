//! RCM-aware manipulability.
//!
//! Stack `J = [J_v; J_F]` (5×n). The smallest joint velocity that produces
//! tip velocity `v` while holding the RCM error constant is
//! `q̇ = Jᵀ (JJᵀ)⁻¹ (v, 0, 0)`, and its squared norm is `vᵀ M v` where `M` is
//! the top-left 3×3 block of `(JJᵀ)⁻¹`. A small spectral radius of `M` means
//! every tip direction is cheap in joint space.

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen, Vector3};

use crate::kinematics::{forward_kinematics, jacobians, JacobianPair, JointConfig, KinematicChain};
use crate::rcm::{insertion_depth, rcm_jacobian, RcmJacobian, RcmSetup};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ManipulabilityReport<T: Real> {
    pub matrix: Matrix3<T>,
    pub spectral_radius: T,
    pub q0: JointConfig<T>,
    pub fulcrum: Vector3<T>,
}

/// `[J_v; J_F]`.
pub fn stacked_jacobian<T: Real>(
    jac: &JacobianPair<T>,
    rcm_jac: &RcmJacobian<T>,
) -> Result<DMatrix<T>> {
    let n = jac.ncols();
    if rcm_jac.0.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: rcm_jac.0.ncols(),
        });
    }
    let mut j = DMatrix::zeros(5, n);
    j.view_mut((0, 0), (3, n)).copy_from(&jac.linear);
    j.view_mut((3, 0), (2, n)).copy_from(&rcm_jac.0);
    Ok(j)
}

/// Thin QR of `Jᵀ`, so that `JJᵀ = RᵀR` without ever forming the Gram matrix
/// (which would square the condition number).
struct GramFactor<T: Real> {
    q: DMatrix<T>,
    r: DMatrix<T>,
}

impl<T: Real> GramFactor<T> {
    fn new(j: &DMatrix<T>) -> Result<Self> {
        let singular = |reason: &str| Error::Singular {
            q: Vec::new(),
            reason: reason.to_string(),
        };
        if j.nrows() > j.ncols() {
            return Err(singular(
                "stacked Jacobian J = [J_v; J_F] has more rows than joints",
            ));
        }
        let qr = j.transpose().qr();
        let r = qr.r();
        let diag = r.diagonal();
        let hi = diag.amax();
        let lo = diag.iter().fold(hi, |acc, &v| acc.min(v.abs()));
        if !(hi > T::zero()) || lo < T::pivot_tolerance() * hi {
            return Err(singular(
                "stacked Jacobian J = [J_v; J_F] is numerically rank deficient",
            ));
        }
        Ok(Self { q: qr.q(), r })
    }

    /// `(JJᵀ)⁻¹ = R⁻¹R⁻ᵀ`.
    fn inverse(&self) -> DMatrix<T> {
        let m = self.r.nrows();
        let r_inv = self
            .r
            .solve_upper_triangular(&DMatrix::identity(m, m))
            .expect("diagonal checked non-zero");
        &r_inv * r_inv.transpose()
    }

    /// `Jᵀ(JJᵀ)⁻¹ b = Q R⁻ᵀ b`.
    fn min_norm(&self, b: &DVector<T>) -> DVector<T> {
        let y = self
            .r
            .transpose()
            .solve_lower_triangular(b)
            .expect("diagonal checked non-zero");
        &self.q * y
    }
}

/// Full `(JJᵀ)⁻¹`.
pub fn gram_inverse<T: Real>(j: &DMatrix<T>) -> Result<DMatrix<T>> {
    Ok(GramFactor::new(j)?.inverse())
}

/// Largest eigenvalue magnitude of a symmetric 3×3 matrix. The input is
/// symmetrized before the eigen-solve.
pub fn spectral_radius<T: Real>(m: &Matrix3<T>) -> T {
    let sym = (m + m.transpose()) * nalgebra::convert::<f64, T>(0.5);
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .fold(T::zero(), |acc, &v| acc.max(v.abs()))
}

pub fn rcm_manipulability<T: Real>(
    chain: &KinematicChain<T>,
    q0: &JointConfig<T>,
    fulcrum: &Vector3<T>,
) -> Result<ManipulabilityReport<T>> {
    let frame = forward_kinematics(chain, q0)?;
    let jac = jacobians(chain, q0)?;
    let mut setup = RcmSetup {
        fulcrum: *fulcrum,
        lambda0: T::zero(),
        tool_length: chain.tool_length(),
    };
    setup.lambda0 = insertion_depth(&frame, &setup);
    let j_f = rcm_jacobian(&frame, &jac, &setup);
    let j = stacked_jacobian(&jac, &j_f)?;
    let inv = gram_inverse(&j).map_err(|e| with_config(e, q0))?;
    let matrix: Matrix3<T> = inv.fixed_view::<3, 3>(0, 0).into_owned();
    Ok(ManipulabilityReport {
        spectral_radius: spectral_radius(&matrix),
        matrix,
        q0: q0.clone(),
        fulcrum: *fulcrum,
    })
}

pub(crate) fn with_config<T: Real>(e: Error, q: &JointConfig<T>) -> Error {
    match e {
        Error::Singular { reason, .. } => Error::Singular {
            q: q.to_f64_vec(),
            reason,
        },
        other => other,
    }
}

/// Minimum-norm `q̇` with `J_v q̇ = v` and `J_F q̇ = 0`.
pub fn min_norm_velocity<T: Real>(
    jac: &JacobianPair<T>,
    rcm_jac: &RcmJacobian<T>,
    v: &Vector3<T>,
) -> Result<DVector<T>> {
    let j = stacked_jacobian(jac, rcm_jac)?;
    let rhs = DVector::from_column_slice(&[v.x, v.y, v.z, T::zero(), T::zero()]);
    Ok(GramFactor::new(&j)?.min_norm(&rhs))
}
