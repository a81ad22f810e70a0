//! Reference implementations used only by the tests. Nothing here calls into
//! the library's kinematics or solvers: forward kinematics is rebuilt from raw
//! homogeneous matrices, derivatives come from finite differences, and the
//! optimization oracles go through pseudoinverses rather than KKT systems.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Vector2, Vector3};
use rand::Rng;

pub const TOOL: f64 = 0.4;
const ALPHA: [f64; 7] = [
    -std::f64::consts::FRAC_PI_2,
    std::f64::consts::FRAC_PI_2,
    std::f64::consts::FRAC_PI_2,
    -std::f64::consts::FRAC_PI_2,
    -std::f64::consts::FRAC_PI_2,
    std::f64::consts::FRAC_PI_2,
    0.0,
];
const D: [f64; 7] = [0.36, 0.0, 0.42, 0.0, 0.40, 0.0, 0.126];
const LIMIT_DEG: [f64; 7] = [170.0, 120.0, 170.0, 120.0, 170.0, 120.0, 175.0];

pub fn limits() -> Vec<(f64, f64)> {
    LIMIT_DEG
        .iter()
        .map(|d| (-d.to_radians(), d.to_radians()))
        .collect()
}

pub fn random_q<R: Rng>(rng: &mut R) -> Vec<f64> {
    limits()
        .iter()
        .map(|&(lo, hi)| rng.random_range(lo..=hi))
        .collect()
}

fn dh(theta: f64, d: f64, alpha: f64) -> Matrix4<f64> {
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = alpha.sin_cos();
    Matrix4::new(
        ct,
        -st * ca,
        st * sa,
        0.0, //
        st,
        ct * ca,
        -ct * sa,
        0.0, //
        0.0,
        sa,
        ca,
        d, //
        0.0,
        0.0,
        0.0,
        1.0,
    )
}

/// Tool frame of the reference arm: rotation and tip position.
pub fn fk(q: &[f64]) -> (Matrix3<f64>, Vector3<f64>) {
    let mut t = Matrix4::identity();
    for i in 0..7 {
        t *= dh(q[i], D[i], ALPHA[i]);
    }
    let mut tool = Matrix4::identity();
    tool[(2, 3)] = TOOL;
    t *= tool;
    let r = t.fixed_view::<3, 3>(0, 0).into_owned();
    (r, Vector3::new(t[(0, 3)], t[(1, 3)], t[(2, 3)]))
}

/// Central-difference linear and angular Jacobians of the reference arm.
pub fn fd_jacobians(q: &[f64], h: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (r0, _) = fk(q);
    let mut jv = DMatrix::zeros(3, 7);
    let mut jw = DMatrix::zeros(3, 7);
    for i in 0..7 {
        let mut qp = q.to_vec();
        let mut qm = q.to_vec();
        qp[i] += h;
        qm[i] -= h;
        let (rp, pp) = fk(&qp);
        let (rm, pm) = fk(&qm);
        jv.set_column(i, &((pp - pm) / (2.0 * h)));
        let w = (rp - rm) / (2.0 * h) * r0.transpose();
        jw.set_column(i, &Vector3::new(w[(2, 1)], w[(0, 2)], w[(1, 0)]));
    }
    (jv, jw)
}

/// `(x_Tᵀ(p_T − p_F), y_Tᵀ(p_T − p_F))` for the reference arm.
pub fn rcm_task(q: &[f64], fulcrum: &Vector3<f64>) -> Vector2<f64> {
    let (r, p) = fk(q);
    let d = p - fulcrum;
    Vector2::new(r.column(0).dot(&d), r.column(1).dot(&d))
}

pub fn depth(q: &[f64], fulcrum: &Vector3<f64>) -> f64 {
    let (r, p) = fk(q);
    r.column(2).dot(&(p - fulcrum))
}

/// Central-difference Jacobian of any vector function of `q`.
pub fn fd<F: Fn(&[f64]) -> DVector<f64>>(f: F, q: &[f64], h: f64) -> DMatrix<f64> {
    let m = f(q).len();
    let mut j = DMatrix::zeros(m, q.len());
    for i in 0..q.len() {
        let mut qp = q.to_vec();
        let mut qm = q.to_vec();
        qp[i] += h;
        qm[i] -= h;
        j.set_column(i, &((f(&qp) - f(&qm)) / (2.0 * h)));
    }
    j
}

/// Projector onto the null space of `a`.
pub fn null_projector(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    DMatrix::identity(n, n) - a.clone().pseudo_inverse(1e-12).unwrap() * a
}

/// Minimizer of `‖J_F u + b‖² + ε‖u‖²` subject to `J_v u = c`, by writing
/// `u = J_v⁺ c + P z` with `P` the null-space projector and solving the
/// unconstrained least squares in `z`.
pub fn qp_oracle(
    jv: &DMatrix<f64>,
    jf: &DMatrix<f64>,
    c: &DVector<f64>,
    b: &DVector<f64>,
    eps: f64,
) -> DVector<f64> {
    let n = jv.ncols();
    let up = jv.clone().pseudo_inverse(1e-14).unwrap() * c;
    let p = null_projector(jv);
    let se = eps.sqrt();
    let mut a = DMatrix::zeros(2 + n, n);
    a.view_mut((0, 0), (2, n)).copy_from(&(jf * &p));
    a.view_mut((2, 0), (n, n)).copy_from(&(&p * se));
    let mut rhs = DVector::zeros(2 + n);
    rhs.rows_mut(0, 2).copy_from(&(-(jf * &up + b)));
    rhs.rows_mut(2, n).copy_from(&(-&up * se));
    let z = a.pseudo_inverse(1e-14).unwrap() * rhs;
    up + p * z
}

/// Minimum-norm joint velocity with `J_v q̇ = v`, `J_F q̇ = 0`.
pub fn min_norm_oracle(jv: &DMatrix<f64>, jf: &DMatrix<f64>, v: &Vector3<f64>) -> DVector<f64> {
    let n = jv.ncols();
    let mut j = DMatrix::zeros(5, n);
    j.view_mut((0, 0), (3, n)).copy_from(jv);
    j.view_mut((3, 0), (2, n)).copy_from(jf);
    let rhs = DVector::from_column_slice(&[v.x, v.y, v.z, 0.0, 0.0]);
    j.pseudo_inverse(1e-14).unwrap() * rhs
}

/// Log-linear least-squares slope, returned as a positive decay rate.
pub fn decay_rate(t: &[f64], e: &[f64]) -> f64 {
    let n = t.len() as f64;
    let y: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let mt = t.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = t.iter().zip(&y).map(|(a, b)| (a - mt) * (b - my)).sum();
    let sxx: f64 = t.iter().map(|a| (a - mt).powi(2)).sum();
    -sxy / sxx
}

pub fn percentile(values: &mut [f64], p: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let idx = ((values.len() - 1) as f64 * p).round() as usize;
    values[idx]
}
