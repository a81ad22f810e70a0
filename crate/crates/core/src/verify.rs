//! Self-checks run by `rcmsim check`: each compares an implementation route
//! against an independent one (finite differences, null-space elimination,
//! SVD pseudoinverse) on random in-limit configurations of a chain.

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controller::{compute_command, TaskGains, TrackingError};
use crate::kinematics::{
    finite_difference_jacobians, forward_kinematics, jacobians, JointConfig, KinematicChain,
};
use crate::manipulability::{min_norm_velocity, rcm_manipulability, stacked_jacobian};
use crate::rcm::{
    insertion_depth, insertion_ratio, projection_error, rcm_error, rcm_jacobian, tool_base,
    RcmError, RcmSetup,
};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub samples: usize,
    /// Worst observed error, in the check's own measure.
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] {:<28} worst {:.3e} (tol {:.0e}, {} samples)",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.worst,
            self.tolerance,
            self.samples
        )
    }
}

pub fn random_config<R: Rng>(chain: &KinematicChain<f64>, rng: &mut R) -> JointConfig<f64> {
    JointConfig::from_iterator(
        chain
            .limits()
            .iter()
            .map(|l| rng.random_range(l.min..=l.max)),
    )
}

/// Random in-limit configuration with a fulcrum placed at a random depth
/// along the tool.
fn random_state<R: Rng>(
    chain: &KinematicChain<f64>,
    rng: &mut R,
) -> Result<(JointConfig<f64>, RcmSetup<f64>)> {
    let q = random_config(chain, rng);
    let frame = forward_kinematics(chain, &q)?;
    let l = chain.tool_length();
    let lambda0 = rng.random_range(0.1 * l..0.9 * l);
    Ok((q, RcmSetup::at_frame(&frame, lambda0, l)?))
}

/// Analytic `J_v`, `J_ω` and `J_F` against central differences.
pub fn check_jacobians(
    chain: &KinematicChain<f64>,
    samples: usize,
    seed: u64,
) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let (q, mut setup) = random_state(chain, &mut rng)?;
        // off-axis fulcrum so the RCM error itself is non-trivial
        setup.fulcrum += Vector3::new(
            rng.random_range(-0.01..0.01),
            rng.random_range(-0.01..0.01),
            0.0,
        );
        let analytic = jacobians(chain, &q)?;
        let fd = finite_difference_jacobians(chain, &q, h)?;
        worst = worst.max((&analytic.linear - &fd.linear).amax());
        worst = worst.max((&analytic.angular - &fd.angular).amax());

        let frame = forward_kinematics(chain, &q)?;
        let j_f = rcm_jacobian(&frame, &analytic, &setup);
        for i in 0..chain.n() {
            let mut qp = q.as_vector().clone();
            let mut qm = q.as_vector().clone();
            qp[i] += h;
            qm[i] -= h;
            let ep = rcm_error(
                &forward_kinematics(chain, &JointConfig::from_vector(qp))?,
                &setup,
            );
            let em = rcm_error(
                &forward_kinematics(chain, &JointConfig::from_vector(qm))?,
                &setup,
            );
            let col = (ep.0 - em.0) / (2.0 * h);
            worst = worst.max((j_f.0.column(i) - col).amax());
        }
    }
    Ok(CheckOutcome {
        name: "jacobians vs finite diff",
        samples,
        worst,
        tolerance: 1e-6,
    })
}

/// Minimizer of the RCM QP by eliminating the tracking constraint through an
/// SVD null-space basis of `J_v`, then solving the reduced least squares.
pub fn null_space_oracle(
    j_v: &DMatrix<f64>,
    j_f: &DMatrix<f64>,
    tracking_target: &Vector3<f64>,
    rcm_target: &Vector2<f64>,
    epsilon: f64,
) -> Option<DVector<f64>> {
    let n = j_v.ncols();
    let svd = j_v.clone().svd(true, true);
    let rank = svd.rank(1e-12 * svd.singular_values.max());
    if rank < 3 {
        return None;
    }
    let t = DVector::from_column_slice(tracking_target.as_slice());
    let particular = svd.solve(&t, 1e-12).ok()?;
    // complete V by computing the full SVD of Jᵀ J, whose trailing vectors
    // span the null space
    let full = (j_v.transpose() * j_v).svd(true, false);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| full.singular_values[b].total_cmp(&full.singular_values[a]));
    let u = full.u?;
    let basis = DMatrix::from_columns(
        &order[3..]
            .iter()
            .map(|&k| u.column(k).into_owned())
            .collect::<Vec<_>>(),
    );

    // stack [J_F N; √ε I] z ≈ −[J_F u_p − b; √ε u_p]
    let k = basis.ncols();
    let se = epsilon.sqrt();
    let mut a = DMatrix::zeros(2 + n, k);
    a.view_mut((0, 0), (2, k)).copy_from(&(j_f * &basis));
    a.view_mut((2, 0), (n, k)).copy_from(&(&basis * se));
    let mut rhs = DVector::zeros(2 + n);
    let b = DVector::from_column_slice(rcm_target.as_slice());
    rhs.rows_mut(0, 2).copy_from(&(-(j_f * &particular - b)));
    rhs.rows_mut(2, n).copy_from(&(-&particular * se));
    let z = a.svd(true, true).solve(&rhs, 1e-14).ok()?;
    Some(particular + basis * z)
}

/// KKT solve against [`null_space_oracle`] and the tracking-constraint residual.
pub fn check_qp(chain: &KinematicChain<f64>, samples: usize, seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gains = TaskGains::default();
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let (q, setup) = random_state(chain, &mut rng)?;
        let frame = forward_kinematics(chain, &q)?;
        let jac = jacobians(chain, &q)?;
        let j_f = rcm_jacobian(&frame, &jac, &setup);
        let r_t = TrackingError(Vector3::from_fn(|_, _| rng.random_range(-0.01..0.01)));
        let r_f = RcmError(Vector2::from_fn(|_, _| rng.random_range(-0.005..0.005)));
        let Ok(cmd) = compute_command(&jac, &j_f, &r_t, &r_f, &gains, None) else {
            continue;
        };
        let j_v = DMatrix::from_iterator(3, chain.n(), jac.linear.iter().copied());
        let j_fd = DMatrix::from_iterator(2, chain.n(), j_f.0.iter().copied());
        let oracle = null_space_oracle(
            &j_v,
            &j_fd,
            &(-r_t.0 * gains.k_tracking),
            &(-r_f.0 * gains.k_rcm),
            gains.epsilon,
        );
        if let Some(u) = oracle {
            let rel = (&cmd.velocity - &u).norm() / u.norm().max(1e-300);
            worst = worst.max(rel);
        }
        let residual = (&jac.linear * &cmd.velocity + r_t.0 * gains.k_tracking).norm()
            / (r_t.0.norm() * gains.k_tracking).max(1.0);
        // scale so the residual bound 1e-9 maps onto the 1e-8 tolerance
        worst = worst.max(residual * 10.0);
    }
    Ok(CheckOutcome {
        name: "QP vs null-space oracle",
        samples,
        worst,
        tolerance: 1e-8,
    })
}

/// `r_F = (x_Tᵀ r_F2, y_Tᵀ r_F2)` for random states.
pub fn check_projection_identity(
    chain: &KinematicChain<f64>,
    samples: usize,
    seed: u64,
) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let q = random_config(chain, &mut rng);
        let frame = forward_kinematics(chain, &q)?;
        let setup = RcmSetup {
            fulcrum: frame.origin + Vector3::from_fn(|_, _| rng.random_range(-0.3..0.3)),
            lambda0: 0.1 * chain.tool_length(),
            tool_length: chain.tool_length(),
        };
        let r2 = projection_error(&frame, &setup);
        let r = rcm_error(&frame, &setup);
        worst = worst.max((frame.x_axis.dot(&r2) - r.0.x).abs());
        worst = worst.max((frame.y_axis.dot(&r2) - r.0.y).abs());
    }
    Ok(CheckOutcome {
        name: "r_F / projection identity",
        samples,
        worst,
        tolerance: 1e-12,
    })
}

/// `‖q̇_min‖ = sqrt(vᵀ M v)` against the SVD pseudoinverse of `[J_v; J_F]`.
pub fn check_manipulability(
    chain: &KinematicChain<f64>,
    samples: usize,
    seed: u64,
) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut used = 0;
    for _ in 0..samples {
        let (q, setup) = random_state(chain, &mut rng)?;
        let frame = forward_kinematics(chain, &q)?;
        let jac = jacobians(chain, &q)?;
        let j_f = rcm_jacobian(&frame, &jac, &setup);
        let Ok(report) = rcm_manipulability(chain, &q, &setup.fulcrum) else {
            continue;
        };
        let v = Vector3::from_fn(|_, _| rng.random_range(-0.05..0.05));
        let j = stacked_jacobian(&jac, &j_f)?;
        let Ok(pinv) = j.pseudo_inverse(1e-12) else {
            continue;
        };
        let oracle = pinv * DVector::from_column_slice(&[v.x, v.y, v.z, 0.0, 0.0]);
        let predicted = v.dot(&(report.matrix * v)).sqrt();
        worst = worst.max((oracle.norm() - predicted).abs());
        if let Ok(qd) = min_norm_velocity(&jac, &j_f, &v) {
            worst = worst.max((qd.norm() - oracle.norm()).abs());
        }
        used += 1;
    }
    Ok(CheckOutcome {
        name: "manipulability identity",
        samples: used,
        worst,
        tolerance: 1e-9,
    })
}

/// Depth-gradient by central differences.
fn depth_gradient(
    chain: &KinematicChain<f64>,
    q: &JointConfig<f64>,
    setup: &RcmSetup<f64>,
    h: f64,
) -> Result<DVector<f64>> {
    let mut g = DVector::zeros(chain.n());
    for i in 0..chain.n() {
        let mut qp = q.as_vector().clone();
        let mut qm = q.as_vector().clone();
        qp[i] += h;
        qm[i] -= h;
        let lp = insertion_depth(
            &forward_kinematics(chain, &JointConfig::from_vector(qp))?,
            setup,
        );
        let lm = insertion_depth(
            &forward_kinematics(chain, &JointConfig::from_vector(qm))?,
            setup,
        );
        g[i] = (lp - lm) / (2.0 * h);
    }
    Ok(g)
}

/// Ratio of tool-base to tip displacement under small depth- and
/// RCM-preserving joint motions, relative to the insertion ratio.
pub fn insertion_ratio_law_error(
    chain: &KinematicChain<f64>,
    q: &JointConfig<f64>,
    setup: &RcmSetup<f64>,
    direction: &DVector<f64>,
    step: f64,
) -> Result<f64> {
    let frame = forward_kinematics(chain, q)?;
    let jac = jacobians(chain, q)?;
    let j_f = rcm_jacobian(&frame, &jac, setup);
    let grad = depth_gradient(chain, q, setup, 1e-6)?;
    let n = chain.n();
    let mut a = DMatrix::zeros(3, n);
    a.view_mut((0, 0), (2, n)).copy_from(&j_f.0);
    a.set_row(2, &grad.transpose());
    let projector = DMatrix::identity(n, n) - a.clone().pseudo_inverse(1e-12).expect("svd") * a;
    let mut dq = projector * (jac.linear.transpose() * (&jac.linear * direction));
    dq *= step / dq.norm();
    let moved = JointConfig::from_vector(q.as_vector() + &dq);
    let after = forward_kinematics(chain, &moved)?;
    let l = chain.tool_length();
    let dp_t = (after.origin - frame.origin).norm();
    let dp_e = (tool_base(&after, l) - tool_base(&frame, l)).norm();
    let rho = insertion_ratio(&frame, setup)?;
    Ok(((dp_e / dp_t) - rho).abs() / rho)
}

pub fn check_insertion_ratio_law(
    chain: &KinematicChain<f64>,
    samples: usize,
    seed: u64,
) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let (q, setup) = random_state(chain, &mut rng)?;
        let dir = DVector::from_fn(chain.n(), |_, _| rng.random_range(-1.0..1.0));
        worst = worst.max(insertion_ratio_law_error(chain, &q, &setup, &dir, 1e-4)?);
    }
    Ok(CheckOutcome {
        name: "insertion ratio law",
        samples,
        worst,
        tolerance: 0.01,
    })
}

/// All checks with `samples` random draws each.
pub fn run_all(
    chain: &KinematicChain<f64>,
    samples: usize,
    seed: u64,
) -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        check_jacobians(chain, samples, seed)?,
        check_qp(chain, samples, seed.wrapping_add(1))?,
        check_projection_identity(chain, samples, seed.wrapping_add(2))?,
        check_manipulability(chain, samples, seed.wrapping_add(3))?,
        check_insertion_ratio_law(chain, samples, seed.wrapping_add(4))?,
    ])
}
