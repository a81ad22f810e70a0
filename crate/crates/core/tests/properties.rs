mod common;

use nalgebra::{DMatrix, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rcm_core::config::FileConfig;
use rcm_core::manipulability::{gram_inverse, stacked_jacobian};
use rcm_core::sim::{read_csv, write_csv, NoiseModel, DEFAULT_Q0_DEG};
use rcm_core::*;

fn chain() -> KinematicChain<f64> {
    KinematicChain::iiwa14(common::TOOL).unwrap()
}

fn in_limit_q() -> impl Strategy<Value = Vec<f64>> {
    common::limits()
        .into_iter()
        .map(|(lo, hi)| lo..=hi)
        .collect::<Vec<_>>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn tool_frame_is_orthonormal(q in in_limit_q()) {
        let frame = forward_kinematics(&chain(), &JointConfig::new(q)).unwrap();
        prop_assert!(frame.orthonormality_error() < 1e-12);
        prop_assert!((frame.rotation().determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rcm_error_vanishes_on_the_tool_axis(q in in_limit_q(), depth in 0.01..0.39f64, off in -0.05..0.05f64) {
        let frame = forward_kinematics(&chain(), &JointConfig::new(q)).unwrap();
        let on_axis = RcmSetup::new(frame.origin - frame.z_axis * depth, depth, common::TOOL).unwrap();
        prop_assert!(rcm_error(&frame, &on_axis).norm() < 1e-14);
        prop_assert!((insertion_depth(&frame, &on_axis) - depth).abs() < 1e-14);

        let beside = RcmSetup { fulcrum: on_axis.fulcrum + frame.y_axis * off, ..on_axis };
        prop_assert!((rcm_error(&frame, &beside).norm() - off.abs()).abs() < 1e-14);
    }

    #[test]
    fn command_meets_tracking_constraint(q in in_limit_q(), dx in -0.02..0.02f64, dz in -0.02..0.02f64) {
        let chain = chain();
        let q = JointConfig::new(q);
        let frame = forward_kinematics(&chain, &q).unwrap();
        let jac = jacobians(&chain, &q).unwrap();
        let setup = RcmSetup::at_frame(&frame, 0.1, common::TOOL).unwrap();
        let jf = rcm_jacobian(&frame, &jac, &setup);
        let r_t = TrackingError(Vector3::new(dx, 0.0, dz));
        match compute_command(&jac, &jf, &r_t, &rcm_error(&frame, &setup), &TaskGains::default(), None) {
            Ok(cmd) => {
                let residual = &jac.linear * &cmd.velocity + r_t.0 * 14.0;
                prop_assert!(residual.amax() < 1e-9);
            }
            Err(e) => {
                let singular = matches!(e, Error::Singular { .. });
                prop_assert!(singular);
            }
        }
    }
}

#[test]
fn qp_solution_is_the_unique_minimizer() {
    let chain = chain();
    let q = JointConfig::from_degrees(&DEFAULT_Q0_DEG);
    let frame = forward_kinematics(&chain, &q).unwrap();
    let jac = jacobians(&chain, &q).unwrap();
    let mut setup = RcmSetup::at_frame(&frame, 0.1, common::TOOL).unwrap();
    setup.fulcrum += frame.x_axis * 0.003;
    let jf = rcm_jacobian(&frame, &jac, &setup);
    let gains = TaskGains::default();
    let r_t = TrackingError(Vector3::new(0.004, -0.002, 0.001));
    let r_f = rcm_error(&frame, &setup);
    let u = compute_command(&jac, &jf, &r_t, &r_f, &gains, None)
        .unwrap()
        .velocity;

    let cost = |v: &nalgebra::DVector<f64>| {
        (&jf.0 * v + r_f.0 * gains.k_rcm).norm_squared() + gains.epsilon * v.norm_squared()
    };
    let jv = DMatrix::from_column_slice(3, 7, jac.linear.as_slice());
    let projector = common::null_projector(&jv);
    let base = cost(&u);
    for k in 0..7 {
        let mut e = nalgebra::DVector::zeros(7);
        e[k] = 1.0;
        let dir = &projector * e;
        for s in [1e-4, -1e-4, 1e-2] {
            let moved = &u + &dir * s;
            assert!((&jac.linear * &moved - &jac.linear * &u).amax() < 1e-12);
            assert!(
                cost(&moved) > base,
                "feasible perturbation lowered the cost"
            );
        }
    }
}

#[test]
fn finite_difference_error_shrinks_quadratically() {
    let chain = chain();
    let q = JointConfig::from_degrees(&[10.0, 40.0, -20.0, -70.0, 30.0, 50.0, 0.0]);
    let exact = jacobians(&chain, &q).unwrap();
    let err = |h: f64| {
        let fd = finite_difference_jacobians(&chain, &q, h).unwrap();
        (&fd.linear - &exact.linear)
            .amax()
            .max((&fd.angular - &exact.angular).amax())
    };
    let (coarse, fine) = (err(1e-2), err(5e-3));
    let ratio = coarse / fine;
    assert!(
        (3.5..4.5).contains(&ratio),
        "halving the step changed the error by {ratio}"
    );
}

#[test]
fn manipulability_scales_with_arm_size() {
    let base = chain();
    let doubled_rows: Vec<DhRow<f64>> = base
        .rows()
        .iter()
        .map(|r| DhRow::new(2.0 * r.a, r.alpha, 2.0 * r.d, r.theta_offset))
        .collect();
    let mut tool = *base.tool();
    tool.translation.vector *= 2.0;
    let doubled = KinematicChain::new(
        doubled_rows,
        base.limits().to_vec(),
        tool,
        2.0 * base.tool_length(),
    )
    .unwrap();

    let q = JointConfig::from_degrees(&DEFAULT_Q0_DEG);
    let small = forward_kinematics(&base, &q).unwrap();
    let large = forward_kinematics(&doubled, &q).unwrap();
    let m_small =
        rcm_manipulability(&base, &q, &fulcrum_from_config(&small, 0.1, 0.4).unwrap()).unwrap();
    let m_large = rcm_manipulability(
        &doubled,
        &q,
        &fulcrum_from_config(&large, 0.2, 0.8).unwrap(),
    )
    .unwrap();
    let rel =
        (m_large.spectral_radius * 4.0 - m_small.spectral_radius).abs() / m_small.spectral_radius;
    assert!(rel < 1e-9, "spectral radius did not scale by 1/4: {rel}");
}

#[test]
fn manipulability_matrix_is_the_gram_inverse_block() {
    let chain = chain();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let q = JointConfig::new(common::random_q(&mut rng));
        let frame = forward_kinematics(&chain, &q).unwrap();
        let setup = RcmSetup::at_frame(&frame, 0.2, common::TOOL).unwrap();
        let Ok(report) = rcm_manipulability(&chain, &q, &setup.fulcrum) else {
            continue;
        };
        let jac = jacobians(&chain, &q).unwrap();
        let j = stacked_jacobian(&jac, &rcm_jacobian(&frame, &jac, &setup)).unwrap();
        let inv = gram_inverse(&j).unwrap();
        assert_eq!(report.matrix, inv.fixed_view::<3, 3>(0, 0).into_owned());

        // column k of the block solves (JJᵀ) x = e_k
        let gram = &j * j.transpose();
        let scale = inv.amax();
        for k in 0..3 {
            let mut e = nalgebra::DVector::zeros(5);
            e[k] = 1.0;
            let x = gram.clone().lu().solve(&e).unwrap();
            for i in 0..3 {
                assert!((x[i] - report.matrix[(i, k)]).abs() < 1e-8 * scale);
            }
        }
    }
}

#[test]
fn measurement_noise_has_requested_rms() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let p = Vector3::new(0.5, -0.1, 0.2);
    let n = 100_000;
    let sum_sq: f64 = (0..n)
        .map(|_| (inject_measurement_noise(&p, 0.0008, &mut rng) - p).norm_squared())
        .sum();
    let rms = (sum_sq / n as f64).sqrt();
    assert!((rms - 0.0008).abs() < 0.02 * 0.0008, "empirical rms {rms}");
}

fn short_config() -> SimConfig<f64> {
    let mut config = SimConfig::default_experiment();
    config.duration = 8.0;
    config
}

#[test]
fn noise_never_reaches_the_control_loop() {
    let clean = short_config();
    let mut noisy = clean.clone();
    noisy.noise = Some(NoiseModel {
        rms: 0.0008,
        seed: 42,
    });
    let (a, _) = run_simulation(&clean).unwrap();
    let (b, _) = run_simulation(&noisy).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert!(x.measured_tip.is_none() && y.measured_tip.is_some());
        assert_eq!(x.q.as_slice(), y.q.as_slice());
        assert_eq!(x.tracking_error.to_bits(), y.tracking_error.to_bits());
        assert_eq!(x.rcm_error.to_bits(), y.rcm_error.to_bits());
        assert_eq!(x.command_norm.to_bits(), y.command_norm.to_bits());
    }
}

#[test]
fn record_times_lie_on_the_grid() {
    let config = short_config();
    let (records, summary) = run_simulation(&config).unwrap();
    assert_eq!(records.len(), 2000);
    assert_eq!(summary.steps, 2000);
    for (k, r) in records.iter().enumerate() {
        assert_eq!(r.t, k as f64 / 250.0);
    }
}

#[test]
fn csv_round_trip_is_exact() {
    let mut config = short_config();
    config.noise = Some(NoiseModel {
        rms: 0.0008,
        seed: 1,
    });
    let (records, _) = run_simulation(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.csv");
    write_csv(std::fs::File::create(&path).unwrap(), 7, &records).unwrap();
    let parsed: Vec<SimRecord<f64>> = read_csv(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(parsed, records);
}

#[test]
fn default_config_file_matches_builtin_defaults() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    let file = FileConfig::load(&path).unwrap();
    assert_eq!(
        file.sim_config::<f64>().unwrap(),
        SimConfig::default_experiment()
    );
}

#[test]
fn single_precision_run() {
    // single precision cannot resolve a 1e-6 damping term against O(1)
    // Jacobian entries, so the run uses a larger one
    let mut config = SimConfig::<f32>::default_experiment();
    config.duration = 10.0;
    config.control.gains = TaskGains::new(14.0, 27.0, 1e-3).unwrap();
    let (records, summary) = run_simulation(&config).unwrap();
    assert_eq!(records.len(), 2500);
    let stats = summary.stats.unwrap();
    assert!(stats.mean_tracking_error < 3e-3, "{stats:?}");
    assert!(stats.mean_rcm_error < 1e-3, "{stats:?}");
    assert!(records.iter().all(|r| r.q.iter().all(|v| v.is_finite())));
}
