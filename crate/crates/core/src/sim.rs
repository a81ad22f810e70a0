//! Closed-loop simulation of virtual joint-velocity control.
//!
//! A run is strictly sequential: record `k` describes the state at
//! `t = k / frequency`, the command computed there is Euler-integrated into
//! the next configuration. Measurement noise only feeds the logged
//! `measured_tip` channel and never reaches the controller.

use std::io::{Read, Write};

use log::info;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::anneal::{anneal_start_config, StartConfigProblem};
use crate::controller::{step, ControlParams};
use crate::kinematics::{forward_kinematics, JointConfig, KinematicChain};
use crate::rcm::RcmSetup;
use crate::trajectory::{HelixParams, Trajectory};
use crate::{lit, to_f64, Error, Real, Result};

/// One control step.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRecord<T: Real> {
    pub t: T,
    pub q: JointConfig<T>,
    pub tip: Vector3<T>,
    pub desired: Vector3<T>,
    /// `‖r_T‖`, meters.
    pub tracking_error: T,
    /// `‖r_F‖`, meters.
    pub rcm_error: T,
    pub insertion_depth: T,
    pub insertion_ratio: T,
    /// `‖u‖`, rad/s.
    pub command_norm: T,
    pub measured_tip: Option<Vector3<T>>,
}

/// Synthetic external tracker: isotropic Gaussian with 3D RMS `rms`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel<T> {
    pub rms: T,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StartConfig<T: Real> {
    Explicit(JointConfig<T>),
    Anneal(StartConfigProblem<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig<T: Real> {
    pub chain: KinematicChain<T>,
    pub control: ControlParams<T>,
    pub lambda0: T,
    pub duration: T,
    /// Helix shape; `start` is replaced by the tip position at `q0`.
    pub helix: HelixParams<T>,
    pub noise: Option<NoiseModel<T>>,
    pub start: StartConfig<T>,
}

impl<T: Real> SimConfig<T> {
    /// iiwa 14 with a 0.4 m tool, K_T = 14, K_F = 27, ε = 1e-6, 250 Hz,
    /// λ₀ = 0.1 m, 60 s of the default helix from the default start
    /// configuration, no noise.
    pub fn default_experiment() -> Self {
        Self {
            chain: KinematicChain::iiwa14(lit(0.4)).expect("built-in chain is valid"),
            control: ControlParams::default(),
            lambda0: lit(0.1),
            duration: lit(60.0),
            helix: HelixParams::suturing(Vector3::zeros()),
            noise: None,
            start: StartConfig::Explicit(JointConfig::from_degrees(&DEFAULT_Q0_DEG)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.control.frequency;
        if !(f > T::zero()) || !f.is_finite() {
            return Err(Error::InvalidInput("frequency must be positive".into()));
        }
        if !(self.duration >= T::zero()) || !self.duration.is_finite() {
            return Err(Error::InvalidInput("duration must be non-negative".into()));
        }
        if let Some(noise) = &self.noise {
            if !(noise.rms >= T::zero()) {
                return Err(Error::InvalidInput("noise rms must be non-negative".into()));
            }
        }
        crate::controller::TaskGains::new(
            self.control.gains.k_tracking,
            self.control.gains.k_rcm,
            self.control.gains.epsilon,
        )?;
        self.helix.validate()?;
        if !(self.lambda0 > T::zero() && self.lambda0 < self.chain.tool_length()) {
            return Err(Error::InvalidInput(format!(
                "lambda0 must lie in (0, {}), got {}",
                to_f64(self.chain.tool_length()),
                to_f64(self.lambda0)
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        to_f64(self.duration * self.control.frequency)
            .round()
            .max(0.0) as usize
    }

    /// Resolves the start configuration, annealing if requested.
    pub fn resolve_start(&self) -> Result<JointConfig<T>> {
        match &self.start {
            StartConfig::Explicit(q) => {
                self.chain.check_config(q)?;
                Ok(q.clone())
            }
            StartConfig::Anneal(problem) => Ok(anneal_start_config(&self.chain, problem)?.q0),
        }
    }
}

/// Start configuration of the default helix experiment, degrees.
pub const DEFAULT_Q0_DEG: [f64; 7] = [35.5, 81.9, -92.2, -92.0, 82.1, 91.2, -72.0];

/// Adds isotropic zero-mean Gaussian noise with per-axis deviation `rms/√3`.
pub fn inject_measurement_noise<T: Real, R: Rng + ?Sized>(
    p: &Vector3<T>,
    rms: T,
    rng: &mut R,
) -> Vector3<T> {
    if rms == T::zero() {
        return *p;
    }
    let sigma = to_f64(rms) / 3f64.sqrt();
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    Vector3::from_fn(|k, _| p[k] + lit::<T>(normal.sample(rng)))
}

/// Runs `steps` control cycles from `q0` against `reference`.
pub fn run_closed_loop<T: Real, Tr: Trajectory<T> + ?Sized>(
    chain: &KinematicChain<T>,
    setup: &RcmSetup<T>,
    params: &ControlParams<T>,
    q0: &JointConfig<T>,
    reference: &Tr,
    steps: usize,
    noise: Option<&NoiseModel<T>>,
) -> Result<Vec<SimRecord<T>>> {
    chain.check_config(q0)?;
    let mut rng = noise.map(|n| ChaCha8Rng::seed_from_u64(n.seed));
    let mut records = Vec::with_capacity(steps);
    let mut q = q0.clone();
    for k in 0..steps {
        let t = lit::<T>(k as f64) / params.frequency;
        let wrap = |e: Error, q: &JointConfig<T>| Error::Simulation {
            step: k,
            q: q.to_f64_vec(),
            source: Box::new(e),
        };
        let sample = reference.sample(t).map_err(|e| wrap(e, &q))?;
        let (next, mut record) =
            step(chain, setup, params, &q, t, &sample).map_err(|e| wrap(e, &q))?;
        if let (Some(model), Some(rng)) = (noise, rng.as_mut()) {
            record.measured_tip = Some(inject_measurement_noise(&record.tip, model.rms, rng));
        }
        records.push(record);
        q = next.q;
    }
    Ok(records)
}

/// Statistics over the steady-state window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowStats<T> {
    pub samples: usize,
    pub mean_tracking_error: T,
    pub max_tracking_error: T,
    pub mean_rcm_error: T,
    pub max_rcm_error: T,
    pub mean_insertion_ratio: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary<T> {
    pub steps: usize,
    pub duration: T,
    /// Records with `t >= window_start` enter the statistics.
    pub window_start: T,
    pub stats: Option<WindowStats<T>>,
    /// Logged configurations outside the joint limits.
    pub limit_violations: usize,
}

pub fn summarize<T: Real>(
    records: &[SimRecord<T>],
    chain: &KinematicChain<T>,
    window_start: T,
    duration: T,
) -> SimSummary<T> {
    let window: Vec<&SimRecord<T>> = records.iter().filter(|r| r.t >= window_start).collect();
    let stats = (!window.is_empty()).then(|| {
        let count = lit::<T>(window.len() as f64);
        let mut sum_t = T::zero();
        let mut sum_f = T::zero();
        let mut sum_rho = T::zero();
        let mut max_t = T::zero();
        let mut max_f = T::zero();
        for r in &window {
            sum_t += r.tracking_error;
            sum_f += r.rcm_error;
            sum_rho += r.insertion_ratio;
            max_t = max_t.max(r.tracking_error);
            max_f = max_f.max(r.rcm_error);
        }
        WindowStats {
            samples: window.len(),
            mean_tracking_error: sum_t / count,
            max_tracking_error: max_t,
            mean_rcm_error: sum_f / count,
            max_rcm_error: max_f,
            mean_insertion_ratio: sum_rho / count,
        }
    });
    SimSummary {
        steps: records.len(),
        duration,
        window_start,
        stats,
        limit_violations: records
            .iter()
            .filter(|r| !chain.within_limits(&r.q))
            .count(),
    }
}

/// Runs the configured experiment and summarizes the post-ramp window.
pub fn run_simulation<T: Real>(
    config: &SimConfig<T>,
) -> Result<(Vec<SimRecord<T>>, SimSummary<T>)> {
    config.validate()?;
    let q0 = config.resolve_start()?;
    let frame = forward_kinematics(&config.chain, &q0)?;
    let setup = RcmSetup::at_frame(&frame, config.lambda0, config.chain.tool_length())?;
    let helix = HelixParams {
        start: frame.origin,
        ..config.helix
    };
    let steps = config.steps();
    info!(
        "simulating {} steps at {} Hz, lambda0 = {} m",
        steps,
        to_f64(config.control.frequency),
        to_f64(config.lambda0)
    );
    let records = run_closed_loop(
        &config.chain,
        &setup,
        &config.control,
        &q0,
        &helix,
        steps,
        config.noise.as_ref(),
    )?;
    let summary = summarize(&records, &config.chain, helix.ramp_time, config.duration);
    Ok((records, summary))
}

/// Records of the two runs of a comparison, in argument order.
pub type RunPair<T> = [Vec<SimRecord<T>>; 2];

/// Two runs differing only in the nominal insertion depth.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison<T> {
    pub lambda0_a: T,
    pub lambda0_b: T,
    pub summary_a: SimSummary<T>,
    pub summary_b: SimSummary<T>,
    /// `(e_hi − e_lo) / e_hi × 100`, with `e` the mean RCM error and `hi` the
    /// run with the larger insertion ratio (smaller λ₀).
    pub percent_change: Option<T>,
}

pub fn compare_insertion_ratios<T: Real>(
    config: &SimConfig<T>,
    lambda0_a: T,
    lambda0_b: T,
) -> Result<(Comparison<T>, RunPair<T>)> {
    let with = |lambda0: T| SimConfig {
        lambda0,
        ..config.clone()
    };
    let (cfg_a, cfg_b) = (with(lambda0_a), with(lambda0_b));
    cfg_a.validate()?;
    cfg_b.validate()?;
    let (ra, rb) = std::thread::scope(|s| {
        let a = s.spawn(|| run_simulation(&cfg_a));
        let b = run_simulation(&cfg_b);
        (a.join().expect("simulation thread panicked"), b)
    });
    let (records_a, summary_a) = ra?;
    let (records_b, summary_b) = rb?;

    let percent_change = match (&summary_a.stats, &summary_b.stats) {
        (Some(a), Some(b)) => {
            let (hi, lo) = if lambda0_a <= lambda0_b {
                (a.mean_rcm_error, b.mean_rcm_error)
            } else {
                (b.mean_rcm_error, a.mean_rcm_error)
            };
            if hi == lo {
                Some(T::zero())
            } else {
                Some((hi - lo) / hi * lit(100.0))
            }
        }
        _ => None,
    };
    Ok((
        Comparison {
            lambda0_a,
            lambda0_b,
            summary_a,
            summary_b,
            percent_change,
        },
        [records_a, records_b],
    ))
}

/// Column names for a chain with `n` joints.
pub fn csv_header(n: usize, with_measured: bool) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n).map(|i| format!("q_{i}")));
    for prefix in ["pT", "pd"] {
        h.extend(["x", "y", "z"].iter().map(|a| format!("{prefix}_{a}")));
    }
    h.extend(["rT_norm", "rF_norm", "lambda", "rho", "u_norm"].map(String::from));
    if with_measured {
        h.extend(["pTm_x", "pTm_y", "pTm_z"].map(String::from));
    }
    h
}

fn fmt<T: Real>(v: T) -> String {
    format!("{:.16e}", to_f64(v))
}

/// Writes records as CSV with 17 significant digits. Measured columns are
/// present iff the first record carries a measurement.
pub fn write_csv<T: Real, W: Write>(writer: W, n: usize, records: &[SimRecord<T>]) -> Result<()> {
    let with_measured = records.first().is_some_and(|r| r.measured_tip.is_some());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(csv_header(n, with_measured))?;
    let mut row = Vec::new();
    for r in records {
        row.clear();
        row.push(fmt(r.t));
        row.extend(r.q.iter().map(|&v| fmt(v)));
        row.extend(r.tip.iter().map(|&v| fmt(v)));
        row.extend(r.desired.iter().map(|&v| fmt(v)));
        for v in [
            r.tracking_error,
            r.rcm_error,
            r.insertion_depth,
            r.insertion_ratio,
            r.command_norm,
        ] {
            row.push(fmt(v));
        }
        if with_measured {
            let m = r.measured_tip.ok_or_else(|| {
                Error::InvalidInput("measured channel missing on some records".into())
            })?;
            row.extend(m.iter().map(|&v| fmt(v)));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a log written by [`write_csv`].
pub fn read_csv<T: Real, R: Read>(reader: R) -> Result<Vec<SimRecord<T>>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    let n = header.iter().filter(|h| h.starts_with("q_")).count();
    let with_measured = header.iter().any(|h| h == "pTm_x");
    let expected = csv_header(n, with_measured);
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::InvalidInput("unexpected CSV header".into()));
    }
    let mut records = Vec::new();
    for row in r.records() {
        let row = row?;
        let vals = row
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map(lit::<T>)
                    .map_err(|e| Error::InvalidInput(format!("bad number {s:?}: {e}")))
            })
            .collect::<Result<Vec<T>>>()?;
        let v3 = |i: usize| Vector3::new(vals[i], vals[i + 1], vals[i + 2]);
        let base = 1 + n;
        records.push(SimRecord {
            t: vals[0],
            q: JointConfig::new(vals[1..base].to_vec()),
            tip: v3(base),
            desired: v3(base + 3),
            tracking_error: vals[base + 6],
            rcm_error: vals[base + 7],
            insertion_depth: vals[base + 8],
            insertion_ratio: vals[base + 9],
            command_norm: vals[base + 10],
            measured_tip: with_measured.then(|| v3(base + 11)),
        });
    }
    Ok(records)
}
