//! `rcmsim`: simulate, compare and verify RCM-constrained tool-tip tracking.
//!
//! Exit codes: 0 on success, 1 for bad input or configuration, 2 when a run
//! hits a singularity, a degenerate insertion, a failed search or a failed
//! self-check.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use serde_json::{json, Value};

use rcm_core::anneal::evaluate_candidate;
use rcm_core::config::FileConfig;
use rcm_core::sim::{write_csv, SimSummary};
use rcm_core::{
    anneal_start_config, compare_insertion_ratios, forward_kinematics, run_simulation, verify,
    Error, SimRecord,
};

#[derive(Parser)]
#[command(
    name = "rcmsim",
    version,
    about = "Tool-tip tracking under a remote-center-of-motion constraint"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop simulation, write the CSV log and print a JSON summary.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// CSV destination; defaults to the config's `output` or `simulation.csv`.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Nominal insertion depth in meters.
        #[arg(long)]
        lambda0: Option<f64>,
        /// Enables simulated tracker noise with this 3D RMS, meters.
        #[arg(long)]
        noise_rms: Option<f64>,
        /// Noise seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Add the reference velocity to the tracking task.
        #[arg(long)]
        feedforward: bool,
    },
    /// Run two simulations that differ only in the insertion depth.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        lambda0_a: f64,
        #[arg(long)]
        lambda0_b: f64,
        /// Directory for `run_a.csv` and `run_b.csv`; logs are skipped when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Search for a start configuration with good RCM manipulability.
    OptimizeStart {
        #[arg(long)]
        config: PathBuf,
        /// Iterations per restart.
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Verify Jacobians, the QP solver and the kinematic identities on random samples.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Input(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_runtime() {
            Failure::Runtime(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(out) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&out).expect("JSON values always serialize")
            );
            ExitCode::SUCCESS
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<Value, Failure> {
    match command {
        Command::Simulate {
            config,
            output,
            duration,
            lambda0,
            noise_rms,
            seed,
            feedforward,
        } => {
            let mut file = FileConfig::load(&config)?;
            if let Some(d) = duration {
                file.duration = d;
            }
            if let Some(l) = lambda0 {
                file.lambda0 = l;
            }
            if let Some(rms) = noise_rms {
                file.noise.enabled = true;
                file.noise.rms = rms;
            }
            if let Some(s) = seed {
                file.noise.seed = s;
            }
            file.feedforward |= feedforward;
            let output = output
                .or_else(|| file.output.clone())
                .unwrap_or_else(|| PathBuf::from("simulation.csv"));

            let sim = file.sim_config::<f64>()?;
            let (records, summary) = run_simulation(&sim)?;
            save_csv(&output, sim.chain.n(), &records)?;
            Ok(json!({
                "output": output,
                "lambda0": sim.lambda0,
                "feedforward": sim.control.feedforward,
                "noise_rms": sim.noise.map(|n| n.rms),
                "q0_deg": records.first().map(|r| r.q.to_degrees()),
                "summary": summary_json(&summary),
            }))
        }
        Command::Compare {
            config,
            lambda0_a,
            lambda0_b,
            output,
        } => {
            let sim = FileConfig::load(&config)?.sim_config::<f64>()?;
            let (cmp, [records_a, records_b]) =
                compare_insertion_ratios(&sim, lambda0_a, lambda0_b)?;
            let mut written = Vec::new();
            if let Some(dir) = output {
                std::fs::create_dir_all(&dir)
                    .map_err(|e| Failure::Input(format!("cannot create {}: {e}", dir.display())))?;
                for (name, records) in [("run_a.csv", &records_a), ("run_b.csv", &records_b)] {
                    let path = dir.join(name);
                    save_csv(&path, sim.chain.n(), records)?;
                    written.push(path);
                }
            }
            Ok(json!({
                "a": { "lambda0": cmp.lambda0_a, "summary": summary_json(&cmp.summary_a) },
                "b": { "lambda0": cmp.lambda0_b, "summary": summary_json(&cmp.summary_b) },
                "rcm_error_percent_change": cmp.percent_change,
                "outputs": written,
            }))
        }
        Command::OptimizeStart {
            config,
            iterations,
            seed,
        } => {
            let mut file = FileConfig::load(&config)?;
            if let Some(it) = iterations {
                file.anneal.iterations = it;
            }
            if let Some(s) = seed {
                file.anneal.seed = s;
            }
            let chain = file.chain::<f64>()?;
            let problem = file.start_problem::<f64>()?;
            let report = anneal_start_config(&chain, &problem)?;
            let frame = forward_kinematics(&chain, &report.q0)?;
            let cand = evaluate_candidate(&chain, &problem, &report.q0)?;
            Ok(json!({
                "q0_deg": report.q0.to_degrees(),
                "tip": frame.origin.as_slice(),
                "tool_axis": frame.z_axis.as_slice(),
                "fulcrum": report.fulcrum.as_slice(),
                "spectral_radius": report.spectral_radius,
                "constraints": {
                    "limit_excess_rad": cand.limit_excess,
                    "box_distance_m": cand.box_distance,
                    "downward_deficit": cand.downward_deficit,
                    "feasible": cand.feasible(),
                },
            }))
        }
        Command::Check {
            config,
            samples,
            seed,
        } => {
            let chain = FileConfig::load(&config)?.chain::<f64>()?;
            let outcomes = verify::run_all(&chain, samples, seed)?;
            for o in &outcomes {
                eprintln!("{o}");
            }
            let results: Vec<Value> = outcomes
                .iter()
                .map(|o| {
                    json!({
                        "name": o.name,
                        "passed": o.passed(),
                        "worst": o.worst,
                        "tolerance": o.tolerance,
                        "samples": o.samples,
                    })
                })
                .collect();
            if outcomes.iter().all(|o| o.passed()) {
                Ok(json!({ "passed": true, "checks": results }))
            } else {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&json!({ "passed": false, "checks": results }))
                        .unwrap()
                );
                Err(Failure::Runtime("one or more checks failed".into()))
            }
        }
    }
}

fn save_csv(path: &Path, n: usize, records: &[SimRecord<f64>]) -> Result<(), Failure> {
    let file = File::create(path)
        .map_err(|e| Failure::Input(format!("cannot create {}: {e}", path.display())))?;
    write_csv(BufWriter::new(file), n, records)?;
    info!("wrote {} records to {}", records.len(), path.display());
    Ok(())
}

fn summary_json(s: &SimSummary<f64>) -> Value {
    json!({
        "steps": s.steps,
        "duration": s.duration,
        "window_start": s.window_start,
        "limit_violations": s.limit_violations,
        "window": s.stats.map(|w| json!({
            "samples": w.samples,
            "mean_tracking_error": w.mean_tracking_error,
            "max_tracking_error": w.max_tracking_error,
            "mean_rcm_error": w.mean_rcm_error,
            "max_rcm_error": w.max_rcm_error,
            "mean_insertion_ratio": w.mean_insertion_ratio,
        })),
    })
}
