//! TOML configuration files.
//!
//! Every key is optional; an empty file reproduces the default experiment
//! (iiwa 14, 0.4 m tool, λ₀ = 0.1 m, K_T = 14, K_F = 27, ε = 1e-6, 250 Hz,
//! 60 s helix from the default start configuration). Angles are in
//! degrees, everything else in SI units.
//!
//! ```toml
//! duration = 60.0
//! lambda0 = 0.1
//! frequency = 250.0
//! feedforward = false
//! output = "run.csv"
//! q0 = [35.5, 81.9, -92.2, -92.0, 82.1, 91.2, -72.0]   # or "anneal"
//!
//! [gains]
//! k_t = 14.0
//! k_f = 27.0
//! epsilon = 1e-6
//!
//! [noise]
//! enabled = true
//! rms = 0.0008
//! seed = 7
//!
//! [chain]
//! tool_length = 0.4
//! tool_position = [0.0, 0.0, 0.4]
//! tool_axis_angle = [0.0, 0.0, 0.0]   # rotation vector, radians
//! [[chain.joints]]
//! a = 0.0
//! alpha_deg = -90.0
//! d = 0.36
//! theta_offset_deg = 0.0
//! min_deg = -170.0
//! max_deg = 170.0
//! ```

use std::path::{Path, PathBuf};

use nalgebra::{Isometry3, Vector3};
use serde::Deserialize;

use crate::anneal::{AnnealParams, StartConfigProblem, WorkspaceBox};
use crate::controller::{ControlParams, TaskGains};
use crate::kinematics::{DhRow, JointConfig, JointLimit, KinematicChain};
use crate::sim::{NoiseModel, SimConfig, StartConfig, DEFAULT_Q0_DEG};
use crate::trajectory::HelixParams;
use crate::{lit, radians, Error, Real, Result};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub duration: f64,
    pub lambda0: f64,
    pub frequency: f64,
    pub feedforward: bool,
    pub output: Option<PathBuf>,
    pub q0: StartSpec,
    pub gains: GainsSection,
    pub helix: HelixSection,
    pub noise: NoiseSection,
    pub chain: Option<ChainSection>,
    pub anneal: AnnealSection,
}

impl Default for FileConfig {
    fn default() -> Self {
        Self {
            duration: 60.0,
            lambda0: 0.1,
            frequency: 250.0,
            feedforward: false,
            output: None,
            q0: StartSpec::Degrees(DEFAULT_Q0_DEG.to_vec()),
            gains: GainsSection::default(),
            helix: HelixSection::default(),
            noise: NoiseSection::default(),
            chain: None,
            anneal: AnnealSection::default(),
        }
    }
}

/// Explicit joint angles in degrees, or `"anneal"`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum StartSpec {
    Degrees(Vec<f64>),
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainsSection {
    pub k_t: f64,
    pub k_f: f64,
    pub epsilon: f64,
}

impl Default for GainsSection {
    fn default() -> Self {
        Self {
            k_t: 14.0,
            k_f: 27.0,
            epsilon: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HelixSection {
    pub radius_xy: f64,
    pub z_amplitude: f64,
    pub z_drop: f64,
    pub omega_xy: f64,
    pub omega_z: f64,
    pub ramp_time: f64,
}

impl Default for HelixSection {
    fn default() -> Self {
        Self {
            radius_xy: 0.03,
            z_amplitude: 0.06,
            z_drop: 0.04,
            omega_xy: std::f64::consts::PI / 5.0,
            omega_z: std::f64::consts::PI / 10.0,
            ramp_time: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub enabled: bool,
    pub rms: f64,
    pub seed: u64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            enabled: false,
            rms: 0.0008,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSection {
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub alpha_deg: f64,
    #[serde(default)]
    pub d: f64,
    #[serde(default)]
    pub theta_offset_deg: f64,
    pub min_deg: f64,
    pub max_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub tool_length: f64,
    pub tool_position: Option<[f64; 3]>,
    #[serde(default)]
    pub tool_axis_angle: [f64; 3],
    pub joints: Vec<JointSection>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealSection {
    pub lambda0: f64,
    pub center: [f64; 3],
    pub half_extent: f64,
    pub box_min: Option<[f64; 3]>,
    pub box_max: Option<[f64; 3]>,
    pub downward_threshold: f64,
    pub initial_temperature: f64,
    pub cooling: f64,
    pub iterations: usize,
    pub step_scale: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Degrees.
    pub initial: Option<Vec<f64>>,
}

impl Default for AnnealSection {
    fn default() -> Self {
        let p = AnnealParams::default();
        Self {
            lambda0: 0.1,
            center: [0.562, -0.095, -0.126],
            half_extent: 0.05,
            box_min: None,
            box_max: None,
            downward_threshold: 0.9,
            initial_temperature: p.initial_temperature,
            cooling: p.cooling,
            iterations: p.iterations,
            step_scale: p.step_scale,
            restarts: p.restarts,
            seed: p.seed,
            initial: None,
        }
    }
}

fn v3<T: Real>(a: [f64; 3]) -> Vector3<T> {
    Vector3::new(lit(a[0]), lit(a[1]), lit(a[2]))
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn chain<T: Real>(&self) -> Result<KinematicChain<T>> {
        let Some(section) = &self.chain else {
            return KinematicChain::iiwa14(lit(0.4));
        };
        let rows = section
            .joints
            .iter()
            .map(|j| {
                DhRow::new(
                    lit(j.a),
                    radians::<T>(j.alpha_deg),
                    lit(j.d),
                    radians::<T>(j.theta_offset_deg),
                )
            })
            .collect();
        let limits = section
            .joints
            .iter()
            .map(|j| JointLimit::new(radians::<T>(j.min_deg), radians::<T>(j.max_deg)))
            .collect();
        let position = section
            .tool_position
            .unwrap_or([0.0, 0.0, section.tool_length]);
        let tool = Isometry3::new(v3(position), v3(section.tool_axis_angle));
        KinematicChain::new(rows, limits, tool, lit(section.tool_length))
    }

    pub fn start_problem<T: Real>(&self) -> Result<StartConfigProblem<T>> {
        let a = &self.anneal;
        let workspace = match (a.box_min, a.box_max) {
            (Some(lo), Some(hi)) => WorkspaceBox::new(v3(lo), v3(hi))?,
            (None, None) => WorkspaceBox::around(v3(a.center), lit(a.half_extent)),
            _ => {
                return Err(Error::Config(
                    "anneal.box_min and anneal.box_max go together".into(),
                ))
            }
        };
        Ok(StartConfigProblem {
            workspace,
            downward_threshold: lit(a.downward_threshold),
            lambda0: lit(a.lambda0),
            anneal: AnnealParams {
                initial_temperature: a.initial_temperature,
                cooling: a.cooling,
                iterations: a.iterations,
                step_scale: a.step_scale,
                restarts: a.restarts,
                seed: a.seed,
            },
            initial: a.initial.as_deref().map(JointConfig::from_degrees),
        })
    }

    pub fn sim_config<T: Real>(&self) -> Result<SimConfig<T>> {
        let chain = self.chain::<T>()?;
        let start = match &self.q0 {
            StartSpec::Degrees(deg) => {
                let q = JointConfig::from_degrees(deg);
                chain.check_config(&q)?;
                StartConfig::Explicit(q)
            }
            StartSpec::Keyword(k) if k == "anneal" => StartConfig::Anneal(self.start_problem()?),
            StartSpec::Keyword(k) => {
                return Err(Error::Config(format!(
                    "q0 must be a list of angles in degrees or \"anneal\", got {k:?}"
                )))
            }
        };
        let h = &self.helix;
        let config = SimConfig {
            chain,
            control: ControlParams {
                gains: TaskGains::new(
                    lit(self.gains.k_t),
                    lit(self.gains.k_f),
                    lit(self.gains.epsilon),
                )?,
                frequency: lit(self.frequency),
                feedforward: self.feedforward,
            },
            lambda0: lit(self.lambda0),
            duration: lit(self.duration),
            helix: HelixParams {
                start: Vector3::zeros(),
                radius_xy: lit(h.radius_xy),
                z_amplitude: lit(h.z_amplitude),
                z_drop: lit(h.z_drop),
                omega_xy: lit(h.omega_xy),
                omega_z: lit(h.omega_z),
                ramp_time: lit(h.ramp_time),
            },
            noise: self.noise.enabled.then(|| NoiseModel {
                rms: lit(self.noise.rms),
                seed: self.noise.seed,
            }),
            start,
        };
        config.validate()?;
        Ok(config)
    }
}
