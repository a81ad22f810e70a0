//! Simulated-annealing search for a start configuration that minimizes the
//! spectral radius of the RCM-aware manipulability matrix.
//!
//! The fulcrum is tied to the candidate: `p_F = p_T(q) − λ₀ z_T(q)`. Each
//! violated constraint (joint limits, workspace box, tool pointing down, rank
//! loss) adds `PENALTY · (1 + violation)` to the objective, which keeps the
//! infeasible region sloped toward feasibility.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::kinematics::{forward_kinematics, JointConfig, KinematicChain};
use crate::manipulability::{rcm_manipulability, ManipulabilityReport};
use crate::rcm::fulcrum_from_config;
use crate::{lit, to_f64, Error, Real, Result};

pub const PENALTY: f64 = 1e6;

/// Axis-aligned box in world coordinates, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkspaceBox<T: Real> {
    pub min: Vector3<T>,
    pub max: Vector3<T>,
}

impl<T: Real> WorkspaceBox<T> {
    pub fn new(min: Vector3<T>, max: Vector3<T>) -> Result<Self> {
        if (0..3).all(|k| min[k] <= max[k]) && min.iter().chain(max.iter()).all(|v| v.is_finite()) {
            Ok(Self { min, max })
        } else {
            Err(Error::InvalidInput("workspace box is empty".into()))
        }
    }

    pub fn around(center: Vector3<T>, half_extent: T) -> Self {
        let h = Vector3::repeat(half_extent);
        Self {
            min: center - h,
            max: center + h,
        }
    }

    pub fn contains(&self, p: &Vector3<T>) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    /// Euclidean distance from `p` to the box, zero inside.
    pub fn distance(&self, p: &Vector3<T>) -> T {
        let gap = Vector3::from_fn(|k, _| {
            (self.min[k] - p[k]).max(T::zero()) + (p[k] - self.max[k]).max(T::zero())
        });
        gap.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealParams {
    pub initial_temperature: f64,
    /// Geometric cooling factor applied every iteration.
    pub cooling: f64,
    /// Iterations per restart.
    pub iterations: usize,
    /// Proposal standard deviation per joint at unit temperature, radians.
    pub step_scale: f64,
    /// Independent chains; the first starts from the initial guess, the rest
    /// from uniform draws inside the joint limits.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for AnnealParams {
    fn default() -> Self {
        Self {
            initial_temperature: 4.0,
            cooling: 0.995,
            iterations: 2000,
            step_scale: 0.05,
            restarts: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StartConfigProblem<T: Real> {
    pub workspace: WorkspaceBox<T>,
    /// Minimum of `z_T · (0, 0, −1)`.
    pub downward_threshold: T,
    pub lambda0: T,
    pub anneal: AnnealParams,
    /// Starting point of the first chain; joint-limit midpoints when absent.
    pub initial: Option<JointConfig<T>>,
}

impl<T: Real> StartConfigProblem<T> {
    pub fn new(workspace: WorkspaceBox<T>, lambda0: T) -> Self {
        Self {
            workspace,
            downward_threshold: lit(0.9),
            lambda0,
            anneal: AnnealParams::default(),
            initial: None,
        }
    }

    pub fn validate(&self, chain: &KinematicChain<T>) -> Result<()> {
        WorkspaceBox::new(self.workspace.min, self.workspace.max)?;
        if !(self.downward_threshold > T::zero() && self.downward_threshold <= T::one()) {
            return Err(Error::InvalidInput(format!(
                "downward threshold must lie in (0, 1], got {}",
                to_f64(self.downward_threshold)
            )));
        }
        if !(self.lambda0 > T::zero() && self.lambda0 < chain.tool_length()) {
            return Err(Error::InvalidInput("lambda0 must lie in (0, L)".into()));
        }
        let a = &self.anneal;
        if a.iterations == 0 || a.restarts == 0 {
            return Err(Error::InvalidInput(
                "annealing needs at least one iteration and one restart".into(),
            ));
        }
        if !(a.initial_temperature > 0.0)
            || !(a.cooling > 0.0 && a.cooling <= 1.0)
            || !(a.step_scale > 0.0)
        {
            return Err(Error::InvalidInput("invalid annealing schedule".into()));
        }
        if let Some(q) = &self.initial {
            chain.check_config(q)?;
        }
        Ok(())
    }
}

/// Constraint bookkeeping for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<T: Real> {
    pub objective: T,
    pub spectral_radius: Option<T>,
    pub limit_excess: T,
    pub box_distance: T,
    pub downward_deficit: T,
    pub fulcrum: Vector3<T>,
}

impl<T: Real> Candidate<T> {
    pub fn feasible(&self) -> bool {
        self.spectral_radius.is_some()
            && self.limit_excess == T::zero()
            && self.box_distance == T::zero()
            && self.downward_deficit == T::zero()
    }
}

pub fn evaluate_candidate<T: Real>(
    chain: &KinematicChain<T>,
    problem: &StartConfigProblem<T>,
    q: &JointConfig<T>,
) -> Result<Candidate<T>> {
    let frame = forward_kinematics(chain, q)?;
    let fulcrum = fulcrum_from_config(&frame, problem.lambda0, chain.tool_length())?;
    let limit_excess = chain.limit_excess(q);
    let box_distance = problem.workspace.distance(&frame.origin);
    let downward_deficit = (problem.downward_threshold + frame.z_axis.z).max(T::zero());
    let spectral_radius = rcm_manipulability(chain, q, &fulcrum)
        .ok()
        .map(|r| r.spectral_radius)
        .filter(|r| r.is_finite());

    let penalty: T = lit(PENALTY);
    let mut objective = spectral_radius.unwrap_or(penalty);
    for v in [limit_excess, box_distance, downward_deficit] {
        if v > T::zero() {
            objective += penalty * (T::one() + v);
        }
    }
    Ok(Candidate {
        objective,
        spectral_radius,
        limit_excess,
        box_distance,
        downward_deficit,
        fulcrum,
    })
}

pub fn anneal_start_config<T: Real>(
    chain: &KinematicChain<T>,
    problem: &StartConfigProblem<T>,
) -> Result<ManipulabilityReport<T>> {
    problem.validate(chain)?;
    let params = &problem.anneal;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = chain.n();

    let mut best: Option<(JointConfig<T>, Candidate<T>)> = None;
    let mut closest: Option<Candidate<T>> = None;

    for restart in 0..params.restarts {
        let start = match (restart, &problem.initial) {
            (0, Some(q)) => chain.clamp(q),
            (0, None) => chain.limit_midpoints(),
            _ => JointConfig::from_iterator(
                chain
                    .limits()
                    .iter()
                    .map(|l| lit::<T>(rng.random_range(to_f64(l.min)..=to_f64(l.max)))),
            ),
        };
        let mut current = start;
        let mut current_eval = evaluate_candidate(chain, problem, &current)?;
        let mut temperature = params.initial_temperature;

        for _ in 0..params.iterations {
            let sigma = params.step_scale * temperature;
            let proposal = chain.clamp(&JointConfig::from_iterator((0..n).map(|i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                current[i] + lit::<T>(z * sigma)
            })));
            let eval = evaluate_candidate(chain, problem, &proposal)?;
            let delta = to_f64(eval.objective - current_eval.objective);
            let u: f64 = rng.random();
            if delta <= 0.0 || u < (-delta / temperature).exp() {
                current = proposal;
                current_eval = eval;
                if current_eval.feasible()
                    && best
                        .as_ref()
                        .is_none_or(|(_, b)| current_eval.objective < b.objective)
                {
                    best = Some((current.clone(), current_eval.clone()));
                }
            }
            if closest
                .as_ref()
                .is_none_or(|c| current_eval.objective < c.objective)
            {
                closest = Some(current_eval.clone());
            }
            temperature *= params.cooling;
        }
    }

    match best {
        Some((q, cand)) => rcm_manipulability(chain, &q, &cand.fulcrum),
        None => {
            let diagnostics = closest.map_or_else(
                || "no candidate evaluated".to_string(),
                |c| {
                    format!(
                        "closest candidate: limit excess {:.4} rad, box distance {:.4} m, downward deficit {:.4}",
                        to_f64(c.limit_excess),
                        to_f64(c.box_distance),
                        to_f64(c.downward_deficit)
                    )
                },
            );
            Err(Error::SearchFailed {
                iterations: params.iterations * params.restarts,
                diagnostics,
            })
        }
    }
}
