//! Domain-randomized demonstration rollouts, history features and
//! objective vectors. File IO and image rendering live in the std crate.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dynamics::{ControlInput, DroneParams, DroneState};
use crate::expert::{closed_loop_run, MpcConfig, MpcError};
use crate::flatness::DesiredTrajectory;
use crate::geom::{Quat, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatagenError {
    #[error("invalid randomization spec: {0}")]
    InvalidSpec(&'static str),
    #[error("timestamps must strictly increase (index {0})")]
    NonIncreasingTimestamps(usize),
    #[error("{states} states but {timestamps} timestamps")]
    LengthMismatch { states: usize, timestamps: usize },
    #[error("need at least two states, got {0}")]
    TooShort(usize),
    #[error("rollout origin {index} outside trajectory of {len} states")]
    OriginOutOfRange { index: usize, len: usize },
    #[error("expert failed: {0}")]
    Expert(#[from] MpcError),
}

/// Half-widths of the initial-state box around a trajectory sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatePerturbation {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Rotation angles about the body x, y and z axes, rad.
    pub orientation: Vec3,
}

impl StatePerturbation {
    pub const ZERO: StatePerturbation =
        StatePerturbation { position: Vec3::new(0.0, 0.0, 0.0), velocity: Vec3::new(0.0, 0.0, 0.0), orientation: Vec3::new(0.0, 0.0, 0.0) };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomizationSpec {
    pub params_min: DroneParams,
    pub params_max: DroneParams,
    pub perturbation: StatePerturbation,
    pub samples_per_step: usize,
    pub rollout_duration: f64,
    pub seed: u64,
}

impl Default for RandomizationSpec {
    fn default() -> Self {
        let nominal = DroneParams::default();
        Self {
            params_min: DroneParams::new(0.8 * nominal.k_th, 0.8 * nominal.m_dr),
            params_max: DroneParams::new(1.2 * nominal.k_th, 1.2 * nominal.m_dr),
            perturbation: StatePerturbation {
                position: Vec3::repeat(0.25),
                velocity: Vec3::repeat(0.25),
                orientation: Vec3::repeat(0.1),
            },
            samples_per_step: 5,
            rollout_duration: 1.0,
            seed: 0,
        }
    }
}

impl RandomizationSpec {
    pub fn validate(&self) -> Result<(), DatagenError> {
        let (lo, hi) = (self.params_min, self.params_max);
        if !lo.is_valid() || !hi.is_valid() {
            return Err(DatagenError::InvalidSpec("parameter bounds must be positive and finite"));
        }
        if lo.k_th > hi.k_th || lo.m_dr > hi.m_dr {
            return Err(DatagenError::InvalidSpec("parameter lower bound exceeds upper bound"));
        }
        let p = &self.perturbation;
        let mut widths = p.position.iter().chain(p.velocity.iter()).chain(p.orientation.iter());
        if !widths.all(|w| *w >= 0.0 && w.is_finite()) {
            return Err(DatagenError::InvalidSpec("perturbation half-widths must be non-negative"));
        }
        if self.samples_per_step == 0 {
            return Err(DatagenError::InvalidSpec("at least one sample per step is required"));
        }
        if !(self.rollout_duration > 0.0) || !self.rollout_duration.is_finite() {
            return Err(DatagenError::InvalidSpec("rollout duration must be positive"));
        }
        Ok(())
    }
}

/// Independent stream for rollout `(origin, sample)`: the ChaCha key packs
/// the three indices, so no two rollouts share a stream.
pub fn rollout_rng(seed: u64, origin: usize, sample: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(origin as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(sample as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// `lo + (hi − lo)·U[0, 1)`; exact `lo` for a degenerate interval.
fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.gen();
    lo + (hi - lo) * u
}

/// Draw randomized parameters and a perturbed initial state around
/// `nominal`. The orientation is perturbed by successive rotations about the
/// body x, y and z axes.
pub fn sample_rollout_seed(spec: &RandomizationSpec, nominal: &DroneState, rng: &mut ChaCha8Rng) -> (DroneParams, DroneState) {
    let params = DroneParams::new(
        uniform(rng, spec.params_min.k_th, spec.params_max.k_th),
        uniform(rng, spec.params_min.m_dr, spec.params_max.m_dr),
    );
    let p = &spec.perturbation;
    let mut x = *nominal;
    for i in 0..3 {
        x.position[i] += uniform(rng, -p.position[i], p.position[i]);
    }
    for i in 0..3 {
        x.velocity[i] += uniform(rng, -p.velocity[i], p.velocity[i]);
    }
    let angles = Vec3::from_fn(|i, _| uniform(rng, -p.orientation[i], p.orientation[i]));
    if angles.iter().any(|a| *a != 0.0) {
        let q = nominal
            .orientation
            .multiply(&Quat::from_axis_angle(Vec3::x(), angles.x))
            .multiply(&Quat::from_axis_angle(Vec3::y(), angles.y))
            .multiply(&Quat::from_axis_angle(Vec3::z(), angles.z));
        x.orientation = q.normalized();
    }
    (params, x)
}

/// One simulated demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutRecord {
    pub origin: usize,
    pub sample: usize,
    pub params: DroneParams,
    pub states: Vec<DroneState>,
    pub inputs: Vec<ControlInput>,
    pub timestamps: Vec<f64>,
}

impl RolloutRecord {
    pub fn objective(&self) -> Result<ObjectiveVector, DatagenError> {
        objective_vector(&self.states, &self.timestamps)
    }
}

/// Seed, then fly the expert from trajectory sample `origin` for the spec's
/// rollout duration. Timestamps are relative to the rollout start.
pub fn simulate_rollout(
    traj: &DesiredTrajectory,
    spec: &RandomizationSpec,
    config: &MpcConfig,
    origin: usize,
    sample: usize,
) -> Result<RolloutRecord, DatagenError> {
    spec.validate()?;
    let nominal = traj
        .states
        .get(origin)
        .ok_or(DatagenError::OriginOutOfRange { index: origin, len: traj.states.len() })?;
    let mut rng = rollout_rng(spec.seed, origin, sample);
    let (params, x0) = sample_rollout_seed(spec, nominal, &mut rng);
    let run = closed_loop_run(&x0, &params, traj, spec.rollout_duration, config, origin)?;
    let dt = config.dt();
    let timestamps = (0..run.states.len()).map(|k| k as f64 * dt).collect();
    Ok(RolloutRecord { origin, sample, params, states: run.states, inputs: run.inputs, timestamps })
}

/// Differences between consecutive steps, expressed as the policy sees them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryStep {
    pub dt: f64,
    /// `dt · v_k`
    pub position: Vec3,
    pub velocity: Vec3,
    /// `conj(q_k) ⊗ q_{k−1}`: maps body axes at `k−1` into body axes at `k`.
    pub rotation: Quat,
}

pub fn history_features(states: &[DroneState], timestamps: &[f64]) -> Result<Vec<HistoryStep>, DatagenError> {
    if states.len() != timestamps.len() {
        return Err(DatagenError::LengthMismatch { states: states.len(), timestamps: timestamps.len() });
    }
    states
        .windows(2)
        .zip(timestamps.windows(2))
        .enumerate()
        .map(|(k, (x, t))| {
            let dt = t[1] - t[0];
            if !(dt > 0.0) {
                return Err(DatagenError::NonIncreasingTimestamps(k + 1));
            }
            Ok(HistoryStep {
                dt,
                position: x[1].velocity * dt,
                velocity: x[1].velocity - x[0].velocity,
                rotation: x[1].orientation.conjugate().multiply(&x[0].orientation),
            })
        })
        .collect()
}

/// Endpoint summary of a trajectory segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveVector {
    pub displacement: Vec3,
    pub initial_velocity: Vec3,
    pub final_velocity: Vec3,
    pub initial_orientation: Quat,
    pub final_orientation: Quat,
    pub duration: f64,
}

impl ObjectiveVector {
    /// Flat layout: displacement, velocities, quaternions (x, y, z, w), time.
    pub fn to_array(&self) -> [f64; 18] {
        let mut out = [0.0; 18];
        out[0..3].copy_from_slice(self.displacement.as_slice());
        out[3..6].copy_from_slice(self.initial_velocity.as_slice());
        out[6..9].copy_from_slice(self.final_velocity.as_slice());
        out[9..13].copy_from_slice(&self.initial_orientation.to_array());
        out[13..17].copy_from_slice(&self.final_orientation.to_array());
        out[17] = self.duration;
        out
    }
}

pub fn objective_vector(states: &[DroneState], timestamps: &[f64]) -> Result<ObjectiveVector, DatagenError> {
    if states.len() != timestamps.len() {
        return Err(DatagenError::LengthMismatch { states: states.len(), timestamps: timestamps.len() });
    }
    if states.len() < 2 {
        return Err(DatagenError::TooShort(states.len()));
    }
    let (first, last) = (&states[0], &states[states.len() - 1]);
    Ok(ObjectiveVector {
        displacement: last.position - first.position,
        initial_velocity: first.velocity,
        final_velocity: last.velocity,
        initial_orientation: first.orientation,
        final_orientation: last.orientation,
        duration: timestamps[timestamps.len() - 1] - timestamps[0],
    })
}

/// Objective vector of a sampled desired trajectory.
pub fn trajectory_objective(traj: &DesiredTrajectory) -> Result<ObjectiveVector, DatagenError> {
    let timestamps: Vec<f64> = (0..traj.states.len()).map(|k| traj.start_time + k as f64 * traj.dt).collect();
    objective_vector(&traj.states, &timestamps)
}
