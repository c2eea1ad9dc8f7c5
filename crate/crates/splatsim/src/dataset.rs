//! Domain-randomized demonstration datasets on disk.
//!
//! Layout under the output directory:
//!
//! ```text
//! manifest.json
//! rollouts/rollout_{i}_{j}/states.csv
//! images/rollout_{i}_{j}/frame_{k}.png
//! ```
//!
//! `i` is the trajectory sample the rollout starts from and `j` the sample
//! index at that step. The manifest lists rollouts in `(i, j)` order and
//! holds no timing or absolute paths, so equal inputs give equal bytes for
//! any worker count.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use splatsim_core::datagen::{simulate_rollout, trajectory_objective, RandomizationSpec, RolloutRecord};
use splatsim_core::expert::MpcConfig;
use splatsim_core::flatness::DesiredTrajectory;
use splatsim_core::splat::{render, SplatScene};
use splatsim_core::{CameraIntrinsics, ControlInput, RigidTransform};
use thiserror::Error;

use crate::config::{CameraSection, MountSection, RandomizationSection};
use crate::image_io::encode_png;
use crate::ply::encode_ply;
use crate::states_csv::{write_states_csv, CsvError, FlightLog};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid dataset request: {0}")]
    Invalid(String),
    #[error("writing {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("writing {path}: {source}")]
    Csv { path: String, source: CsvError },
    #[error(transparent)]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEcho {
    pub path: Option<String>,
    pub sha256: String,
    pub gaussians: usize,
}

impl SceneEcho {
    /// Hash of the file as stored.
    pub fn from_file(path: &Path, scene: &SplatScene) -> std::io::Result<Self> {
        let bytes = fs::read(path)?;
        Ok(Self { path: Some(path.display().to_string()), sha256: sha256_hex(&bytes), gaussians: scene.len() })
    }

    /// Hash of the scene's PLY encoding, for scenes built in memory.
    pub fn in_memory(scene: &SplatScene) -> Self {
        Self { path: None, sha256: sha256_hex(&encode_ply(scene)), gaussians: scene.len() }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcEcho {
    pub horizon: usize,
    pub control_rate_hz: f64,
    pub state_weight: Vec<[f64; 10]>,
    pub input_weight: Vec<[f64; 4]>,
    pub terminal_weight: Vec<[f64; 10]>,
    pub input_min: [f64; 4],
    pub input_max: [f64; 4],
    pub max_iterations: usize,
    pub tolerance: f64,
}

fn input_array(u: &ControlInput) -> [f64; 4] {
    [u.thrust, u.body_rate.x, u.body_rate.y, u.body_rate.z]
}

impl From<&MpcConfig> for MpcEcho {
    fn from(c: &MpcConfig) -> Self {
        Self {
            horizon: c.horizon,
            control_rate_hz: c.control_rate_hz,
            state_weight: c.state_weight.row_iter().map(|r| std::array::from_fn(|i| r[i])).collect(),
            input_weight: c.input_weight.row_iter().map(|r| std::array::from_fn(|i| r[i])).collect(),
            terminal_weight: c.terminal_weight.row_iter().map(|r| std::array::from_fn(|i| r[i])).collect(),
            input_min: input_array(&c.input_min),
            input_max: input_array(&c.input_max),
            max_iterations: c.max_iterations,
            tolerance: c.tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEcho {
    pub steps: usize,
    pub dt: f64,
    pub start_time: f64,
    pub k_th: f64,
    pub m_dr: f64,
    /// Displacement, initial/final velocity, initial/final orientation and
    /// duration.
    pub objective: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetCounts {
    pub origins: usize,
    pub samples_per_step: usize,
    pub expected_rollouts: usize,
    pub rollouts: usize,
    pub rejected: usize,
    pub state_action_pairs: usize,
    pub images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutEntry {
    pub origin: usize,
    pub sample: usize,
    pub k_th: f64,
    pub m_dr: f64,
    /// Relative to the dataset root.
    pub states: String,
    pub image_dir: Option<String>,
    pub steps: usize,
    pub objective: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedSample {
    pub origin: usize,
    pub sample: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub seed: u64,
    pub scene: SceneEcho,
    pub camera: CameraSection,
    pub mount: MountSection,
    pub randomization: RandomizationSection,
    pub mpc: MpcEcho,
    pub trajectory: TrajectoryEcho,
    pub images: bool,
    pub counts: DatasetCounts,
    pub rollouts: Vec<RolloutEntry>,
    pub rejected: Vec<RejectedSample>,
}

/// Everything [`generate_dataset`] needs besides the scene and trajectory.
#[derive(Debug, Clone)]
pub struct DatasetRequest {
    pub spec: RandomizationSpec,
    pub mpc: MpcConfig,
    pub camera_to_body: RigidTransform,
    pub intrinsics: CameraIntrinsics,
    pub output_dir: PathBuf,
    pub render_images: bool,
    /// 0 uses every logical core.
    pub workers: usize,
}

#[derive(Debug, Clone)]
pub struct DatasetSummary {
    pub manifest: DatasetManifest,
    pub manifest_path: PathBuf,
    pub elapsed: Duration,
}

impl DatasetSummary {
    pub fn rollouts_per_second(&self) -> f64 {
        self.manifest.counts.expected_rollouts as f64 / self.elapsed.as_secs_f64()
    }

    pub fn pairs_per_second(&self) -> f64 {
        self.manifest.counts.state_action_pairs as f64 / self.elapsed.as_secs_f64()
    }
}

fn rollout_name(origin: usize, sample: usize) -> String {
    format!("rollout_{origin}_{sample}")
}

/// Paths of one rollout relative to the dataset root.
pub fn states_path(origin: usize, sample: usize) -> String {
    format!("rollouts/{}/states.csv", rollout_name(origin, sample))
}

pub fn image_dir(origin: usize, sample: usize) -> String {
    format!("images/{}", rollout_name(origin, sample))
}

fn persist(
    record: &RolloutRecord,
    scene: &SplatScene,
    req: &DatasetRequest,
) -> Result<RolloutEntry, DatasetError> {
    let (i, j) = (record.origin, record.sample);
    let rel_states = states_path(i, j);
    let states_file = req.output_dir.join(&rel_states);
    let dir = states_file.parent().expect("states path has a parent");
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let log = FlightLog {
        timestamps: record.timestamps.clone(),
        states: record.states.clone(),
        inputs: record.inputs.clone(),
        params: record.params,
    };
    let file = fs::File::create(&states_file).map_err(io_err(&states_file))?;
    write_states_csv(BufWriter::new(file), &log)
        .map_err(|source| DatasetError::Csv { path: states_file.display().to_string(), source })?;

    let image_rel = if req.render_images {
        let rel = image_dir(i, j);
        let dir = req.output_dir.join(&rel);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for (k, x) in record.states.iter().enumerate() {
            let image = render(scene, &x.pose(), &req.camera_to_body, &req.intrinsics);
            let path = dir.join(format!("frame_{k}.png"));
            fs::write(&path, encode_png(&image)).map_err(io_err(&path))?;
        }
        Some(rel)
    } else {
        None
    };
    let objective = record
        .objective()
        .map_err(|e| DatasetError::Invalid(format!("rollout {i}/{j}: {e}")))?
        .to_array()
        .to_vec();
    Ok(RolloutEntry {
        origin: i,
        sample: j,
        k_th: record.params.k_th,
        m_dr: record.params.m_dr,
        states: rel_states,
        image_dir: image_rel,
        steps: record.inputs.len(),
        objective,
    })
}

/// Seed, fly, render and persist `N_s` rollouts from each of the
/// trajectory's `N_d` control steps, then write `manifest.json`. Expert
/// failures become rejected samples; IO failures abort.
pub fn generate_dataset(
    scene: &SplatScene,
    scene_echo: SceneEcho,
    traj: &DesiredTrajectory,
    req: &DatasetRequest,
) -> Result<DatasetSummary, DatasetError> {
    req.spec.validate().map_err(|e| DatasetError::Invalid(e.to_string()))?;
    req.mpc.validate().map_err(|e| DatasetError::Invalid(e.to_string()))?;
    req.intrinsics.validate().map_err(|e| DatasetError::Invalid(e.to_string()))?;
    if traj.steps() == 0 {
        return Err(DatasetError::Invalid("desired trajectory has no control steps".into()));
    }
    let started = Instant::now();
    fs::create_dir_all(&req.output_dir).map_err(io_err(&req.output_dir))?;

    let origins = traj.steps();
    let per_step = req.spec.samples_per_step;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(req.workers).build()?;
    let outcomes: Vec<Result<Result<RolloutEntry, RejectedSample>, DatasetError>> = pool.install(|| {
        (0..origins * per_step)
            .into_par_iter()
            .map(|n| {
                let (i, j) = (n / per_step, n % per_step);
                match simulate_rollout(traj, &req.spec, &req.mpc, i, j) {
                    Ok(record) => persist(&record, scene, req).map(Ok),
                    Err(e) => Ok(Err(RejectedSample { origin: i, sample: j, reason: e.to_string() })),
                }
            })
            .collect()
    });

    let mut rollouts = Vec::new();
    let mut rejected = Vec::new();
    for outcome in outcomes {
        match outcome? {
            Ok(entry) => rollouts.push(entry),
            Err(r) => rejected.push(r),
        }
    }
    let pairs: usize = rollouts.iter().map(|r| r.steps).sum();
    let images = if req.render_images { rollouts.iter().map(|r| r.steps + 1).sum() } else { 0 };
    let spec = &req.spec;
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        seed: spec.seed,
        scene: scene_echo,
        camera: CameraSection::from(&req.intrinsics),
        mount: MountSection::from(&req.camera_to_body),
        randomization: RandomizationSection::from(spec),
        mpc: MpcEcho::from(&req.mpc),
        trajectory: TrajectoryEcho {
            steps: traj.steps(),
            dt: traj.dt,
            start_time: traj.start_time,
            k_th: traj.params.k_th,
            m_dr: traj.params.m_dr,
            objective: trajectory_objective(traj)
                .map_err(|e| DatasetError::Invalid(e.to_string()))?
                .to_array()
                .to_vec(),
        },
        images: req.render_images,
        counts: DatasetCounts {
            origins,
            samples_per_step: per_step,
            expected_rollouts: origins * per_step,
            rollouts: rollouts.len(),
            rejected: rejected.len(),
            state_action_pairs: pairs,
            images,
        },
        rollouts,
        rejected,
    };
    let manifest_path = req.output_dir.join("manifest.json");
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    fs::write(&manifest_path, bytes).map_err(io_err(&manifest_path))?;
    Ok(DatasetSummary { manifest, manifest_path, elapsed: started.elapsed() })
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest, DatasetError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| DatasetError::Invalid(format!("{}: {e}", path.display())))
}
