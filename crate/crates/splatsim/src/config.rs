//! Run configuration, read from TOML or JSON (by file extension). Every
//! field has a default, so an empty file is a valid configuration. Relative
//! paths are resolved against the working directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use splatsim_core::datagen::{RandomizationSpec, StatePerturbation};
use splatsim_core::expert::{MpcConfig, DEFAULT_INPUT_WEIGHTS, DEFAULT_STATE_WEIGHTS, DEFAULT_TERMINAL_SCALE};
use splatsim_core::splat::Similarity;
use splatsim_core::{CameraIntrinsics, ControlInput, DroneParams, Quat, RigidTransform, Vec3};
use thiserror::Error;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing {path}: {message}")]
    Parse { path: String, message: String },
    #[error("unsupported config version {0} (expected {CONFIG_VERSION})")]
    Version(u32),
    #[error("{field}: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("{field}: file {path} does not exist")]
    MissingFile { field: &'static str, path: String },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub version: u32,
    pub seed: u64,
    /// Worker threads; absent means every logical core.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub output_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub waypoints: Option<PathBuf>,
    pub control_rate_hz: f64,
    pub render_images: bool,
    pub scene: SceneSection,
    pub camera: CameraSection,
    pub mount: MountSection,
    pub drone: DroneSection,
    pub mpc: MpcSection,
    pub randomization: RandomizationSection,
    pub metrics: MetricsSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            workers: None,
            output_dir: PathBuf::from("out"),
            waypoints: None,
            control_rate_hz: 20.0,
            render_images: true,
            scene: SceneSection::default(),
            camera: CameraSection::default(),
            mount: MountSection::default(),
            drone: DroneSection::default(),
            mpc: MpcSection::default(),
            randomization: RandomizationSection::default(),
            metrics: MetricsSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    /// PLY file; absent means an empty scene.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub background: [f64; 3],
    pub alignment: AlignmentSection,
}

impl Default for SceneSection {
    fn default() -> Self {
        Self { path: None, background: [0.0; 3], alignment: AlignmentSection::default() }
    }
}

/// World-to-splat similarity `p_splat = scale·R·p_world + translation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentSection {
    pub scale: f64,
    /// Quaternion `[x, y, z, w]`.
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
}

impl Default for AlignmentSection {
    fn default() -> Self {
        Self { scale: 1.0, rotation: [0.0, 0.0, 0.0, 1.0], translation: [0.0; 3] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSection {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Default for CameraSection {
    fn default() -> Self {
        Self { width: 640, height: 360, fx: 320.0, fy: 320.0, cx: 320.0, cy: 180.0 }
    }
}

/// Camera pose in the body frame. The default rotation points the optical
/// axis along body x with image right along body y and image down along
/// body z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MountSection {
    pub translation: [f64; 3],
    /// Quaternion `[x, y, z, w]`.
    pub rotation: [f64; 4],
}

impl Default for MountSection {
    fn default() -> Self {
        Self { translation: [0.05, 0.0, 0.0], rotation: [0.5, 0.5, 0.5, 0.5] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DroneSection {
    pub k_th: f64,
    pub m_dr: f64,
}

impl Default for DroneSection {
    fn default() -> Self {
        let p = DroneParams::default();
        Self { k_th: p.k_th, m_dr: p.m_dr }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcSection {
    pub horizon: usize,
    pub state_weights: [f64; 10],
    pub input_weights: [f64; 4],
    pub terminal_scale: f64,
    /// `[thrust, wx, wy, wz]`.
    pub input_min: [f64; 4],
    pub input_max: [f64; 4],
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for MpcSection {
    fn default() -> Self {
        let c = MpcConfig::default();
        let arr = |u: ControlInput| [u.thrust, u.body_rate.x, u.body_rate.y, u.body_rate.z];
        Self {
            horizon: c.horizon,
            state_weights: DEFAULT_STATE_WEIGHTS,
            input_weights: DEFAULT_INPUT_WEIGHTS,
            terminal_scale: DEFAULT_TERMINAL_SCALE,
            input_min: arr(c.input_min),
            input_max: arr(c.input_max),
            max_iterations: c.max_iterations,
            tolerance: c.tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomizationSection {
    /// `[min, max]`.
    pub k_th: [f64; 2],
    pub m_dr: [f64; 2],
    /// Half-widths of the initial-state box.
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    /// Rotation half-widths about body x, y, z, rad.
    pub orientation: [f64; 3],
    pub samples_per_step: usize,
    pub rollout_duration: f64,
}

impl Default for RandomizationSection {
    fn default() -> Self {
        Self::from(&RandomizationSpec::default())
    }
}

impl From<&RandomizationSpec> for RandomizationSection {
    fn from(s: &RandomizationSpec) -> Self {
        let p = s.perturbation;
        Self {
            k_th: [s.params_min.k_th, s.params_max.k_th],
            m_dr: [s.params_min.m_dr, s.params_max.m_dr],
            position: p.position.into(),
            velocity: p.velocity.into(),
            orientation: p.orientation.into(),
            samples_per_step: s.samples_per_step,
            rollout_duration: s.rollout_duration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub proximity_radius: f64,
    pub drone_radius: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            proximity_radius: splatsim_core::analysis::DEFAULT_PROXIMITY_RADIUS,
            drone_radius: splatsim_core::analysis::DEFAULT_DRONE_RADIUS,
        }
    }
}

impl From<&CameraIntrinsics> for CameraSection {
    fn from(k: &CameraIntrinsics) -> Self {
        Self { width: k.width, height: k.height, fx: k.fx, fy: k.fy, cx: k.cx, cy: k.cy }
    }
}

impl From<&RigidTransform> for MountSection {
    fn from(t: &RigidTransform) -> Self {
        Self { translation: t.translation.into(), rotation: t.rotation.to_array() }
    }
}

fn quat(field: &'static str, q: [f64; 4]) -> Result<Quat, ConfigError> {
    let q = Quat::from_array(q);
    if !q.is_finite() || !(q.norm() > 1e-9) {
        return Err(invalid(field, "quaternion must be finite and non-zero"));
    }
    Ok(q.normalized())
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let parse_err = |message: String| ConfigError::Parse { path: path.display().to_string(), message };
        let config: Config = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?,
            _ => toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?,
        };
        if config.version != CONFIG_VERSION {
            return Err(ConfigError::Version(config.version));
        }
        Ok(config)
    }

    /// Check every numeric field and that referenced files exist.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != CONFIG_VERSION {
            return Err(ConfigError::Version(self.version));
        }
        if self.workers == Some(0) {
            return Err(invalid("workers", "must be at least 1"));
        }
        for (field, path) in [("scene.path", &self.scene.path), ("waypoints", &self.waypoints)] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(ConfigError::MissingFile { field, path: p.display().to_string() });
                }
            }
        }
        if !self.scene.background.iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(invalid("scene.background", "channels must be in [0, 1]"));
        }
        self.alignment()?;
        self.intrinsics()?;
        self.mount()?;
        if !self.params().is_valid() {
            return Err(invalid("drone", "k_th and m_dr must be positive"));
        }
        self.mpc_config()?.validate().map_err(|e| invalid("mpc", e.to_string()))?;
        self.randomization_spec()?.validate().map_err(|e| invalid("randomization", e.to_string()))?;
        let m = &self.metrics;
        if !(m.proximity_radius > 0.0) || !(m.drone_radius > 0.0) {
            return Err(invalid("metrics", "radii must be positive"));
        }
        Ok(())
    }

    pub fn alignment(&self) -> Result<Similarity, ConfigError> {
        let a = &self.scene.alignment;
        if !(a.scale > 0.0) || !a.scale.is_finite() {
            return Err(invalid("scene.alignment.scale", "must be positive"));
        }
        Ok(Similarity {
            scale: a.scale,
            rotation: quat("scene.alignment.rotation", a.rotation)?,
            translation: Vec3::from(a.translation),
        })
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics, ConfigError> {
        let c = &self.camera;
        CameraIntrinsics::new(c.fx, c.fy, c.cx, c.cy, c.width, c.height).map_err(|e| invalid("camera", e.to_string()))
    }

    pub fn mount(&self) -> Result<RigidTransform, ConfigError> {
        let t = Vec3::from(self.mount.translation);
        if !t.iter().all(|v| v.is_finite()) {
            return Err(invalid("mount.translation", "must be finite"));
        }
        Ok(RigidTransform::new(quat("mount.rotation", self.mount.rotation)?, t))
    }

    pub fn params(&self) -> DroneParams {
        DroneParams::new(self.drone.k_th, self.drone.m_dr)
    }

    pub fn mpc_config(&self) -> Result<MpcConfig, ConfigError> {
        if !(self.control_rate_hz > 0.0) || !self.control_rate_hz.is_finite() {
            return Err(invalid("control_rate_hz", "must be positive"));
        }
        let m = &self.mpc;
        if !(m.terminal_scale >= 0.0) {
            return Err(invalid("mpc.terminal_scale", "must be non-negative"));
        }
        if m.max_iterations == 0 || !(m.tolerance >= 0.0) {
            return Err(invalid("mpc", "max_iterations must be positive and tolerance non-negative"));
        }
        let input = |a: [f64; 4]| ControlInput::new(a[0], Vec3::new(a[1], a[2], a[3]));
        let config = MpcConfig {
            horizon: m.horizon,
            input_min: input(m.input_min),
            input_max: input(m.input_max),
            control_rate_hz: self.control_rate_hz,
            max_iterations: m.max_iterations,
            tolerance: m.tolerance,
            ..MpcConfig::default()
        }
        .with_diagonal_weights(m.state_weights, m.input_weights, m.terminal_scale);
        Ok(config)
    }

    pub fn randomization_spec(&self) -> Result<RandomizationSpec, ConfigError> {
        let r = &self.randomization;
        Ok(RandomizationSpec {
            params_min: DroneParams::new(r.k_th[0], r.m_dr[0]),
            params_max: DroneParams::new(r.k_th[1], r.m_dr[1]),
            perturbation: StatePerturbation {
                position: Vec3::from(r.position),
                velocity: Vec3::from(r.velocity),
                orientation: Vec3::from(r.orientation),
            },
            samples_per_step: r.samples_per_step,
            rollout_duration: r.rollout_duration,
            seed: self.seed,
        })
    }
}
