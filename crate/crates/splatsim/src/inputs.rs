//! JSON input files: waypoint lists and synthetic scene descriptions.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use splatsim_core::flatness::Waypoint;
use splatsim_core::splat::{Primitive, SceneSpec};
use splatsim_core::Vec3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InputError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, InputError> {
    let text = fs::read_to_string(path).map_err(|source| InputError::Io { path: path.display().to_string(), source })?;
    serde_json::from_str(&text).map_err(|source| InputError::Json { path: path.display().to_string(), source })
}

/// `{"p": [x, y, z], "yaw": rad, "t": s}`; yaw defaults to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointRecord {
    pub p: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
    pub t: f64,
}

impl From<WaypointRecord> for Waypoint {
    fn from(w: WaypointRecord) -> Self {
        Waypoint::new(Vec3::from(w.p), w.yaw, w.t)
    }
}

impl From<&Waypoint> for WaypointRecord {
    fn from(w: &Waypoint) -> Self {
        Self { p: w.position.into(), yaw: w.yaw, t: w.time }
    }
}

pub fn parse_waypoints(text: &str) -> Result<Vec<Waypoint>, serde_json::Error> {
    let records: Vec<WaypointRecord> = serde_json::from_str(text)?;
    Ok(records.into_iter().map(Waypoint::from).collect())
}

pub fn load_waypoints(path: &Path) -> Result<Vec<Waypoint>, InputError> {
    let records: Vec<WaypointRecord> = read_json(path)?;
    Ok(records.into_iter().map(Waypoint::from).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum PrimitiveRecord {
    Box { center: [f64; 3], half_extents: [f64; 3], color: [f64; 3] },
    Sphere { center: [f64; 3], radius: f64, color: [f64; 3] },
    Plane { center: [f64; 3], u: [f64; 3], v: [f64; 3], color: [f64; 3] },
}

impl From<&PrimitiveRecord> for Primitive {
    fn from(p: &PrimitiveRecord) -> Self {
        match *p {
            PrimitiveRecord::Box { center, half_extents, color } => {
                Primitive::Box { center: center.into(), half_extents: half_extents.into(), color }
            }
            PrimitiveRecord::Sphere { center, radius, color } => Primitive::Sphere { center: center.into(), radius, color },
            PrimitiveRecord::Plane { center, u, v, color } => {
                Primitive::Plane { center: center.into(), u: u.into(), v: v.into(), color }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpecRecord {
    pub density: f64,
    pub opacity: f64,
    #[serde(default)]
    pub background: [f64; 3],
    pub primitives: Vec<PrimitiveRecord>,
}

impl SceneSpecRecord {
    pub fn to_spec(&self) -> SceneSpec {
        SceneSpec {
            primitives: self.primitives.iter().map(Primitive::from).collect(),
            density: self.density,
            opacity: self.opacity,
            background: self.background,
        }
    }
}

pub fn load_scene_spec(path: &Path) -> Result<SceneSpec, InputError> {
    read_json::<SceneSpecRecord>(path).map(|r| r.to_spec())
}

/// Small indoor course around the origin (z down, floor at z = 0): floor,
/// back wall, two pillars, a box and a ball.
pub fn demo_scene_spec() -> SceneSpecRecord {
    use PrimitiveRecord::*;
    SceneSpecRecord {
        density: 150.0,
        opacity: 0.95,
        background: [0.55, 0.7, 0.9],
        primitives: vec![
            Plane { center: [0.0, 0.0, 0.0], u: [6.0, 0.0, 0.0], v: [0.0, 4.0, 0.0], color: [0.35, 0.4, 0.3] },
            Plane { center: [6.0, 0.0, -1.5], u: [0.0, 4.0, 0.0], v: [0.0, 0.0, 1.5], color: [0.8, 0.75, 0.65] },
            Box { center: [0.0, 2.6, -1.25], half_extents: [0.2, 0.2, 1.25], color: [0.8, 0.2, 0.15] },
            Box { center: [0.0, -2.6, -1.25], half_extents: [0.2, 0.2, 1.25], color: [0.15, 0.3, 0.8] },
            Box { center: [4.2, 1.5, -0.4], half_extents: [0.4, 0.4, 0.4], color: [0.9, 0.7, 0.1] },
            Sphere { center: [-4.2, -1.2, -1.5], radius: 0.35, color: [0.2, 0.75, 0.3] },
        ],
    }
}
