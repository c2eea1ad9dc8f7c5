//! Tracking and collision metrics, and the closed-form estimate of the
//! lumped thrust parameter under an external force.

use alloc::vec::Vec;

use nalgebra::Matrix3;
#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::dynamics::{DroneState, GRAVITY};
use crate::flatness::DesiredTrajectory;
use crate::geom::{Quat, Vec3};
use crate::splat::SplatScene;

pub const DEFAULT_PROXIMITY_RADIUS: f64 = 0.30;
pub const DEFAULT_DRONE_RADIUS: f64 = 0.15;
/// Gaussians below this opacity never count as obstacles.
pub const COLLISION_OPACITY: f64 = 0.5;
/// Collision ellipsoids extend this many standard deviations.
pub const COLLISION_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("thrust command must be positive, got {0}")]
    NonPositiveThrust(f64),
    #[error("drone radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("{0} path is empty")]
    EmptyPath(&'static str),
}

/// Least-squares estimate of the acceleration per thrust unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptationEstimate {
    pub c_hat: f64,
    /// `‖(ĉ − c)·f_th·z_B + f_add‖`
    pub residual: f64,
}

fn fit_residual(c: f64, c_hat: f64, thrust: f64, z_body: &Vec3, f_add: &Vec3) -> Vec3 {
    z_body * ((c_hat - c) * thrust) + f_add
}

/// Absorb the external acceleration `f_add` (world frame) into the thrust
/// coefficient: `ĉ = c − z_Bᵀ f_add / f_th`.
pub fn c_hat(c: f64, thrust: f64, orientation: &Quat, f_add: &Vec3) -> Result<AdaptationEstimate, AnalysisError> {
    if !(thrust > 0.0) {
        return Err(AnalysisError::NonPositiveThrust(thrust));
    }
    let z_body = orientation.normalized().rotate(&Vec3::z());
    let estimate = c - z_body.dot(f_add) / thrust;
    Ok(AdaptationEstimate { c_hat: estimate, residual: fit_residual(c, estimate, thrust, &z_body, f_add).norm() })
}

/// Same estimate by golden-section search on the squared residual over
/// `c ± 10g/f_th`.
pub fn c_hat_bruteforce(c: f64, thrust: f64, orientation: &Quat, f_add: &Vec3) -> Result<f64, AnalysisError> {
    if !(thrust > 0.0) {
        return Err(AnalysisError::NonPositiveThrust(thrust));
    }
    let z_body = orientation.normalized().rotate(&Vec3::z());
    let objective = |x: f64| fit_residual(c, x, thrust, &z_body, f_add).norm_squared();
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (c - 10.0 * GRAVITY / thrust, c + 10.0 * GRAVITY / thrust);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (objective(x1), objective(x2));
    while b - a > 1e-9 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = objective(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = objective(x2);
        }
    }
    Ok(0.5 * (a + b))
}

/// Distance from each flown sample to its nearest desired sample.
pub fn closest_distances(flown: &[DroneState], desired: &[DroneState]) -> Result<Vec<f64>, AnalysisError> {
    if flown.is_empty() {
        return Err(AnalysisError::EmptyPath("flown"));
    }
    if desired.is_empty() {
        return Err(AnalysisError::EmptyPath("desired"));
    }
    Ok(flown
        .iter()
        .map(|x| {
            desired
                .iter()
                .map(|d| (d.position - x.position).norm_squared())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect())
}

/// Trajectory tracking error: mean closest-point distance.
pub fn tte(flown: &[DroneState], traj: &DesiredTrajectory) -> Result<f64, AnalysisError> {
    let d = closest_distances(flown, &traj.states)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

/// Proximity percentile: fraction of flown samples within `radius` of the
/// desired path.
pub fn pp(flown: &[DroneState], traj: &DesiredTrajectory, radius: f64) -> Result<f64, AnalysisError> {
    let d = closest_distances(flown, &traj.states)?;
    Ok(d.iter().filter(|v| **v <= radius).count() as f64 / d.len() as f64)
}

pub fn path_length(states: &[DroneState]) -> f64 {
    states.windows(2).map(|w| (w[1].position - w[0].position).norm()).sum()
}

/// Inclusive range of consecutive in-collision steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollisionEvent {
    pub start_step: usize,
    pub end_step: usize,
}

/// Opaque Gaussians as inflated ellipsoids in the splat frame.
#[derive(Debug, Clone)]
pub struct CollisionModel {
    scene_alignment: crate::splat::Similarity,
    means: Vec<Vec3>,
    precisions: Vec<Matrix3<f64>>,
    /// Squared bounding radius of each ellipsoid.
    reach_sq: Vec<f64>,
}

impl CollisionModel {
    pub fn new(scene: &SplatScene, drone_radius: f64) -> Result<Self, AnalysisError> {
        if !(drone_radius > 0.0) {
            return Err(AnalysisError::NonPositiveRadius(drone_radius));
        }
        let inflation = (scene.alignment.scale * drone_radius).powi(2);
        let mut model = CollisionModel {
            scene_alignment: scene.alignment,
            means: Vec::new(),
            precisions: Vec::new(),
            reach_sq: Vec::new(),
        };
        for g in scene.gaussians.iter().filter(|g| g.opacity >= COLLISION_OPACITY) {
            let cov = g.covariance() + Matrix3::identity() * inflation;
            let Some(precision) = cov.try_inverse() else { continue };
            let largest = g.scale.amax().powi(2) + inflation;
            model.means.push(g.mean);
            model.precisions.push(precision);
            model.reach_sq.push(COLLISION_SIGMAS * COLLISION_SIGMAS * largest);
        }
        Ok(model)
    }

    pub fn obstacle_count(&self) -> usize {
        self.means.len()
    }

    /// World-frame point inside any inflated ellipsoid.
    pub fn in_collision(&self, p_world: &Vec3) -> bool {
        let p = self.scene_alignment.apply(p_world);
        let limit = COLLISION_SIGMAS * COLLISION_SIGMAS;
        self.means.iter().zip(&self.precisions).zip(&self.reach_sq).any(|((m, prec), reach)| {
            let d = p - m;
            d.norm_squared() <= *reach && (d.transpose() * prec * d)[(0, 0)] <= limit
        })
    }

    /// Runs of consecutive in-collision steps.
    pub fn events(&self, states: &[DroneState]) -> Vec<CollisionEvent> {
        let mut events: Vec<CollisionEvent> = Vec::new();
        let mut open: Option<usize> = None;
        for (k, x) in states.iter().enumerate() {
            match (self.in_collision(&x.position), open) {
                (true, None) => open = Some(k),
                (false, Some(s)) => {
                    events.push(CollisionEvent { start_step: s, end_step: k - 1 });
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(s) = open {
            events.push(CollisionEvent { start_step: s, end_step: states.len() - 1 });
        }
        events
    }
}

/// Collision events and the rate per meter; the rate is `None` for a path of
/// zero length.
pub fn collisions(
    states: &[DroneState],
    scene: &SplatScene,
    drone_radius: f64,
) -> Result<(Vec<CollisionEvent>, Option<f64>), AnalysisError> {
    let events = CollisionModel::new(scene, drone_radius)?.events(states);
    let length = path_length(states);
    let rate = if length > 0.0 { Some(events.len() as f64 / length) } else { None };
    Ok((events, rate))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub tte: f64,
    pub tte_max: f64,
    pub pp: f64,
    pub pp_radius: f64,
    pub collision_rate: Option<f64>,
    pub path_length: f64,
    pub collisions: Vec<CollisionEvent>,
}

pub fn evaluate_flight(
    flown: &[DroneState],
    traj: &DesiredTrajectory,
    scene: Option<&SplatScene>,
    pp_radius: f64,
    drone_radius: f64,
) -> Result<MetricsReport, AnalysisError> {
    let d = closest_distances(flown, &traj.states)?;
    let length = path_length(flown);
    let (events, rate) = match scene {
        Some(s) => collisions(flown, s, drone_radius)?,
        None => (Vec::new(), if length > 0.0 { Some(0.0) } else { None }),
    };
    Ok(MetricsReport {
        tte: d.iter().sum::<f64>() / d.len() as f64,
        tte_max: d.iter().copied().fold(0.0, f64::max),
        pp: d.iter().filter(|v| **v <= pp_radius).count() as f64 / d.len() as f64,
        pp_radius,
        collision_rate: rate,
        path_length: length,
        collisions: events,
    })
}
