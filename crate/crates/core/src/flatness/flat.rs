//! Flat outputs (position, yaw and their derivatives) to drone state and
//! input.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::minsnap::PiecewisePoly;
use super::FlatnessError;
use crate::dynamics::{ControlInput, DroneParams, DroneState, GRAVITY};
use crate::geom::{Quat, Vec3};

pub const DEFAULT_CONTROL_RATE_HZ: f64 = 20.0;
/// Minimum specific-thrust magnitude as a fraction of gravity.
const FREE_FALL_MARGIN: f64 = 0.1;
/// `1 + n_z` below this is treated as inverted flight.
const INVERTED_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatOutput {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub jerk: Vec3,
    pub yaw: f64,
    pub yaw_rate: f64,
}

impl FlatOutput {
    pub fn hover(position: Vec3, yaw: f64) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
            acceleration: Vec3::zeros(),
            jerk: Vec3::zeros(),
            yaw,
            yaw_rate: 0.0,
        }
    }

    pub fn from_spline(spline: &PiecewisePoly, t: f64) -> Self {
        Self {
            position: spline.position(t, 0),
            velocity: spline.position(t, 1),
            acceleration: spline.position(t, 2),
            jerk: spline.position(t, 3),
            yaw: spline.yaw(t, 0),
            yaw_rate: spline.yaw(t, 1),
        }
    }
}

/// Invert the point-mass model: thrust direction from the acceleration,
/// attitude as tilt then yaw, body rates from jerk and yaw rate. `time` only
/// labels errors.
pub fn flat_outputs_to_state(
    flat: &FlatOutput,
    params: &DroneParams,
    time: f64,
) -> Result<(DroneState, ControlInput), FlatnessError> {
    let specific = Vec3::new(0.0, 0.0, GRAVITY) - flat.acceleration;
    let magnitude = specific.norm();
    if !(magnitude > FREE_FALL_MARGIN * GRAVITY) {
        return Err(FlatnessError::NearFreeFall(time));
    }
    let n = specific / magnitude;
    if 1.0 + n.z < INVERTED_MARGIN {
        return Err(FlatnessError::Inverted(time));
    }

    // minimal rotation taking e_z onto n
    let w = (0.5 * (1.0 + n.z)).sqrt();
    let tilt = Quat::new(-n.y / (2.0 * w), n.x / (2.0 * w), 0.0, w);
    let half = 0.5 * flat.yaw;
    let yaw_q = Quat::new(0.0, 0.0, half.sin(), half.cos());
    let orientation = tilt.multiply(&yaw_q).normalized();

    // time derivative of the tilt quaternion through n
    let specific_dot = -flat.jerk;
    let n_dot = (specific_dot - n * n.dot(&specific_dot)) / magnitude;
    let w_dot = n_dot.z / (4.0 * w);
    let tilt_dot = Quat::new(
        -n_dot.y / (2.0 * w) + n.y * w_dot / (2.0 * w * w),
        n_dot.x / (2.0 * w) - n.x * w_dot / (2.0 * w * w),
        0.0,
        w_dot,
    );
    let tilt_rate = tilt.conjugate().multiply(&tilt_dot).vector() * 2.0;
    let body_rate = yaw_q.conjugate().rotate(&tilt_rate) + Vec3::new(0.0, 0.0, flat.yaw_rate);

    let state = DroneState::new(flat.position, flat.velocity, orientation);
    let input = ControlInput::new(magnitude * params.m_dr / params.k_th, body_rate);
    Ok((state, input))
}

/// Desired states and inputs at a fixed control period.
#[derive(Debug, Clone, PartialEq)]
pub struct DesiredTrajectory {
    pub states: Vec<DroneState>,
    pub inputs: Vec<ControlInput>,
    pub dt: f64,
    pub params: DroneParams,
    pub start_time: f64,
}

impl DesiredTrajectory {
    /// Number of control steps.
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    pub fn duration(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    pub fn positions(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.states.iter().map(|s| s.position)
    }
}

/// Sample `spline` every `1/rate_hz` seconds. Produces
/// `round(duration·rate_hz) + 1` states; the last sample is clamped to the
/// spline end.
pub fn sample_trajectory(
    spline: &PiecewisePoly,
    rate_hz: f64,
    params: &DroneParams,
) -> Result<DesiredTrajectory, FlatnessError> {
    if !(rate_hz > 0.0) || !rate_hz.is_finite() {
        return Err(FlatnessError::InvalidRate(rate_hz));
    }
    let steps = (spline.duration() * rate_hz).round() as usize;
    let dt = 1.0 / rate_hz;
    let t0 = spline.start_time();
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = (t0 + k as f64 * dt).min(spline.end_time());
        let (x, u) = flat_outputs_to_state(&FlatOutput::from_spline(spline, t), params, t)?;
        states.push(x);
        inputs.push(u);
    }
    inputs.truncate(steps);
    Ok(DesiredTrajectory { states, inputs, dt, params: *params, start_time: t0 })
}
