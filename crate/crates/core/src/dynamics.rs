//! Ten-state thrust/body-rate quadrotor model and its RK4 integration.
//!
//! State `x = [p_W, v_W, q_BW]`, input `u = [f_th, ω_B]`, parameters
//! `θ = (k_th, m_dr)`:
//!
//! ```text
//! ṗ = v
//! v̇ = g·z_W − (k_th·f_th / m_dr)·z_B
//! q̇ = ½·q ⊗ (ω_B, 0)
//! ```
//!
//! Rotational dynamics are not modelled; body rates are commanded directly.

use alloc::vec::Vec;

use nalgebra::{SMatrix, SVector, Vector4};
#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::geom::{Pose, Quat, Vec3};

/// Gravitational acceleration, m/s².
pub const GRAVITY: f64 = 9.81;

pub const STATE_DIM: usize = 10;
pub const INPUT_DIM: usize = 4;

pub type StateVector = SVector<f64, STATE_DIM>;
pub type InputVector = SVector<f64, INPUT_DIM>;
pub type StateJacobian = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type InputJacobian = SMatrix<f64, STATE_DIM, INPUT_DIM>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("non-finite {0} passed to the dynamics")]
    NonFinite(&'static str),
    #[error("integration step must be positive, got {0}")]
    NonPositiveStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroneState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub orientation: Quat,
}

impl Default for DroneState {
    fn default() -> Self {
        Self { position: Vec3::zeros(), velocity: Vec3::zeros(), orientation: Quat::IDENTITY }
    }
}

impl DroneState {
    pub fn new(position: Vec3, velocity: Vec3, orientation: Quat) -> Self {
        Self { position, velocity, orientation }
    }

    pub fn at_rest(position: Vec3) -> Self {
        Self { position, ..Self::default() }
    }

    /// `[px, py, pz, vx, vy, vz, qx, qy, qz, qw]`
    pub fn to_vector(&self) -> StateVector {
        let (p, v, q) = (&self.position, &self.velocity, &self.orientation);
        StateVector::from_column_slice(&[p.x, p.y, p.z, v.x, v.y, v.z, q.x, q.y, q.z, q.w])
    }

    pub fn from_vector(x: &StateVector) -> Self {
        Self {
            position: Vec3::new(x[0], x[1], x[2]),
            velocity: Vec3::new(x[3], x[4], x[5]),
            orientation: Quat::new(x[6], x[7], x[8], x[9]),
        }
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.orientation, self.position)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|c| c.is_finite())
            && self.velocity.iter().all(|c| c.is_finite())
            && self.orientation.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    /// Normalized collective thrust command.
    pub thrust: f64,
    /// Body rates, rad/s.
    pub body_rate: Vec3,
}

impl ControlInput {
    pub fn new(thrust: f64, body_rate: Vec3) -> Self {
        Self { thrust, body_rate }
    }

    pub fn to_vector(&self) -> InputVector {
        InputVector::new(self.thrust, self.body_rate.x, self.body_rate.y, self.body_rate.z)
    }

    pub fn from_vector(u: &InputVector) -> Self {
        Self { thrust: u[0], body_rate: Vec3::new(u[1], u[2], u[3]) }
    }

    pub fn is_finite(&self) -> bool {
        self.thrust.is_finite() && self.body_rate.iter().all(|c| c.is_finite())
    }

    /// Componentwise clamp into `[lo, hi]`.
    pub fn clamped(&self, lo: &ControlInput, hi: &ControlInput) -> ControlInput {
        let (u, a, b) = (self.to_vector(), lo.to_vector(), hi.to_vector());
        ControlInput::from_vector(&u.zip_zip_map(&a, &b, |v, l, h| v.max(l).min(h)))
    }
}

/// Thrust coefficient and mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroneParams {
    pub k_th: f64,
    pub m_dr: f64,
}

impl Default for DroneParams {
    /// One-kilogram airframe with 6.03 m/s² of acceleration per thrust unit.
    fn default() -> Self {
        Self { k_th: 6.03, m_dr: 1.0 }
    }
}

impl DroneParams {
    pub fn new(k_th: f64, m_dr: f64) -> Self {
        Self { k_th, m_dr }
    }

    /// Acceleration per unit thrust command, `k_th / m_dr`.
    pub fn accel_per_command(&self) -> f64 {
        self.k_th / self.m_dr
    }

    pub fn hover_thrust(&self) -> f64 {
        GRAVITY / self.accel_per_command()
    }

    pub fn hover_input(&self) -> ControlInput {
        ControlInput::new(self.hover_thrust(), Vec3::zeros())
    }

    pub fn is_valid(&self) -> bool {
        self.k_th > 0.0 && self.m_dr > 0.0 && self.k_th.is_finite() && self.m_dr.is_finite()
    }
}

/// Time derivative of a [`DroneState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub position: Vec3,
    pub velocity: Vec3,
    pub orientation: Vector4<f64>,
}

impl StateDerivative {
    pub fn to_vector(&self) -> StateVector {
        let mut d = StateVector::zeros();
        d.fixed_rows_mut::<3>(0).copy_from(&self.position);
        d.fixed_rows_mut::<3>(3).copy_from(&self.velocity);
        d.fixed_rows_mut::<4>(6).copy_from(&self.orientation);
        d
    }
}

/// Body z-axis in the world, `R(q/|q|)·e_z`. Intermediate RK4 stages carry
/// slightly non-unit quaternions; dividing by `|q|²` keeps them pure
/// rotations.
fn body_z(q: &Quat) -> Vec3 {
    let (x, y, z, w) = (q.x, q.y, q.z, q.w);
    let s = x * x + y * y + z * z + w * w;
    Vec3::new(2.0 * (x * z + w * y), 2.0 * (y * z - w * x), w * w - x * x - y * y + z * z) / s
}

fn f(x: &StateVector, u: &InputVector, c: f64) -> StateVector {
    let q = Quat::new(x[6], x[7], x[8], x[9]);
    let zb = body_z(&q);
    let thrust = c * u[0];
    let (wx, wy, wz) = (u[1], u[2], u[3]);
    let mut d = StateVector::zeros();
    d[0] = x[3];
    d[1] = x[4];
    d[2] = x[5];
    d[3] = -thrust * zb.x;
    d[4] = -thrust * zb.y;
    d[5] = GRAVITY - thrust * zb.z;
    // ½ q ⊗ (ω, 0)
    d[6] = 0.5 * (q.w * wx + q.y * wz - q.z * wy);
    d[7] = 0.5 * (q.w * wy + q.z * wx - q.x * wz);
    d[8] = 0.5 * (q.w * wz + q.x * wy - q.y * wx);
    d[9] = -0.5 * (q.x * wx + q.y * wy + q.z * wz);
    d
}

fn f_jacobian(x: &StateVector, u: &InputVector, c: f64) -> (StateJacobian, InputJacobian) {
    let (qx, qy, qz, qw) = (x[6], x[7], x[8], x[9]);
    let (wx, wy, wz) = (u[1], u[2], u[3]);
    let thrust = c * u[0];
    let mut a = StateJacobian::zeros();
    let mut b = InputJacobian::zeros();
    for i in 0..3 {
        a[(i, 3 + i)] = 1.0;
    }
    // ∂z_B/∂(qx, qy, qz, qw), one column each, for the unnormalized numerator
    let dz = [
        [2.0 * qz, -2.0 * qw, -2.0 * qx],
        [2.0 * qw, 2.0 * qz, -2.0 * qy],
        [2.0 * qx, 2.0 * qy, 2.0 * qz],
        [2.0 * qy, -2.0 * qx, 2.0 * qw],
    ];
    let zb = body_z(&Quat::new(qx, qy, qz, qw));
    let s = qx * qx + qy * qy + qz * qz + qw * qw;
    let qv = [qx, qy, qz, qw];
    for (j, col) in dz.iter().enumerate() {
        for i in 0..3 {
            // quotient rule: (∂n/∂q_j − z_B·2q_j) / s
            a[(3 + i, 6 + j)] = -thrust * (col[i] - 2.0 * qv[j] * zb[i]) / s;
        }
    }
    for i in 0..3 {
        b[(3 + i, 0)] = -c * zb[i];
    }
    // ∂q̇/∂q = ½ R(ω): right-multiplication matrix of the pure quaternion ω
    let r = [
        [0.0, wz, -wy, wx],
        [-wz, 0.0, wx, wy],
        [wy, -wx, 0.0, wz],
        [-wx, -wy, -wz, 0.0],
    ];
    for i in 0..4 {
        for j in 0..4 {
            a[(6 + i, 6 + j)] = 0.5 * r[i][j];
        }
    }
    // ∂q̇/∂ω
    let l = [[qw, -qz, qy], [qz, qw, -qx], [-qy, qx, qw], [-qx, -qy, -qz]];
    for i in 0..4 {
        for j in 0..3 {
            b[(6 + i, 1 + j)] = 0.5 * l[i][j];
        }
    }
    (a, b)
}

fn check_inputs(x: &DroneState, u: &ControlInput, params: &DroneParams) -> Result<(), DynamicsError> {
    if !x.is_finite() {
        return Err(DynamicsError::NonFinite("state"));
    }
    if !u.is_finite() {
        return Err(DynamicsError::NonFinite("input"));
    }
    if !(params.k_th.is_finite() && params.m_dr.is_finite()) {
        return Err(DynamicsError::NonFinite("parameters"));
    }
    Ok(())
}

/// Continuous-time model.
pub fn derivative(x: &DroneState, u: &ControlInput, params: &DroneParams) -> Result<StateDerivative, DynamicsError> {
    check_inputs(x, u, params)?;
    let d = f(&x.to_vector(), &u.to_vector(), params.accel_per_command());
    Ok(StateDerivative {
        position: d.fixed_rows::<3>(0).into(),
        velocity: d.fixed_rows::<3>(3).into(),
        orientation: d.fixed_rows::<4>(6).into(),
    })
}

fn normalize_quat_block(x: &mut StateVector) {
    let n = x.fixed_rows::<4>(6).norm();
    x.fixed_rows_mut::<4>(6).unscale_mut(n);
}

fn rk4_vec(x: &StateVector, input_at: impl Fn(f64) -> InputVector, c: f64, dt: f64) -> StateVector {
    let u0 = input_at(0.0);
    let um = input_at(0.5 * dt);
    let u1 = input_at(dt);
    let k1 = f(x, &u0, c);
    let k2 = f(&(x + 0.5 * dt * k1), &um, c);
    let k3 = f(&(x + 0.5 * dt * k2), &um, c);
    let k4 = f(&(x + dt * k3), &u1, c);
    let mut next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    normalize_quat_block(&mut next);
    next
}

/// One classical RK4 step under a constant input, followed by quaternion
/// renormalization.
pub fn step(x: &DroneState, u: &ControlInput, params: &DroneParams, dt: f64) -> Result<DroneState, DynamicsError> {
    if !(dt > 0.0) {
        return Err(DynamicsError::NonPositiveStep(dt));
    }
    check_inputs(x, u, params)?;
    let uv = u.to_vector();
    let next = rk4_vec(&x.to_vector(), |_| uv, params.accel_per_command(), dt);
    Ok(DroneState::from_vector(&next))
}

/// RK4 step with a time-varying input `input(t)`, `t ∈ [t0, t0 + dt]`.
pub fn step_time_varying(
    x: &DroneState,
    input: impl Fn(f64) -> ControlInput,
    t0: f64,
    dt: f64,
    params: &DroneParams,
) -> Result<DroneState, DynamicsError> {
    if !(dt > 0.0) {
        return Err(DynamicsError::NonPositiveStep(dt));
    }
    check_inputs(x, &input(t0), params)?;
    let next = rk4_vec(&x.to_vector(), |s| input(t0 + s).to_vector(), params.accel_per_command(), dt);
    if !next.iter().all(|c| c.is_finite()) {
        return Err(DynamicsError::NonFinite("state"));
    }
    Ok(DroneState::from_vector(&next))
}

/// Discrete step and its exact Jacobians `∂x⁺/∂x`, `∂x⁺/∂u`, including the
/// renormalization.
pub fn linearized_step(
    x: &StateVector,
    u: &InputVector,
    c: f64,
    dt: f64,
) -> (StateVector, StateJacobian, InputJacobian) {
    let eye = StateJacobian::identity();
    let h = 0.5 * dt;

    let k1 = f(x, u, c);
    let (a1, b1) = f_jacobian(x, u, c);
    let x2 = x + h * k1;
    let k2 = f(&x2, u, c);
    let (a2, b2) = f_jacobian(&x2, u, c);
    let dk2x = a2 * (eye + h * a1);
    let dk2u = a2 * (h * b1) + b2;
    let x3 = x + h * k2;
    let k3 = f(&x3, u, c);
    let (a3, b3) = f_jacobian(&x3, u, c);
    let dk3x = a3 * (eye + h * dk2x);
    let dk3u = a3 * (h * dk2u) + b3;
    let x4 = x + dt * k3;
    let k4 = f(&x4, u, c);
    let (a4, b4) = f_jacobian(&x4, u, c);
    let dk4x = a4 * (eye + dt * dk3x);
    let dk4u = a4 * (dt * dk3u) + b4;

    let s = dt / 6.0;
    let raw = x + s * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    let mut jx = eye + s * (a1 + 2.0 * dk2x + 2.0 * dk3x + dk4x);
    let mut ju = s * (b1 + 2.0 * dk2u + 2.0 * dk3u + dk4u);

    // d(q/|q|)/dq = (I − n nᵀ)/|q|
    let q: Vector4<f64> = raw.fixed_rows::<4>(6).into();
    let norm = q.norm();
    let n = q / norm;
    let proj = (nalgebra::Matrix4::identity() - n * n.transpose()) / norm;
    let qx_rows: SMatrix<f64, 4, STATE_DIM> = proj * jx.fixed_rows::<4>(6);
    jx.fixed_rows_mut::<4>(6).copy_from(&qx_rows);
    let qu_rows: SMatrix<f64, 4, INPUT_DIM> = proj * ju.fixed_rows::<4>(6);
    ju.fixed_rows_mut::<4>(6).copy_from(&qu_rows);

    let mut next = raw;
    next.fixed_rows_mut::<4>(6).copy_from(&n);
    (next, jx, ju)
}

/// Discrete step on raw vectors, no validation. Used in solver inner loops.
pub fn step_vector(x: &StateVector, u: &InputVector, c: f64, dt: f64) -> StateVector {
    rk4_vec(x, |_| *u, c, dt)
}

/// `X[0] = x0`, `X[k+1] = step(X[k], U[k])`.
pub fn rollout(
    x0: &DroneState,
    inputs: &[ControlInput],
    params: &DroneParams,
    dt: f64,
) -> Result<Vec<DroneState>, DynamicsError> {
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(*x0);
    let mut x = *x0;
    for u in inputs {
        x = step(&x, u, params, dt)?;
        states.push(x);
    }
    Ok(states)
}
