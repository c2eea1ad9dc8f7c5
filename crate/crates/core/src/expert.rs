//! Receding-horizon tracking MPC with privileged dynamics parameters.
//!
//! Each solve is a Gauss-Newton SQP: linearize the RK4 map about the rollout
//! of the incumbent plan, run a Riccati recursion on the time-varying LQR
//! subproblem with box-constrained inputs, then line-search on the true
//! nonlinear cost.

use alloc::vec::Vec;

use nalgebra::{Matrix4, SMatrix, Vector4};
#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::dynamics::{
    linearized_step, step, step_vector, ControlInput, DroneParams, DroneState, DynamicsError, InputVector,
    StateVector, INPUT_DIM, STATE_DIM,
};
use crate::flatness::DesiredTrajectory;

pub type StateWeight = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type InputWeight = Matrix4<f64>;
type GainMatrix = SMatrix<f64, INPUT_DIM, STATE_DIM>;

const LINE_SEARCH_STEPS: usize = 10;
const ACTIVE_SET_ROUNDS: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MpcError {
    #[error("invalid MPC configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("reference window has {got} states, expected {expected}")]
    ReferenceLength { expected: usize, got: usize },
    #[error("warm start has {got} inputs, expected {expected}")]
    WarmStartLength { expected: usize, got: usize },
    #[error("MPC solver diverged")]
    Diverged,
    #[error("MPC solver diverged at closed-loop step {0}")]
    DivergedAtStep(usize),
    #[error("closed-loop duration must be positive, got {0}")]
    InvalidDuration(f64),
    #[error("empty desired trajectory")]
    EmptyTrajectory,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    pub horizon: usize,
    pub state_weight: StateWeight,
    pub input_weight: InputWeight,
    pub terminal_weight: StateWeight,
    pub input_min: ControlInput,
    pub input_max: ControlInput,
    pub control_rate_hz: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

pub const DEFAULT_STATE_WEIGHTS: [f64; STATE_DIM] = [10.0, 10.0, 10.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0];
pub const DEFAULT_INPUT_WEIGHTS: [f64; INPUT_DIM] = [2.0, 0.5, 0.5, 0.5];
pub const DEFAULT_TERMINAL_SCALE: f64 = 5.0;

impl Default for MpcConfig {
    fn default() -> Self {
        let q = StateWeight::from_diagonal(&StateVector::from_column_slice(&DEFAULT_STATE_WEIGHTS));
        Self {
            horizon: 20,
            state_weight: q,
            input_weight: InputWeight::from_diagonal(&Vector4::from_column_slice(&DEFAULT_INPUT_WEIGHTS)),
            terminal_weight: q * DEFAULT_TERMINAL_SCALE,
            input_min: ControlInput::new(0.0, crate::geom::Vec3::repeat(-6.0)),
            input_max: ControlInput::new(5.0, crate::geom::Vec3::repeat(6.0)),
            control_rate_hz: 20.0,
            max_iterations: 5,
            tolerance: 1e-6,
        }
    }
}

fn is_psd<const D: usize>(m: &SMatrix<f64, D, D>) -> bool
where
    nalgebra::Const<D>: nalgebra::DimMin<nalgebra::Const<D>, Output = nalgebra::Const<D>>
        + nalgebra::DimSub<nalgebra::U1>,
    nalgebra::DefaultAllocator: nalgebra::allocator::Allocator<nalgebra::DimDiff<nalgebra::Const<D>, nalgebra::U1>>,
{
    if !m.iter().all(|v| v.is_finite()) {
        return false;
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return false;
    }
    m.symmetric_eigenvalues().iter().all(|e| *e >= -1e-12 * scale)
}

impl MpcConfig {
    pub fn dt(&self) -> f64 {
        1.0 / self.control_rate_hz
    }

    /// Diagonal weights with `Q_N = terminal_scale·Q`.
    pub fn with_diagonal_weights(mut self, state: [f64; STATE_DIM], input: [f64; INPUT_DIM], terminal_scale: f64) -> Self {
        self.state_weight = StateWeight::from_diagonal(&StateVector::from_column_slice(&state));
        self.input_weight = InputWeight::from_diagonal(&Vector4::from_column_slice(&input));
        self.terminal_weight = self.state_weight * terminal_scale;
        self
    }

    pub fn validate(&self) -> Result<(), MpcError> {
        if self.horizon < 2 {
            return Err(MpcError::InvalidConfig("horizon must be at least 2"));
        }
        if !is_psd(&self.state_weight) {
            return Err(MpcError::InvalidConfig("state weight must be symmetric positive semidefinite"));
        }
        if !is_psd(&self.terminal_weight) {
            return Err(MpcError::InvalidConfig("terminal weight must be symmetric positive semidefinite"));
        }
        if !is_psd(&self.input_weight) {
            return Err(MpcError::InvalidConfig("input weight must be symmetric positive semidefinite"));
        }
        let (lo, hi) = (self.input_min.to_vector(), self.input_max.to_vector());
        if !lo.iter().chain(hi.iter()).all(|v| v.is_finite()) {
            return Err(MpcError::InvalidConfig("input bounds must be finite"));
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
            return Err(MpcError::InvalidConfig("input lower bound exceeds upper bound"));
        }
        if !(self.control_rate_hz > 0.0) || !self.control_rate_hz.is_finite() {
            return Err(MpcError::InvalidConfig("control rate must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(MpcError::InvalidConfig("at least one solver iteration is required"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(MpcError::InvalidConfig("tolerance must be non-negative"));
        }
        Ok(())
    }
}

/// `horizon + 1` reference states and `horizon` reference inputs starting at
/// trajectory sample `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceWindow {
    pub start: usize,
    pub states: Vec<DroneState>,
    pub inputs: Vec<ControlInput>,
}

/// Closest sample at or after `last_index`, searched over the next
/// `2·horizon` samples. Samples past the end repeat the final state and the
/// final input.
pub fn reference_window(
    traj: &DesiredTrajectory,
    x: &DroneState,
    last_index: usize,
    horizon: usize,
) -> ReferenceWindow {
    let n = traj.states.len();
    let first = last_index.min(n.saturating_sub(1));
    let last = (first + 2 * horizon).min(n.saturating_sub(1));
    let mut start = first;
    let mut best = f64::INFINITY;
    for i in first..=last {
        let d = (traj.states[i].position - x.position).norm_squared();
        if d < best {
            best = d;
            start = i;
        }
    }
    let final_input = traj.inputs.last().copied().unwrap_or_else(|| traj.params.hover_input());
    let states = (0..=horizon).map(|k| traj.states[(start + k).min(n - 1)]).collect();
    let inputs = (0..horizon).map(|k| traj.inputs.get(start + k).copied().unwrap_or(final_input)).collect();
    ReferenceWindow { start, states, inputs }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    pub inputs: Vec<ControlInput>,
    pub predicted: Vec<DroneState>,
    pub cost: f64,
    /// Cost of the warm start.
    pub initial_cost: f64,
    pub iterations: usize,
}

/// State difference with the reference quaternion sign-aligned to `x`.
fn state_error(x: &StateVector, reference: &StateVector) -> StateVector {
    let mut d = x - reference;
    let dot: f64 = (0..4).map(|i| x[6 + i] * reference[6 + i]).sum();
    if dot < 0.0 {
        for i in 6..10 {
            d[i] = x[i] + reference[i];
        }
    }
    d
}

struct Problem<'a> {
    x0: StateVector,
    accel: f64,
    dt: f64,
    ref_x: Vec<StateVector>,
    ref_u: Vec<InputVector>,
    lo: InputVector,
    hi: InputVector,
    config: &'a MpcConfig,
}

impl Problem<'_> {
    fn rollout(&self, us: &[InputVector]) -> Vec<StateVector> {
        let mut xs = Vec::with_capacity(us.len() + 1);
        xs.push(self.x0);
        for u in us {
            let next = step_vector(xs.last().unwrap(), u, self.accel, self.dt);
            xs.push(next);
        }
        xs
    }

    fn cost(&self, xs: &[StateVector], us: &[InputVector]) -> f64 {
        let cfg = self.config;
        let n = us.len();
        let mut total = 0.0;
        for k in 0..n {
            let dx = state_error(&xs[k], &self.ref_x[k]);
            let du = us[k] - self.ref_u[k];
            total += (dx.transpose() * cfg.state_weight * dx)[(0, 0)] + (du.transpose() * cfg.input_weight * du)[(0, 0)];
        }
        let dx = state_error(&xs[n], &self.ref_x[n]);
        total + (dx.transpose() * cfg.terminal_weight * dx)[(0, 0)]
    }

    fn clamp(&self, u: &InputVector) -> InputVector {
        u.zip_zip_map(&self.lo, &self.hi, |v, l, h| v.max(l).min(h))
    }
}

/// `min ½ δuᵀHδu + gᵀδu` over `lo ≤ δu ≤ hi` by active-set refinement.
/// Returns the step and the mask of components left free.
fn box_qp(h: &Matrix4<f64>, g: &Vector4<f64>, lo: &Vector4<f64>, hi: &Vector4<f64>) -> Option<(Vector4<f64>, [bool; 4])> {
    let mut free = [true; 4];
    let mut du = Vector4::zeros();
    for i in 0..4 {
        if lo[i] >= hi[i] {
            free[i] = false;
            du[i] = lo[i];
        }
    }
    for _ in 0..ACTIVE_SET_ROUNDS {
        // reduced system: free rows of H, identity rows for fixed components
        let mut m = Matrix4::identity();
        let mut rhs = Vector4::zeros();
        for i in 0..4 {
            if free[i] {
                rhs[i] = -g[i];
                for j in 0..4 {
                    if free[j] {
                        m[(i, j)] = h[(i, j)];
                    } else {
                        rhs[i] -= h[(i, j)] * du[j];
                    }
                }
            } else {
                m[(i, i)] = 1.0;
                rhs[i] = du[i];
            }
        }
        let sol = m.cholesky().map(|c| c.solve(&rhs)).or_else(|| m.lu().solve(&rhs))?;
        let mut changed = false;
        for i in 0..4 {
            if free[i] {
                if sol[i] < lo[i] {
                    du[i] = lo[i];
                    free[i] = false;
                    changed = true;
                } else if sol[i] > hi[i] {
                    du[i] = hi[i];
                    free[i] = false;
                    changed = true;
                } else {
                    du[i] = sol[i];
                }
            }
        }
        if !changed {
            // release bounds whose multiplier has the wrong sign
            let grad = h * du + g;
            for i in 0..4 {
                if !free[i] && lo[i] < hi[i] {
                    let at_lo = du[i] <= lo[i];
                    if (at_lo && grad[i] < 0.0) || (!at_lo && grad[i] > 0.0) {
                        free[i] = true;
                        changed = true;
                    }
                }
            }
            if !changed {
                return Some((du, free));
            }
        }
    }
    Some((du, free))
}

/// Riccati backward pass. Returns feedforward and feedback gains.
fn backward_pass(p: &Problem<'_>, xs: &[StateVector], us: &[InputVector], reg: f64) -> Option<(Vec<InputVector>, Vec<GainMatrix>)> {
    let cfg = p.config;
    let n = us.len();
    let dx_n = state_error(&xs[n], &p.ref_x[n]);
    let mut vx = 2.0 * cfg.terminal_weight * dx_n;
    let mut vxx = 2.0 * cfg.terminal_weight;
    let mut ff = alloc::vec![InputVector::zeros(); n];
    let mut fb = alloc::vec![GainMatrix::zeros(); n];
    for k in (0..n).rev() {
        let (_, a, b) = linearized_step(&xs[k], &us[k], p.accel, p.dt);
        let dx = state_error(&xs[k], &p.ref_x[k]);
        let du = us[k] - p.ref_u[k];
        let qx = 2.0 * cfg.state_weight * dx + a.transpose() * vx;
        let qu = 2.0 * cfg.input_weight * du + b.transpose() * vx;
        let vxx_a = vxx * a;
        let qxx = 2.0 * cfg.state_weight + a.transpose() * vxx_a;
        let qux = b.transpose() * vxx_a;
        let mut quu = 2.0 * cfg.input_weight + b.transpose() * vxx * b;
        quu = 0.5 * (quu + quu.transpose()) + Matrix4::identity() * reg;

        let (step_ff, free) = box_qp(&quu, &qu, &(p.lo - us[k]), &(p.hi - us[k]))?;
        let mut quu_free = Matrix4::identity();
        let mut qux_free = GainMatrix::zeros();
        for i in 0..4 {
            if free[i] {
                for j in 0..4 {
                    if free[j] {
                        quu_free[(i, j)] = quu[(i, j)];
                    }
                }
                qux_free.set_row(i, &qux.row(i));
            }
        }
        let chol = quu_free.cholesky()?;
        let gain = -chol.solve(&qux_free);

        let gain_t = gain.transpose();
        vx = qx + gain_t * quu * step_ff + gain_t * qu + qux.transpose() * step_ff;
        vxx = qxx + gain_t * quu * gain + gain_t * qux + qux.transpose() * gain;
        vxx = 0.5 * (vxx + vxx.transpose());
        ff[k] = step_ff;
        fb[k] = gain;
    }
    Some((ff, fb))
}

/// One receding-horizon solve from `x` against `reference`, warm-started
/// from `warm_start` (clamped into bounds first).
pub fn solve_mpc(
    x: &DroneState,
    params: &DroneParams,
    reference: &ReferenceWindow,
    warm_start: &[ControlInput],
    config: &MpcConfig,
) -> Result<MpcSolution, MpcError> {
    config.validate()?;
    let n = config.horizon;
    if reference.states.len() != n + 1 || reference.inputs.len() != n {
        return Err(MpcError::ReferenceLength { expected: n + 1, got: reference.states.len() });
    }
    if warm_start.len() != n {
        return Err(MpcError::WarmStartLength { expected: n, got: warm_start.len() });
    }
    if !x.is_finite() {
        return Err(DynamicsError::NonFinite("state").into());
    }
    if !params.is_valid() {
        return Err(DynamicsError::NonFinite("parameters").into());
    }
    let problem = Problem {
        x0: x.to_vector(),
        accel: params.accel_per_command(),
        dt: config.dt(),
        ref_x: reference.states.iter().map(DroneState::to_vector).collect(),
        ref_u: reference.inputs.iter().map(ControlInput::to_vector).collect(),
        lo: config.input_min.to_vector(),
        hi: config.input_max.to_vector(),
        config,
    };

    let mut us: Vec<InputVector> = warm_start.iter().map(|u| problem.clamp(&u.to_vector())).collect();
    let mut xs = problem.rollout(&us);
    let mut cost = problem.cost(&xs, &us);
    if !cost.is_finite() {
        return Err(MpcError::Diverged);
    }
    let initial_cost = cost;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let mut gains = None;
        let mut reg = 0.0;
        for _ in 0..6 {
            gains = backward_pass(&problem, &xs, &us, reg);
            if gains.is_some() {
                break;
            }
            reg = if reg == 0.0 { 1e-8 } else { reg * 100.0 };
        }
        let (ff, fb) = gains.ok_or(MpcError::Diverged)?;

        let mut accepted = None;
        let mut alpha = 1.0;
        for _ in 0..LINE_SEARCH_STEPS {
            let mut cand_x = Vec::with_capacity(n + 1);
            let mut cand_u = Vec::with_capacity(n);
            cand_x.push(problem.x0);
            for k in 0..n {
                let dx = cand_x[k] - xs[k];
                let u = problem.clamp(&(us[k] + alpha * ff[k] + fb[k] * dx));
                cand_x.push(step_vector(&cand_x[k], &u, problem.accel, problem.dt));
                cand_u.push(u);
            }
            let c = problem.cost(&cand_x, &cand_u);
            if c.is_finite() && c < cost {
                accepted = Some((cand_x, cand_u, c));
                break;
            }
            alpha *= 0.5;
        }
        let Some((nx, nu, nc)) = accepted else { break };
        let decrease = cost - nc;
        xs = nx;
        us = nu;
        cost = nc;
        if decrease < config.tolerance {
            break;
        }
    }

    Ok(MpcSolution {
        inputs: us.iter().map(ControlInput::from_vector).collect(),
        predicted: xs.iter().map(DroneState::from_vector).collect(),
        cost,
        initial_cost,
        iterations,
    })
}

/// Closed-loop states and applied inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopRun {
    pub states: Vec<DroneState>,
    pub inputs: Vec<ControlInput>,
    /// Reference sample used at each step.
    pub reference_indices: Vec<usize>,
}

/// Run the expert for `round(rate·duration)` steps from `x0`, starting the
/// reference search at `start_index`.
pub fn closed_loop_run(
    x0: &DroneState,
    params: &DroneParams,
    traj: &DesiredTrajectory,
    duration: f64,
    config: &MpcConfig,
    start_index: usize,
) -> Result<ClosedLoopRun, MpcError> {
    match closed_loop_run_partial(x0, params, traj, duration, config, start_index) {
        (run, None) => Ok(run),
        (_, Some(err)) => Err(err),
    }
}

/// As [`closed_loop_run`], but keeps the steps flown before a failure.
pub fn closed_loop_run_partial(
    x0: &DroneState,
    params: &DroneParams,
    traj: &DesiredTrajectory,
    duration: f64,
    config: &MpcConfig,
    start_index: usize,
) -> (ClosedLoopRun, Option<MpcError>) {
    let mut run = ClosedLoopRun { states: alloc::vec![*x0], inputs: Vec::new(), reference_indices: Vec::new() };
    if let Err(e) = config.validate() {
        return (run, Some(e));
    }
    if !(duration > 0.0) || !duration.is_finite() {
        return (run, Some(MpcError::InvalidDuration(duration)));
    }
    if traj.states.is_empty() {
        return (run, Some(MpcError::EmptyTrajectory));
    }
    let steps = (duration * config.control_rate_hz).round() as usize;
    let dt = config.dt();
    let mut x = *x0;
    let mut last = start_index;
    let mut warm: Option<Vec<ControlInput>> = None;
    for k in 0..steps {
        let window = reference_window(traj, &x, last, config.horizon);
        last = window.start;
        let start_plan = warm.take().unwrap_or_else(|| window.inputs.clone());
        let sol = match solve_mpc(&x, params, &window, &start_plan, config) {
            Ok(sol) => sol,
            Err(MpcError::Diverged) => return (run, Some(MpcError::DivergedAtStep(k))),
            Err(e) => return (run, Some(e)),
        };
        let u = sol.inputs[0];
        x = match step(&x, &u, params, dt) {
            Ok(next) if next.is_finite() => next,
            Ok(_) => return (run, Some(MpcError::DivergedAtStep(k))),
            Err(e) => return (run, Some(e.into())),
        };
        let mut shifted = sol.inputs;
        shifted.remove(0);
        shifted.push(*shifted.last().unwrap_or(&u));
        warm = Some(shifted);
        run.states.push(x);
        run.inputs.push(u);
        run.reference_indices.push(window.start);
    }
    (run, None)
}
