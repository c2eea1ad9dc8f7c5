//! Flight logs as CSV, one row per state. The input applied after each
//! state sits on the same row; the last row leaves the input fields empty.
//! Floats are written in their shortest round-trip form.

use std::io::{Read, Write};

use splatsim_core::flatness::DesiredTrajectory;
use splatsim_core::{ControlInput, DroneParams, DroneState, Quat, Vec3};
use thiserror::Error;

pub const COLUMNS: [&str; 17] =
    ["t", "px", "py", "pz", "vx", "vy", "vz", "qx", "qy", "qz", "qw", "fth", "wx", "wy", "wz", "k_th", "m_dr"];
const INPUT_COLUMNS: std::ops::Range<usize> = 11..15;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("missing column '{0}'")]
    MissingColumn(&'static str),
    #[error("row {row}, column '{column}': cannot parse '{value}'")]
    BadValue { row: usize, column: &'static str, value: String },
    #[error("row {row}: input fields may only be empty on the last row")]
    MissingInput { row: usize },
    #[error("row {row}: last row must leave the input fields empty")]
    TrailingInput { row: usize },
    #[error("no rows")]
    Empty,
    #[error("{states} states, {inputs} inputs and {timestamps} timestamps do not line up")]
    Shape { states: usize, inputs: usize, timestamps: usize },
}

/// States, the inputs between them and the airframe that flew them.
#[derive(Debug, Clone, PartialEq)]
pub struct FlightLog {
    pub timestamps: Vec<f64>,
    pub states: Vec<DroneState>,
    pub inputs: Vec<ControlInput>,
    pub params: DroneParams,
}

impl FlightLog {
    /// Timestamps `t0 + k·dt`.
    pub fn uniform(states: Vec<DroneState>, inputs: Vec<ControlInput>, params: DroneParams, t0: f64, dt: f64) -> Self {
        let timestamps = (0..states.len()).map(|k| t0 + k as f64 * dt).collect();
        Self { timestamps, states, inputs, params }
    }

    pub fn from_trajectory(traj: &DesiredTrajectory) -> Self {
        Self::uniform(traj.states.clone(), traj.inputs.clone(), traj.params, traj.start_time, traj.dt)
    }

    /// Rebuild a desired trajectory; the sample period is the mean spacing.
    pub fn to_trajectory(&self) -> DesiredTrajectory {
        let n = self.timestamps.len();
        let dt = if n > 1 { (self.timestamps[n - 1] - self.timestamps[0]) / (n - 1) as f64 } else { 0.0 };
        DesiredTrajectory {
            states: self.states.clone(),
            inputs: self.inputs.clone(),
            dt,
            params: self.params,
            start_time: self.timestamps.first().copied().unwrap_or(0.0),
        }
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

pub fn write_states_csv<W: Write>(writer: W, log: &FlightLog) -> Result<(), CsvError> {
    let (n, m) = (log.states.len(), log.inputs.len());
    if n == 0 || m + 1 != n || log.timestamps.len() != n {
        return Err(CsvError::Shape { states: n, inputs: m, timestamps: log.timestamps.len() });
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COLUMNS)?;
    for (k, (x, t)) in log.states.iter().zip(&log.timestamps).enumerate() {
        let q = x.orientation;
        let mut row: Vec<String> = [*t, x.position.x, x.position.y, x.position.z, x.velocity.x, x.velocity.y, x.velocity.z]
            .into_iter()
            .chain([q.x, q.y, q.z, q.w])
            .map(fmt)
            .collect();
        match log.inputs.get(k) {
            Some(u) => row.extend([u.thrust, u.body_rate.x, u.body_rate.y, u.body_rate.z].map(fmt)),
            None => row.extend(std::iter::repeat_n(String::new(), 4)),
        }
        row.push(fmt(log.params.k_th));
        row.push(fmt(log.params.m_dr));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_states_csv<R: Read>(reader: R) -> Result<FlightLog, CsvError> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    let mut index = [0usize; 17];
    for (slot, name) in index.iter_mut().zip(COLUMNS) {
        *slot = header.iter().position(|h| h.trim() == name).ok_or(CsvError::MissingColumn(name))?;
    }
    let mut rows: Vec<[Option<f64>; 17]> = Vec::new();
    for (row, record) in r.records().enumerate() {
        let record = record?;
        let mut vals = [None; 17];
        for (c, name) in COLUMNS.iter().enumerate() {
            let field = record.get(index[c]).unwrap_or("").trim();
            if field.is_empty() && INPUT_COLUMNS.contains(&c) {
                continue;
            }
            let v: f64 = field
                .parse()
                .map_err(|_| CsvError::BadValue { row: row + 1, column: name, value: field.to_string() })?;
            vals[c] = Some(v);
        }
        rows.push(vals);
    }
    let last = rows.len().checked_sub(1).ok_or(CsvError::Empty)?;
    let mut log = FlightLog { timestamps: Vec::new(), states: Vec::new(), inputs: Vec::new(), params: DroneParams::default() };
    for (row, v) in rows.iter().enumerate() {
        let get = |c: usize| v[c].unwrap_or(f64::NAN);
        log.timestamps.push(get(0));
        log.states.push(DroneState::new(
            Vec3::new(get(1), get(2), get(3)),
            Vec3::new(get(4), get(5), get(6)),
            Quat::new(get(7), get(8), get(9), get(10)),
        ));
        let present = INPUT_COLUMNS.filter(|c| v[*c].is_some()).count();
        match (row == last, present) {
            (false, 4) => log.inputs.push(ControlInput::new(get(11), Vec3::new(get(12), get(13), get(14)))),
            (false, _) => return Err(CsvError::MissingInput { row: row + 1 }),
            (true, 0) => {}
            (true, _) => return Err(CsvError::TrailingInput { row: row + 1 }),
        }
        log.params = DroneParams::new(get(15), get(16));
    }
    Ok(log)
}
