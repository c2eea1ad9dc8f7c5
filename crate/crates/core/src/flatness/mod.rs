//! Waypoints to minimum-snap splines to sampled state/input references.

mod flat;
mod minsnap;

use thiserror::Error;

pub use flat::{flat_outputs_to_state, sample_trajectory, DesiredTrajectory, FlatOutput, DEFAULT_CONTROL_RATE_HZ};
pub use minsnap::{min_snap, snap_cost_matrix, PiecewisePoly, Waypoint, POLY_COEFFS, POSITION_CONTINUITY, YAW_CONTINUITY};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlatnessError {
    #[error("need at least two waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("waypoint times must strictly increase (waypoint {0})")]
    NonIncreasingTimes(usize),
    #[error("non-finite waypoint {0}")]
    NonFinite(usize),
    #[error("minimum-snap system is singular for axis {0}")]
    Singular(usize),
    #[error("thrust direction undefined near free fall at t = {0} s")]
    NearFreeFall(f64),
    #[error("inverted thrust direction at t = {0} s")]
    Inverted(f64),
    #[error("control rate must be positive, got {0}")]
    InvalidRate(f64),
}
