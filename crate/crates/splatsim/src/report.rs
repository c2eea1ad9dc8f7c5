//! JSON reports written by `fly` and `metrics`.

use serde::{Deserialize, Serialize};
use splatsim_core::analysis::MetricsReport;

use crate::config::Config;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsJson {
    /// Mean closest distance to the desired path, m.
    pub tte: f64,
    pub tte_max: f64,
    /// Fraction of flown states within `pp_radius` of the desired path.
    pub pp: f64,
    pub pp_radius: f64,
    /// Collisions per meter flown; `null` when the path has zero length.
    pub collision_rate: Option<f64>,
    pub path_length: f64,
    /// `[first, last]` state index of each contact.
    pub collisions: Vec<[usize; 2]>,
}

impl From<&MetricsReport> for MetricsJson {
    fn from(r: &MetricsReport) -> Self {
        Self {
            tte: r.tte,
            tte_max: r.tte_max,
            pp: r.pp,
            pp_radius: r.pp_radius,
            collision_rate: r.collision_rate,
            path_length: r.path_length,
            collisions: r.collisions.iter().map(|e| [e.start_step, e.end_step]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightReport {
    pub seed: u64,
    /// True when the expert failed before the end of the trajectory; the
    /// outputs then cover only the steps flown.
    pub partial: bool,
    pub error: Option<String>,
    pub steps_planned: usize,
    pub steps_flown: usize,
    pub frames: usize,
    pub metrics: MetricsJson,
    pub config: Config,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFileReport {
    pub seed: u64,
    pub flown: String,
    pub desired: String,
    pub scene: Option<String>,
    pub metrics: MetricsJson,
}
