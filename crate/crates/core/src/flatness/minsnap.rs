//! Degree-7 piecewise polynomials minimizing integrated squared snap.
//!
//! Each segment is parametrized on normalized time `τ = (t − t_i)/T_i ∈
//! [0, 1]`, which keeps the KKT system well conditioned for long segments.
//! Position axes are C⁴ across interior knots, yaw is C². Both start and end
//! at rest (zero velocity, acceleration and jerk).

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use super::FlatnessError;
use crate::geom::Vec3;

pub const POLY_COEFFS: usize = 8;
pub const POSITION_CONTINUITY: usize = 4;
pub const YAW_CONTINUITY: usize = 2;
const BOUNDARY_ORDER: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub position: Vec3,
    pub yaw: f64,
    pub time: f64,
}

impl Waypoint {
    pub fn new(position: Vec3, yaw: f64, time: f64) -> Self {
        Self { position, yaw, time }
    }
}

/// Axes `x, y, z, yaw`; coefficients in ascending powers of normalized time.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePoly {
    pub knots: Vec<f64>,
    pub segments: Vec<[[f64; POLY_COEFFS]; 4]>,
}

/// `j!/(j−r)!`
fn falling(j: usize, r: usize) -> f64 {
    (0..r).fold(1.0, |acc, i| acc * (j - i) as f64)
}

/// Coefficients of `d^r/dτ^r p(τ)` with respect to each monomial.
fn derivative_row(r: usize, tau: f64) -> [f64; POLY_COEFFS] {
    let mut row = [0.0; POLY_COEFFS];
    for (j, slot) in row.iter_mut().enumerate().skip(r) {
        *slot = falling(j, r) * tau.powi((j - r) as i32);
    }
    row
}

/// Hessian of `∫ (d⁴p/dt⁴)² dt` over one segment of duration `duration`,
/// in normalized-time coefficients.
pub fn snap_cost_matrix(duration: f64) -> [[f64; POLY_COEFFS]; POLY_COEFFS] {
    let mut h = [[0.0; POLY_COEFFS]; POLY_COEFFS];
    let scale = duration.powi(-7);
    for j in 4..POLY_COEFFS {
        for l in 4..POLY_COEFFS {
            h[j][l] = scale * falling(j, 4) * falling(l, 4) / (j + l - 7) as f64;
        }
    }
    h
}

fn validate(waypoints: &[Waypoint]) -> Result<(), FlatnessError> {
    if waypoints.len() < 2 {
        return Err(FlatnessError::TooFewWaypoints(waypoints.len()));
    }
    for (i, w) in waypoints.iter().enumerate() {
        if !(w.position.iter().all(|c| c.is_finite()) && w.yaw.is_finite() && w.time.is_finite()) {
            return Err(FlatnessError::NonFinite(i));
        }
        if i > 0 && !(w.time > waypoints[i - 1].time) {
            return Err(FlatnessError::NonIncreasingTimes(i));
        }
    }
    Ok(())
}

/// Equality-constrained QP for one axis, solved through its KKT system.
fn solve_axis(
    axis: usize,
    durations: &[f64],
    values: &[f64],
    continuity: usize,
) -> Result<Vec<[f64; POLY_COEFFS]>, FlatnessError> {
    let n = durations.len();
    let nv = POLY_COEFFS * n;
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    let put = |seg: usize, coeffs: [f64; POLY_COEFFS], scale: f64| -> Vec<(usize, f64)> {
        coeffs.iter().enumerate().map(|(j, c)| (seg * POLY_COEFFS + j, c * scale)).collect()
    };

    for i in 0..n {
        rows.push((put(i, derivative_row(0, 0.0), 1.0), values[i]));
        rows.push((put(i, derivative_row(0, 1.0), 1.0), values[i + 1]));
    }
    for r in 1..=BOUNDARY_ORDER {
        rows.push((put(0, derivative_row(r, 0.0), 1.0), 0.0));
        rows.push((put(n - 1, derivative_row(r, 1.0), 1.0), 0.0));
    }
    for i in 1..n {
        for r in 1..=continuity {
            let mut row = put(i - 1, derivative_row(r, 1.0), durations[i - 1].powi(-(r as i32)));
            row.extend(put(i, derivative_row(r, 0.0), -durations[i].powi(-(r as i32))));
            rows.push((row, 0.0));
        }
    }

    let m = rows.len();
    let mut hess_max = 0.0f64;
    let blocks: Vec<_> = durations.iter().map(|&d| snap_cost_matrix(d)).collect();
    for b in &blocks {
        for row in b {
            for v in row {
                hess_max = hess_max.max(v.abs());
            }
        }
    }
    let hess_scale = if hess_max > 0.0 { 1.0 / hess_max } else { 1.0 };

    let dim = nv + m;
    let mut kkt = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    for (s, b) in blocks.iter().enumerate() {
        for j in 0..POLY_COEFFS {
            for l in 0..POLY_COEFFS {
                kkt[(s * POLY_COEFFS + j, s * POLY_COEFFS + l)] = b[j][l] * hess_scale;
            }
        }
    }
    for (k, (row, b)) in rows.iter().enumerate() {
        // row equilibration
        let norm = row.iter().fold(0.0f64, |acc, (_, v)| acc.max(v.abs()));
        let norm = if norm > 0.0 { norm } else { 1.0 };
        for &(col, v) in row {
            kkt[(nv + k, col)] += v / norm;
            kkt[(col, nv + k)] += v / norm;
        }
        rhs[nv + k] = b / norm;
    }

    let sol = kkt.lu().solve(&rhs).ok_or(FlatnessError::Singular(axis))?;
    if !sol.iter().all(|v| v.is_finite()) {
        return Err(FlatnessError::Singular(axis));
    }
    Ok((0..n)
        .map(|s| {
            let mut c = [0.0; POLY_COEFFS];
            c.copy_from_slice(&sol.as_slice()[s * POLY_COEFFS..(s + 1) * POLY_COEFFS]);
            c
        })
        .collect())
}

/// Minimum-snap spline through `waypoints`, rest to rest, knots at the
/// waypoint timestamps.
pub fn min_snap(waypoints: &[Waypoint]) -> Result<PiecewisePoly, FlatnessError> {
    validate(waypoints)?;
    let knots: Vec<f64> = waypoints.iter().map(|w| w.time).collect();
    let durations: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
    let n = durations.len();
    let mut segments = vec![[[0.0; POLY_COEFFS]; 4]; n];
    for axis in 0..4 {
        let values: Vec<f64> = waypoints
            .iter()
            .map(|w| if axis < 3 { w.position[axis] } else { w.yaw })
            .collect();
        let continuity = if axis < 3 { POSITION_CONTINUITY } else { YAW_CONTINUITY };
        let coeffs = solve_axis(axis, &durations, &values, continuity)?;
        for (seg, c) in coeffs.into_iter().enumerate() {
            segments[seg][axis] = c;
        }
    }
    Ok(PiecewisePoly { knots, segments })
}

impl PiecewisePoly {
    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn start_time(&self) -> f64 {
        self.knots[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    pub fn segment_duration(&self, seg: usize) -> f64 {
        self.knots[seg + 1] - self.knots[seg]
    }

    /// Segment containing `t`; times outside the spline clamp to the ends.
    pub fn segment_at(&self, t: f64) -> usize {
        let n = self.segments.len();
        match self.knots[1..n].iter().position(|&k| t < k) {
            Some(i) => i,
            None => n - 1,
        }
    }

    /// `order`-th time derivative of `axis` (0..=3 for x, y, z, yaw) using
    /// segment `seg`'s polynomial, also outside the segment.
    pub fn evaluate_in_segment(&self, seg: usize, axis: usize, t: f64, order: usize) -> f64 {
        let duration = self.segment_duration(seg);
        let tau = (t - self.knots[seg]) / duration;
        let c = &self.segments[seg][axis];
        let mut acc = 0.0;
        for j in (order..POLY_COEFFS).rev() {
            acc = acc * tau + c[j] * falling(j, order);
        }
        acc / duration.powi(order as i32)
    }

    pub fn evaluate(&self, axis: usize, t: f64, order: usize) -> f64 {
        let t = t.clamp(self.start_time(), self.end_time());
        self.evaluate_in_segment(self.segment_at(t), axis, t, order)
    }

    pub fn position(&self, t: f64, order: usize) -> Vec3 {
        Vec3::new(self.evaluate(0, t, order), self.evaluate(1, t, order), self.evaluate(2, t, order))
    }

    pub fn yaw(&self, t: f64, order: usize) -> f64 {
        self.evaluate(3, t, order)
    }

    /// `∫ (d⁴/dt⁴ axis)² dt` over the whole spline.
    pub fn snap_cost(&self, axis: usize) -> f64 {
        let mut total = 0.0;
        for (s, seg) in self.segments.iter().enumerate() {
            let h = snap_cost_matrix(self.segment_duration(s));
            let c = &seg[axis];
            for j in 0..POLY_COEFFS {
                for l in 0..POLY_COEFFS {
                    total += c[j] * h[j][l] * c[l];
                }
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wp(x: f64, y: f64, z: f64, t: f64) -> Waypoint {
        Waypoint::new(Vec3::new(x, y, z), 0.0, t)
    }

    #[test]
    fn identical_waypoints_give_constant() {
        let s = min_snap(&[wp(1.0, 2.0, -1.0, 0.0), wp(1.0, 2.0, -1.0, 1.0)]).unwrap();
        for i in 0..=10 {
            let t = i as f64 * 0.1;
            assert!((s.position(t, 0) - Vec3::new(1.0, 2.0, -1.0)).norm() < 1e-12);
            for order in 1..=4 {
                assert!(s.position(t, order).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn rest_to_rest_hop_is_symmetric() {
        let s = min_snap(&[wp(0.0, 0.0, 0.0, 0.0), wp(1.0, 0.0, 0.0, 2.0)]).unwrap();
        assert!((s.evaluate(0, 1.0, 0) - 0.5).abs() < 1e-9);
        let vmid = s.evaluate(0, 1.0, 1);
        for i in 0..=100 {
            let dt = i as f64 * 0.01;
            let a = s.evaluate(0, 1.0 - dt, 1);
            let b = s.evaluate(0, 1.0 + dt, 1);
            assert!((a - b).abs() < 1e-9);
            assert!(a <= vmid + 1e-12);
        }
    }

    #[test]
    fn collinear_waypoints_stay_on_line() {
        let s = min_snap(&[wp(0.0, 0.0, 0.0, 0.0), wp(1.0, 0.0, 0.0, 1.0), wp(2.0, 0.0, 0.0, 2.0)]).unwrap();
        for seg in &s.segments {
            assert!(seg[1].iter().chain(seg[2].iter()).all(|c| c.abs() < 1e-9));
        }
    }

    #[test]
    fn rejects_bad_waypoints() {
        assert_eq!(min_snap(&[wp(0.0, 0.0, 0.0, 0.0)]), Err(FlatnessError::TooFewWaypoints(1)));
        assert_eq!(
            min_snap(&[wp(0.0, 0.0, 0.0, 0.0), wp(1.0, 0.0, 0.0, 1.0), wp(1.0, 0.0, 0.0, 1.0)]),
            Err(FlatnessError::NonIncreasingTimes(2))
        );
        assert_eq!(
            min_snap(&[wp(0.0, 0.0, 0.0, 0.0), wp(f64::NAN, 0.0, 0.0, 1.0)]),
            Err(FlatnessError::NonFinite(1))
        );
    }

    #[test]
    fn knot_continuity_and_interpolation() {
        let w = [
            Waypoint::new(Vec3::new(0.0, 0.0, -1.0), 0.0, 0.0),
            Waypoint::new(Vec3::new(1.0, 0.5, -1.2), 0.3, 1.3),
            Waypoint::new(Vec3::new(2.0, -0.5, -0.8), -0.2, 2.1),
            Waypoint::new(Vec3::new(2.5, 1.0, -1.0), 0.5, 3.7),
        ];
        let s = min_snap(&w).unwrap();
        for wpt in &w {
            assert!((s.position(wpt.time, 0) - wpt.position).norm() < 1e-9);
            assert!((s.yaw(wpt.time, 0) - wpt.yaw).abs() < 1e-9);
        }
        for seg in 1..s.segment_count() {
            let t = s.knots[seg];
            for axis in 0..4 {
                let cont = if axis < 3 { POSITION_CONTINUITY } else { YAW_CONTINUITY };
                for order in 0..=cont {
                    let l = s.evaluate_in_segment(seg - 1, axis, t, order);
                    let r = s.evaluate_in_segment(seg, axis, t, order);
                    assert!((l - r).abs() < 1e-6 * (1.0 + l.abs()), "axis {axis} order {order}");
                }
            }
        }
    }
}
