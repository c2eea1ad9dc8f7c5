use proptest::prelude::*;

use splatsim_core::analysis::{c_hat, c_hat_bruteforce, pp, tte};
use splatsim_core::datagen::history_features;
use splatsim_core::dynamics::{derivative, step, step_time_varying};
use splatsim_core::flatness::{
    flat_outputs_to_state, min_snap, sample_trajectory, DesiredTrajectory, FlatOutput, Waypoint, POSITION_CONTINUITY,
    YAW_CONTINUITY,
};
use splatsim_core::splat::{render, Gaussian3D, SplatScene};
use splatsim_core::{CameraIntrinsics, ControlInput, DroneParams, DroneState, Pose, Quat, RigidTransform, Vec3};

fn quat() -> impl Strategy<Value = Quat> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("non-degenerate", |(x, y, z, w)| x * x + y * y + z * z + w * w > 0.01)
        .prop_map(|(x, y, z, w)| Quat::new(x, y, z, w).normalized())
}

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn pose() -> impl Strategy<Value = Pose> {
    (quat(), vec3(5.0)).prop_map(|(q, t)| Pose::new(q, t))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quaternion_product_is_associative(a in quat(), b in quat(), c in quat()) {
        let l = a.multiply(&b).multiply(&c);
        let r = a.multiply(&b.multiply(&c));
        prop_assert!((l.to_vector4() - r.to_vector4()).amax() < 1e-14);
    }

    #[test]
    fn rotation_preserves_norm_and_matches_matrix(q in quat(), v in vec3(10.0)) {
        let r = q.rotate(&v);
        prop_assert!((r.norm() - v.norm()).abs() < 1e-12 * (1.0 + v.norm()));
        prop_assert!((q.to_rotation_matrix() * v - r).norm() < 1e-12 * (1.0 + v.norm()));
        prop_assert!((q.multiply(&q.conjugate()).to_vector4() - Quat::IDENTITY.to_vector4()).amax() < 1e-14);
    }

    #[test]
    fn transform_composition(a in pose(), b in pose(), p in vec3(5.0)) {
        let composed = a.compose(&b).transform_point(&p);
        let sequential = a.transform_point(&b.transform_point(&p));
        prop_assert!((composed - sequential).norm() < 1e-12);
        prop_assert!((a.inverse().transform_point(&a.transform_point(&p)) - p).norm() < 1e-12);
    }

    #[test]
    fn rk4_keeps_unit_quaternion(q in quat(), w in vec3(3.0), thrust in 0.0..4.0f64) {
        let params = DroneParams::default();
        let mut x = DroneState::new(Vec3::zeros(), Vec3::zeros(), q);
        let u = ControlInput::new(thrust, w);
        for _ in 0..200 {
            x = step(&x, &u, &params, 0.05).unwrap();
            prop_assert!((x.orientation.norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn c_hat_closed_form_matches_search(
        c in 3.0..9.0f64, thrust in 0.2..5.0f64, q in quat(), f in vec3(5.0)
    ) {
        let closed = c_hat(c, thrust, &q, &f).unwrap();
        let brute = c_hat_bruteforce(c, thrust, &q, &f).unwrap();
        prop_assert!((closed.c_hat - brute).abs() <= 1e-6);
        prop_assert!(closed.residual >= 0.0);
    }

    #[test]
    fn c_hat_slope_along_body_z(c in 3.0..9.0f64, thrust in 0.2..5.0f64, q in quat(), f in vec3(5.0), d in 0.01..2.0f64) {
        let z = q.rotate(&Vec3::z());
        let base = c_hat(c, thrust, &q, &f).unwrap().c_hat;
        let moved = c_hat(c, thrust, &q, &(f + z * d)).unwrap().c_hat;
        prop_assert!(moved < base);
        prop_assert!(((moved - base) + d / thrust).abs() < 1e-12 * (base.abs() + (f.norm() + d) / thrust));
    }

    /// Dyadic coordinates keep every sum and difference exact.
    #[test]
    fn tracking_metrics_translation_invariant(
        flown in prop::collection::vec((-64i32..64, -64i32..64, -64i32..64), 1..20),
        desired in prop::collection::vec((-64i32..64, -64i32..64, -64i32..64), 1..20),
        shift in (-64i32..64, -64i32..64, -64i32..64),
    ) {
        let to_state = |(x, y, z): (i32, i32, i32), s: (i32, i32, i32)| {
            DroneState::at_rest(Vec3::new((x + s.0) as f64 / 8.0, (y + s.1) as f64 / 8.0, (z + s.2) as f64 / 8.0))
        };
        let make_traj = |s: (i32, i32, i32)| DesiredTrajectory {
            states: desired.iter().map(|p| to_state(*p, s)).collect(),
            inputs: vec![DroneParams::default().hover_input(); desired.len() - 1],
            dt: 0.05,
            params: DroneParams::default(),
            start_time: 0.0,
        };
        let a: Vec<_> = flown.iter().map(|p| to_state(*p, (0, 0, 0))).collect();
        let b: Vec<_> = flown.iter().map(|p| to_state(*p, shift)).collect();
        let (ta, tb) = (make_traj((0, 0, 0)), make_traj(shift));
        prop_assert_eq!(tte(&a, &ta).unwrap(), tte(&b, &tb).unwrap());
        prop_assert_eq!(pp(&a, &ta, 0.3).unwrap(), pp(&b, &tb, 0.3).unwrap());
    }

    #[test]
    fn history_identities(seed_q in quat(), rates in prop::collection::vec(vec3(2.0), 5..30)) {
        let params = DroneParams::default();
        let mut states = vec![DroneState::new(Vec3::zeros(), Vec3::new(0.3, -0.1, 0.0), seed_q)];
        for w in &rates {
            let u = ControlInput::new(params.hover_thrust() * 1.1, *w);
            states.push(step(states.last().unwrap(), &u, &params, 0.05).unwrap());
        }
        let t: Vec<f64> = (0..states.len()).map(|k| k as f64 * 0.05).collect();
        let h = history_features(&states, &t).unwrap();
        let sum = h.iter().fold(Vec3::zeros(), |acc, s| acc + s.velocity);
        prop_assert!((sum - (states.last().unwrap().velocity - states[0].velocity)).norm() < 1e-9);
        for (k, s) in h.iter().enumerate() {
            prop_assert!((s.rotation.norm() - 1.0).abs() < 1e-12);
            let v = Vec3::new(0.3, -1.2, 0.7);
            let via_delta = s.rotation.rotate(&v);
            let via_frames = states[k + 1].orientation.conjugate().rotate(&states[k].orientation.rotate(&v));
            prop_assert!((via_delta - via_frames).norm() < 1e-9);
        }
    }
}

fn waypoint_set() -> impl Strategy<Value = Vec<Waypoint>> {
    prop::collection::vec((vec3(3.0), -1.0..1.0f64, 0.8..2.0f64), 2..8).prop_map(|raw| {
        let mut t = 0.0;
        raw.into_iter()
            .enumerate()
            .map(|(i, (p, yaw, dt))| {
                if i > 0 {
                    t += dt;
                }
                Waypoint::new(p + Vec3::new(0.0, 0.0, -2.0), yaw, t)
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn min_snap_interpolates_and_is_smooth(w in waypoint_set()) {
        let s = min_snap(&w).unwrap();
        for p in &w {
            prop_assert!((s.position(p.time, 0) - p.position).norm() <= 1e-6);
            prop_assert!((s.yaw(p.time, 0) - p.yaw).abs() <= 1e-6);
        }
        for seg in 1..s.segment_count() {
            let t = s.knots[seg];
            for axis in 0..4 {
                let cont = if axis < 3 { POSITION_CONTINUITY } else { YAW_CONTINUITY };
                for order in 0..=cont {
                    let l = s.evaluate_in_segment(seg - 1, axis, t, order);
                    let r = s.evaluate_in_segment(seg, axis, t, order);
                    prop_assert!((l - r).abs() <= 1e-6, "axis {} order {}: {} vs {}", axis, order, l, r);
                }
            }
        }
    }

    #[test]
    fn flatness_forward_consistency(w in waypoint_set(), frac in 0.0..1.0f64) {
        let s = min_snap(&w).unwrap();
        let t = s.start_time() + frac * s.duration();
        let flat = FlatOutput::from_spline(&s, t);
        let params = DroneParams::new(5.5, 0.9);
        if let Ok((x, u)) = flat_outputs_to_state(&flat, &params, t) {
            let d = derivative(&x, &u, &params).unwrap();
            prop_assert!((d.position - flat.velocity).norm() <= 1e-6);
            prop_assert!((d.velocity - flat.acceleration).norm() <= 1e-6);
        }
    }

    #[test]
    fn sampled_trajectory_counts(w in waypoint_set(), rate in 5.0..50.0f64) {
        let s = min_snap(&w).unwrap();
        if let Ok(traj) = sample_trajectory(&s, rate, &DroneParams::default()) {
            let n = (s.duration() * rate).round() as usize;
            prop_assert_eq!(traj.states.len(), n + 1);
            prop_assert_eq!(traj.inputs.len(), n);
            prop_assert!(traj.states.iter().all(|x| (x.orientation.norm() - 1.0).abs() < 1e-12));
        }
    }
}

fn small_k() -> CameraIntrinsics {
    CameraIntrinsics::new(80.0, 80.0, 40.0, 30.0, 80, 60).unwrap()
}

fn gaussian() -> impl Strategy<Value = Gaussian3D> {
    (vec3(1.0), quat(), (0.02..0.3f64, 0.02..0.3f64, 0.02..0.3f64), 0.05..1.0f64, (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64))
        .prop_map(|(m, q, s, o, c)| Gaussian3D {
            mean: m + Vec3::new(0.0, 0.0, 3.0),
            scale: Vec3::new(s.0, s.1, s.2),
            rotation: q,
            opacity: o,
            color: [c.0, c.1, c.2],
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// On a black background a single white splat brightens every pixel
    /// monotonically in its opacity.
    #[test]
    fn single_splat_opacity_monotone(g in gaussian(), extra in 0.0..0.5f64) {
        let mut g = Gaussian3D { color: [1.0; 3], ..g };
        let dim = render(&SplatScene::new(vec![g]), &Pose::IDENTITY, &RigidTransform::IDENTITY, &small_k());
        g.opacity = (g.opacity + extra).min(1.0);
        let bright = render(&SplatScene::new(vec![g]), &Pose::IDENTITY, &RigidTransform::IDENTITY, &small_k());
        prop_assert!(dim.data.iter().zip(&bright.data).all(|(a, b)| a <= b));
    }

    /// Moving the scene and the camera by the same rigid motion leaves the
    /// image unchanged up to rounding.
    #[test]
    fn render_rigid_invariance(gs in prop::collection::vec(gaussian(), 1..12), motion in pose()) {
        let scene = SplatScene::new(gs.clone()).with_background([0.2, 0.1, 0.0]);
        let moved = SplatScene::new(gs.iter().map(|g| g.transformed(&motion)).collect()).with_background([0.2, 0.1, 0.0]);
        let a = render(&scene, &Pose::IDENTITY, &RigidTransform::IDENTITY, &small_k());
        let b = render(&moved, &motion, &RigidTransform::IDENTITY, &small_k());
        let worst = a.data.iter().zip(&b.data).map(|(x, y)| (*x as i32 - *y as i32).abs()).max().unwrap();
        prop_assert!(worst <= 1, "max channel diff {}", worst);
    }
}

/// Error at `t = 1` for a smooth time-varying input shrinks at fourth order.
#[test]
fn rk4_convergence_order() {
    let params = DroneParams::default();
    let input = |t: f64| ControlInput::new(1.7 + 0.3 * (2.0 * t).sin(), Vec3::new(0.5 * t.cos(), -0.4 * (1.5 * t).sin(), 0.3));
    let x0 = DroneState::new(Vec3::zeros(), Vec3::new(0.2, 0.0, -0.1), Quat::from_axis_angle(Vec3::x(), 0.2));
    let run = |n: usize| {
        let dt = 1.0 / n as f64;
        let mut x = x0;
        for k in 0..n {
            x = step_time_varying(&x, input, k as f64 * dt, dt, &params).unwrap();
        }
        x.to_vector()
    };
    let reference = run(4096);
    let errors: Vec<f64> = [16, 32, 64].iter().map(|&n| (run(n) - reference).norm()).collect();
    for pair in errors.windows(2) {
        let order = (pair[0] / pair[1]).log2();
        assert!(order >= 3.5, "observed order {order}");
    }
}
