//! Per-phase render timings on the demo course at 320×240.
//!
//! `cargo run --release -p splatsim --example render_bench -- [gaussians] [workers]`

use std::time::Instant;

use splatsim::inputs::demo_scene_spec;
use splatsim::render::ParallelRenderer;
use splatsim_core::splat::{bin_tiles, camera_view, generate_synthetic_scene, prepare_splats, rasterize_tile, sort_by_depth};
use splatsim_core::{CameraIntrinsics, Pose, Quat, RigidTransform, Vec3};

fn main() {
    let mut args = std::env::args().skip(1);
    let target: f64 = args.next().map_or(50_000.0, |a| a.parse().expect("gaussian count"));
    let workers: usize = args.next().map_or(0, |a| a.parse().expect("worker count"));
    let mut spec = demo_scene_spec().to_spec();
    let base = generate_synthetic_scene(&spec, 0).unwrap().len() as f64;
    spec.density *= target / base;
    let scene = generate_synthetic_scene(&spec, 0).unwrap();
    let k = CameraIntrinsics::new(160.0, 160.0, 160.0, 120.0, 320, 240).unwrap();
    let mount = RigidTransform::new(Quat::new(0.5, 0.5, 0.5, 0.5), Vec3::new(0.05, 0.0, 0.0));
    let pose = Pose::new(Quat::IDENTITY, Vec3::new(-4.0, 0.5, -1.5));

    let frames: usize = std::env::var("FRAMES").map_or(30, |v| v.parse().unwrap());
    let t = Instant::now();
    let view = camera_view(&scene, &pose, &mount);
    let mut splats = Vec::new();
    for _ in 0..frames {
        splats = prepare_splats(&scene.gaussians, 0, &view, &k, true);
    }
    let prep = t.elapsed().as_secs_f64() / frames as f64;
    let t = Instant::now();
    for _ in 0..frames {
        let mut s = splats.clone();
        sort_by_depth(&mut s);
    }
    let sort = t.elapsed().as_secs_f64() / frames as f64;
    sort_by_depth(&mut splats);
    let t = Instant::now();
    let mut bins = bin_tiles(&splats, &k);
    for _ in 1..frames {
        bins = bin_tiles(&splats, &k);
    }
    let bin = t.elapsed().as_secs_f64() / frames as f64;
    let t = Instant::now();
    let mut buf = Vec::new();
    for _ in 0..frames {
        for tile in 0..bins.tile_count() {
            rasterize_tile(&splats, &bins, tile, &k, &scene.background, &mut buf);
        }
    }
    let raster = t.elapsed().as_secs_f64() / frames as f64;

    let mut evals = 0u64;
    for tile in 0..bins.tile_count() {
        let (tx, ty) = ((tile as u32 % k.width.div_ceil(16)) as i32 * 16, (tile as u32 / k.width.div_ceil(16)) as i32 * 16);
        for &i in bins.tile(tile) {
            let b = splats[i as usize].bbox;
            let w = (b[2].min(tx + 15) - b[0].max(tx) + 1).max(0) as u64;
            let h = (b[3].min(ty + 15) - b[1].max(ty) + 1).max(0) as u64;
            evals += w * h;
        }
    }
    println!("footprint pixel evaluations (no early exit): {evals}");
    let renderer = ParallelRenderer::new(workers).unwrap();
    let t = Instant::now();
    for _ in 0..frames {
        renderer.render(&scene, &pose, &mount, &k);
    }
    let total = t.elapsed().as_secs_f64() / frames as f64;
    println!(
        "{} gaussians, {} visible, {} tile entries\nprepare {:.2} ms, sort {:.2} ms, bin {:.2} ms, raster {:.2} ms\n{} workers: {:.2} ms/frame, {:.1} frames/s",
        scene.len(),
        splats.len(),
        bins.total_entries(),
        prep * 1e3,
        sort * 1e3,
        bin * 1e3,
        raster * 1e3,
        renderer.workers(),
        total * 1e3,
        1.0 / total
    );
}
