//! Multi-threaded front end to the core tile rasterizer. Output is
//! byte-identical to [`splatsim_core::splat::render`] for any worker count.

use rayon::prelude::*;
use splatsim_core::splat::{
    bin_tiles, blit, camera_view, depth_key, prepare_splats, rasterize_tile, Image, ScreenSplat, SplatScene,
};
use splatsim_core::{CameraIntrinsics, Pose, RigidTransform};

/// Gaussians per projection job.
const PREPARE_CHUNK: usize = 4096;

pub struct ParallelRenderer {
    pool: rayon::ThreadPool,
}

impl ParallelRenderer {
    /// `workers == 0` uses every logical core.
    pub fn new(workers: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
        Ok(Self { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn render(&self, scene: &SplatScene, body_pose: &Pose, camera_to_body: &RigidTransform, k: &CameraIntrinsics) -> Image {
        self.pool.install(|| {
            let view = camera_view(scene, body_pose, camera_to_body);
            let chunks: Vec<Vec<ScreenSplat>> = scene
                .gaussians
                .par_chunks(PREPARE_CHUNK)
                .enumerate()
                .map(|(c, gs)| prepare_splats(gs, c * PREPARE_CHUNK, &view, k, true))
                .collect();
            let unsorted: Vec<ScreenSplat> = chunks.concat();
            // keys are unique, so this matches the serial sort exactly
            let mut order: Vec<(u64, u32)> =
                unsorted.par_iter().enumerate().map(|(i, s)| (depth_key(s), i as u32)).collect();
            order.par_sort_unstable();
            let splats: Vec<ScreenSplat> = order.par_iter().map(|&(_, i)| unsorted[i as usize]).collect();
            let bins = bin_tiles(&splats, k);
            let tiles: Vec<_> = (0..bins.tile_count())
                .into_par_iter()
                .map(|t| {
                    let mut buf = Vec::new();
                    let rect = rasterize_tile(&splats, &bins, t, k, &scene.background, &mut buf);
                    (rect, buf)
                })
                .collect();
            let mut image = Image::filled(k.width, k.height, [0; 3]);
            for ((x0, y0, w, h), buf) in &tiles {
                blit(&mut image, buf, *x0, *y0, *w, *h);
            }
            image
        })
    }
}
