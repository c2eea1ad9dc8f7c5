//! Gaussian-splat scenes and their forward rasterization.

mod gaussian;
mod project;
mod raster;
mod synth;

pub use gaussian::{color_to_sh, logit, sh_to_color, sigmoid, Gaussian3D, Similarity, SplatScene, SH_C0};
pub use project::{project_gaussian, project_with_view, Splat2D, ViewTransform, COV2D_DILATION, NEAR_PLANE};
pub use raster::{
    bin_tiles, blit, camera_view, depth_key, prepare_splats, rasterize_tile, render, render_reference, sort_by_depth, Image,
    ScreenSplat, TileBins, ALPHA_MAX, ALPHA_MIN, TILE_SIZE, TRANSMITTANCE_MIN,
};
pub use synth::{generate_synthetic_scene, Primitive, SceneSpec, SynthError};
