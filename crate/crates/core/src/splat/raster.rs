//! Front-to-back alpha compositing, tiled and brute force.
//!
//! Both renderers blend the same depth-sorted splat sequence per pixel with
//! the same arithmetic. The brute-force path visits every splat at every
//! pixel; the tiled path visits a splat only at pixels inside its footprint,
//! derived from the `α ≥ 1/255` cutoff rather than a fixed 3σ radius, so the
//! two agree pixel for pixel.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::gaussian::{Gaussian3D, SplatScene};
use super::project::{project_with_view, ViewTransform, NEAR_PLANE};
use crate::geom::{body_camera_pose, CameraIntrinsics, Pose, RigidTransform};

pub const TILE_SIZE: u32 = 16;
/// Contributions below this alpha are skipped.
pub const ALPHA_MIN: f32 = 1.0 / 255.0;
pub const ALPHA_MAX: f32 = 0.99;
/// Blending stops once transmittance falls below this.
pub const TRANSMITTANCE_MIN: f32 = 1.0 / 255.0;

/// 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl Image {
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity((width * height * 3) as usize);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = ((y * self.width + x) * 3) as usize;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = ((y * self.width + x) * 3) as usize;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

/// A projected splat in render-ready form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScreenSplat {
    /// Index of the source Gaussian; breaks depth ties.
    pub index: u32,
    pub depth: f32,
    pub mean: [f32; 2],
    /// Inverse covariance `(a, b, c)` of `[[a, b], [b, c]]`.
    pub conic: [f32; 3],
    pub opacity: f32,
    pub color: [f32; 3],
    /// Exponent below which `opacity·exp(power) < 1/255`.
    pub min_power: f32,
    /// Inclusive pixel rectangle `[x0, y0, x1, y1]` that can receive
    /// `α ≥ 1/255`.
    pub bbox: [i32; 4],
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5) as u8
}

fn background_f32(bg: &[f64; 3]) -> [f32; 3] {
    [bg[0] as f32, bg[1] as f32, bg[2] as f32]
}

/// Project `gaussians` (whose scene indices start at `first_index`). With
/// `cull` set, splats that cannot reach `α ≥ 1/255` on any pixel of the
/// image are dropped.
pub fn prepare_splats(
    gaussians: &[Gaussian3D],
    first_index: usize,
    view: &ViewTransform,
    k: &CameraIntrinsics,
    cull: bool,
) -> Vec<ScreenSplat> {
    let mut out = Vec::new();
    let alpha_min = ALPHA_MIN as f64;
    for (offset, g) in gaussians.iter().enumerate() {
        if cull && g.opacity < alpha_min {
            continue;
        }
        if !(view.to_camera(&g.mean).z > NEAR_PLANE) {
            continue;
        }
        let Some(sp) = project_with_view(g, &g.covariance(), view, k) else {
            continue;
        };
        let cov = sp.cov;
        let det = cov.determinant();
        let conic = [cov[(1, 1)] / det, -cov[(0, 1)] / det, cov[(0, 0)] / det];
        // opacity·exp(power) ≥ 1/255  ⇔  −power ≤ ln(255·opacity)
        let budget = (sp.opacity / alpha_min).ln();
        let bbox = if budget > 0.0 {
            let rx = (2.0 * budget * cov[(0, 0)]).sqrt() + 1.0;
            let ry = (2.0 * budget * cov[(1, 1)]).sqrt() + 1.0;
            [
                floor_i32(sp.mean[0] - rx - 0.5),
                floor_i32(sp.mean[1] - ry - 0.5),
                ceil_i32(sp.mean[0] + rx - 0.5),
                ceil_i32(sp.mean[1] + ry - 0.5),
            ]
        } else {
            [0, 0, -1, -1]
        };
        if cull
            && (bbox[2] < 0 || bbox[3] < 0 || bbox[0] >= k.width as i32 || bbox[1] >= k.height as i32 || budget <= 0.0)
        {
            continue;
        }
        out.push(ScreenSplat {
            index: (first_index + offset) as u32,
            depth: sp.depth as f32,
            mean: [sp.mean[0] as f32, sp.mean[1] as f32],
            conic: [conic[0] as f32, conic[1] as f32, conic[2] as f32],
            opacity: sp.opacity as f32,
            color: [sp.color[0] as f32, sp.color[1] as f32, sp.color[2] as f32],
            min_power: (-budget - 1e-3) as f32,
            bbox,
        });
    }
    out
}

/// Stable front-to-back order; equal depths keep scene order.
pub fn sort_by_depth(splats: &mut [ScreenSplat]) {
    // sorting 16-byte keys and gathering once beats moving whole splats
    let mut order: Vec<(u64, u32)> = splats.iter().enumerate().map(|(i, s)| (depth_key(s), i as u32)).collect();
    order.sort_unstable();
    let sorted: Vec<ScreenSplat> = order.iter().map(|&(_, i)| splats[i as usize]).collect();
    splats.copy_from_slice(&sorted);
}

/// `(depth, index)` packed so integer order is `total_cmp` order on depth,
/// then scene order. Keys are unique, so any sort gives the same result.
#[inline]
pub fn depth_key(s: &ScreenSplat) -> u64 {
    let bits = s.depth.to_bits();
    let ordered = if bits >> 31 == 1 { !bits } else { bits | 0x8000_0000 };
    ((ordered as u64) << 32) | s.index as u64
}

/// Per-tile splat lists in depth order (CSR layout).
#[derive(Debug, Clone, PartialEq)]
pub struct TileBins {
    pub tiles_x: u32,
    pub tiles_y: u32,
    offsets: Vec<u32>,
    entries: Vec<u32>,
}

impl TileBins {
    pub fn tile_count(&self) -> usize {
        (self.tiles_x * self.tiles_y) as usize
    }

    /// Positions into the sorted splat slice for one tile.
    pub fn tile(&self, tile: usize) -> &[u32] {
        &self.entries[self.offsets[tile] as usize..self.offsets[tile + 1] as usize]
    }

    pub fn total_entries(&self) -> usize {
        self.entries.len()
    }
}

fn tile_range(s: &ScreenSplat, tiles_x: u32, tiles_y: u32, k: &CameraIntrinsics) -> Option<[u32; 4]> {
    let x0 = s.bbox[0].max(0);
    let y0 = s.bbox[1].max(0);
    let x1 = s.bbox[2].min(k.width as i32 - 1);
    let y1 = s.bbox[3].min(k.height as i32 - 1);
    if x0 > x1 || y0 > y1 {
        return None;
    }
    let t = TILE_SIZE as i32;
    Some([
        (x0 / t) as u32,
        (y0 / t) as u32,
        ((x1 / t) as u32).min(tiles_x - 1),
        ((y1 / t) as u32).min(tiles_y - 1),
    ])
}

/// Bin depth-sorted splats into 16×16 tiles.
pub fn bin_tiles(sorted: &[ScreenSplat], k: &CameraIntrinsics) -> TileBins {
    let tiles_x = k.width.div_ceil(TILE_SIZE);
    let tiles_y = k.height.div_ceil(TILE_SIZE);
    let n_tiles = (tiles_x * tiles_y) as usize;
    let mut counts = vec![0u32; n_tiles + 1];
    for s in sorted {
        if let Some([tx0, ty0, tx1, ty1]) = tile_range(s, tiles_x, tiles_y, k) {
            for ty in ty0..=ty1 {
                for tx in tx0..=tx1 {
                    counts[(ty * tiles_x + tx) as usize + 1] += 1;
                }
            }
        }
    }
    for i in 1..counts.len() {
        counts[i] += counts[i - 1];
    }
    let offsets = counts.clone();
    let mut cursor = counts;
    let mut entries = vec![0u32; offsets[n_tiles] as usize];
    for (pos, s) in sorted.iter().enumerate() {
        if let Some([tx0, ty0, tx1, ty1]) = tile_range(s, tiles_x, tiles_y, k) {
            for ty in ty0..=ty1 {
                for tx in tx0..=tx1 {
                    let tile = (ty * tiles_x + tx) as usize;
                    entries[cursor[tile] as usize] = pos as u32;
                    cursor[tile] += 1;
                }
            }
        }
    }
    TileBins { tiles_x, tiles_y, offsets, entries }
}

/// Conservative per-row chord of a splat's cutoff ellipse.
///
/// With `dx = mean_x − (x + ½)` the exponent test `power ≥ m` reads
/// `½a·dx² + b·dy·dx + ½c·dy² + m ≤ 0`. The chord is computed in f64 for a
/// slightly lowered `m`; the slack dwarfs the f32 rounding of the per-pixel
/// test, so every pixel that passes that test lies inside the chord.
struct RowChord {
    a: f64,
    b: f64,
    inv_a: f64,
    /// `b² − a·c`, the `dy²` coefficient of the discriminant.
    disc_dy2: f64,
    /// `−2a·m`, the constant term of the discriminant.
    disc_0: f64,
    center: f64,
}

/// `floor` and `ceil` to `i32` without a libm call (the baseline x86-64
/// target has no rounding instruction). Both saturate like `as i32`.
#[inline]
fn floor_i32(v: f64) -> i32 {
    let t = v as i32;
    if (t as f64) > v {
        t.saturating_sub(1)
    } else {
        t
    }
}

#[inline]
fn ceil_i32(v: f64) -> i32 {
    let t = v as i32;
    if (t as f64) < v {
        t.saturating_add(1)
    } else {
        t
    }
}

impl RowChord {
    #[inline]
    fn new(s: &ScreenSplat) -> Self {
        let (a, b, c) = (s.conic[0] as f64, s.conic[1] as f64, s.conic[2] as f64);
        let m = s.min_power as f64 * (1.0 + 1e-3) - 1e-3;
        Self { a, b, inv_a: 1.0 / a, disc_dy2: b * b - a * c, disc_0: -2.0 * a * m, center: s.mean[0] as f64 - 0.5 }
    }

    /// Columns of the row at vertical offset `dy`, clipped to `[lo, hi]`.
    #[inline]
    fn span(&self, dy: f32, lo: i32, hi: i32) -> Option<(i32, i32)> {
        let dy = dy as f64;
        let disc = self.disc_dy2 * dy * dy + self.disc_0;
        if !(self.a > 0.0) {
            // degenerate conic: keep the whole clipped box
            return Some((lo, hi));
        }
        if !(disc >= 0.0) {
            return None;
        }
        let half = disc.sqrt() * self.inv_a;
        let mid = self.center + self.b * dy * self.inv_a;
        let x0 = ceil_i32(mid - half).max(lo);
        let x1 = floor_i32(mid + half).min(hi);
        (x0 <= x1).then_some((x0, x1))
    }
}

/// Composite splats in the given order at pixel center `(px, py)`.
#[inline]
fn shade<'a>(px: f32, py: f32, splats: impl Iterator<Item = &'a ScreenSplat>, bg: [f32; 3]) -> [u8; 3] {
    let mut t = 1.0f32;
    let mut c = [0.0f32; 3];
    for s in splats {
        let dx = s.mean[0] - px;
        let dy = s.mean[1] - py;
        let power = -0.5 * (s.conic[0] * dx * dx + s.conic[2] * dy * dy) - s.conic[1] * dx * dy;
        if power > 0.0 || power < s.min_power {
            continue;
        }
        let alpha = (s.opacity * power.exp()).min(ALPHA_MAX);
        if alpha < ALPHA_MIN {
            continue;
        }
        let w = alpha * t;
        c[0] += s.color[0] * w;
        c[1] += s.color[1] * w;
        c[2] += s.color[2] * w;
        t *= 1.0 - alpha;
        if t < TRANSMITTANCE_MIN {
            break;
        }
    }
    [quantize(c[0] + t * bg[0]), quantize(c[1] + t * bg[1]), quantize(c[2] + t * bg[2])]
}

/// Rasterize one tile into `out`, a row-major RGB buffer of the tile's
/// clipped size (`width × height × 3`). Returns the tile's pixel rectangle
/// `(x0, y0, width, height)`.
pub fn rasterize_tile(
    sorted: &[ScreenSplat],
    bins: &TileBins,
    tile: usize,
    k: &CameraIntrinsics,
    background: &[f64; 3],
    out: &mut Vec<u8>,
) -> (u32, u32, u32, u32) {
    let tx = tile as u32 % bins.tiles_x;
    let ty = tile as u32 / bins.tiles_x;
    let x0 = tx * TILE_SIZE;
    let y0 = ty * TILE_SIZE;
    let w = TILE_SIZE.min(k.width - x0);
    let h = TILE_SIZE.min(k.height - y0);
    let bg = background_f32(background);
    // splat-major: each splat touches only its footprint inside the tile.
    // Per pixel the blend order and arithmetic match `shade`.
    let mut color = [[0.0f32; 3]; (TILE_SIZE * TILE_SIZE) as usize];
    let mut trans = [1.0f32; (TILE_SIZE * TILE_SIZE) as usize];
    let mut open = (w * h) as usize;
    let (tile_x1, tile_y1) = ((x0 + w - 1) as i32, (y0 + h - 1) as i32);
    for &i in bins.tile(tile) {
        let s = &sorted[i as usize];
        let bx0 = s.bbox[0].max(x0 as i32);
        let by0 = s.bbox[1].max(y0 as i32);
        let bx1 = s.bbox[2].min(tile_x1);
        let by1 = s.bbox[3].min(tile_y1);
        if bx0 > bx1 {
            continue;
        }
        let chord = RowChord::new(s);
        for y in by0..=by1 {
            let dy = s.mean[1] - (y as f32 + 0.5);
            let Some((sx0, sx1)) = chord.span(dy, bx0, bx1) else {
                continue;
            };
            let cdy2 = s.conic[2] * dy * dy;
            let row = ((y as u32 - y0) * TILE_SIZE) as usize;
            let span = row + (sx0 - x0 as i32) as usize..row + (sx1 - x0 as i32) as usize + 1;
            for ((t, c), x) in trans[span.clone()].iter_mut().zip(&mut color[span]).zip(sx0..) {
                if *t < TRANSMITTANCE_MIN {
                    continue;
                }
                let dx = s.mean[0] - (x as f32 + 0.5);
                let power = -0.5 * (s.conic[0] * dx * dx + cdy2) - s.conic[1] * dx * dy;
                if power > 0.0 || power < s.min_power {
                    continue;
                }
                let alpha = (s.opacity * power.exp()).min(ALPHA_MAX);
                if alpha < ALPHA_MIN {
                    continue;
                }
                let wgt = alpha * *t;
                c[0] += s.color[0] * wgt;
                c[1] += s.color[1] * wgt;
                c[2] += s.color[2] * wgt;
                *t *= 1.0 - alpha;
                if *t < TRANSMITTANCE_MIN {
                    open -= 1;
                }
            }
        }
        if open == 0 {
            break;
        }
    }
    out.clear();
    out.reserve((w * h * 3) as usize);
    for y in 0..h {
        for x in 0..w {
            let p = (y * TILE_SIZE + x) as usize;
            let (c, t) = (color[p], trans[p]);
            out.extend_from_slice(&[quantize(c[0] + t * bg[0]), quantize(c[1] + t * bg[1]), quantize(c[2] + t * bg[2])]);
        }
    }
    (x0, y0, w, h)
}

/// View for a body pose, camera mount and the scene's alignment.
pub fn camera_view(scene: &SplatScene, body_pose: &Pose, camera_to_body: &RigidTransform) -> ViewTransform {
    let camera = body_camera_pose(body_pose, camera_to_body);
    ViewTransform::new(&camera, &scene.alignment)
}

/// Tiled renderer, single-threaded.
pub fn render(scene: &SplatScene, body_pose: &Pose, camera_to_body: &RigidTransform, k: &CameraIntrinsics) -> Image {
    let view = camera_view(scene, body_pose, camera_to_body);
    let mut splats = prepare_splats(&scene.gaussians, 0, &view, k, true);
    sort_by_depth(&mut splats);
    let bins = bin_tiles(&splats, k);
    let mut image = Image::filled(k.width, k.height, [0; 3]);
    let mut buf = Vec::new();
    for tile in 0..bins.tile_count() {
        let (x0, y0, w, h) = rasterize_tile(&splats, &bins, tile, k, &scene.background, &mut buf);
        blit(&mut image, &buf, x0, y0, w, h);
    }
    image
}

/// Copy a rasterized tile into `image` at `(x0, y0)`.
pub fn blit(image: &mut Image, tile: &[u8], x0: u32, y0: u32, w: u32, h: u32) {
    for row in 0..h {
        let dst = (((y0 + row) * image.width + x0) * 3) as usize;
        let src = (row * w * 3) as usize;
        image.data[dst..dst + (w * 3) as usize].copy_from_slice(&tile[src..src + (w * 3) as usize]);
    }
}

/// Brute-force oracle: every pixel blends every projected splat in depth
/// order. No tiling, no footprint culling.
pub fn render_reference(
    scene: &SplatScene,
    body_pose: &Pose,
    camera_to_body: &RigidTransform,
    k: &CameraIntrinsics,
) -> Image {
    let view = camera_view(scene, body_pose, camera_to_body);
    let mut splats = prepare_splats(&scene.gaussians, 0, &view, k, false);
    sort_by_depth(&mut splats);
    let bg = background_f32(&scene.background);
    let mut image = Image::filled(k.width, k.height, [0; 3]);
    for y in 0..k.height {
        for x in 0..k.width {
            let rgb = shade(x as f32 + 0.5, y as f32 + 0.5, splats.iter(), bg);
            image.set_pixel(x, y, rgb);
        }
    }
    image
}
