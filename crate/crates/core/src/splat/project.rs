//! EWA projection of 3D Gaussians onto the image plane.

use nalgebra::{Matrix2, Matrix2x3, Matrix3};
#[allow(unused_imports)]
use num_traits::Float;

use super::gaussian::{Gaussian3D, Similarity};
use crate::geom::{CameraIntrinsics, Pose, Vec3};

/// Gaussians whose mean is at or closer than this camera depth are dropped.
pub const NEAR_PLANE: f64 = 0.01;
/// Added to the diagonal of every screen-space covariance (pixels²).
pub const COV2D_DILATION: f64 = 0.3;
/// Jacobian evaluation is clamped to this multiple of the half field of view.
const FRUSTUM_GUARD: f64 = 1.3;

/// Affine map from splat-frame coordinates into the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewTransform {
    pub linear: Matrix3<f64>,
    pub offset: Vec3,
}

impl ViewTransform {
    /// `camera` is the camera pose in the world frame; `alignment` maps the
    /// world frame into the splat frame.
    pub fn new(camera: &Pose, alignment: &Similarity) -> Self {
        let r_cam = camera.rotation.to_rotation_matrix();
        let r_align = alignment.rotation.to_rotation_matrix();
        let linear = r_cam.transpose() * r_align.transpose() / alignment.scale;
        let offset = -(r_cam.transpose()
            * (r_align.transpose() * alignment.translation / alignment.scale + camera.translation));
        Self { linear, offset }
    }

    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.linear * p + self.offset
    }
}

/// Screen-space Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Splat2D {
    pub mean: [f64; 2],
    /// Dilated 2×2 covariance, pixels².
    pub cov: Matrix2<f64>,
    pub depth: f64,
    pub opacity: f64,
    pub color: [f64; 3],
}

/// Project with an explicit view and a precomputed 3D covariance.
pub fn project_with_view(
    g: &Gaussian3D,
    cov3d: &Matrix3<f64>,
    view: &ViewTransform,
    k: &CameraIntrinsics,
) -> Option<Splat2D> {
    let t = view.to_camera(&g.mean);
    if !(t.z > NEAR_PLANE) {
        return None;
    }
    let inv_z = 1.0 / t.z;
    let mean = [k.fx * t.x * inv_z + k.cx, k.fy * t.y * inv_z + k.cy];

    let lim_lo_x = -FRUSTUM_GUARD * k.cx / k.fx;
    let lim_hi_x = FRUSTUM_GUARD * (k.width as f64 - k.cx) / k.fx;
    let lim_lo_y = -FRUSTUM_GUARD * k.cy / k.fy;
    let lim_hi_y = FRUSTUM_GUARD * (k.height as f64 - k.cy) / k.fy;
    let tx = (t.x * inv_z).clamp(lim_lo_x, lim_hi_x) * t.z;
    let ty = (t.y * inv_z).clamp(lim_lo_y, lim_hi_y) * t.z;

    let j = Matrix2x3::new(
        k.fx * inv_z,
        0.0,
        -k.fx * tx * inv_z * inv_z,
        0.0,
        k.fy * inv_z,
        -k.fy * ty * inv_z * inv_z,
    );
    let m = j * view.linear;
    let mut cov = m * cov3d * m.transpose();
    cov[(0, 1)] = 0.5 * (cov[(0, 1)] + cov[(1, 0)]);
    cov[(1, 0)] = cov[(0, 1)];
    cov[(0, 0)] += COV2D_DILATION;
    cov[(1, 1)] += COV2D_DILATION;
    if !(cov.determinant() > 0.0) {
        return None;
    }
    Some(Splat2D { mean, cov, depth: t.z, opacity: g.opacity, color: g.color })
}

/// Project a world-frame Gaussian for a camera at `camera` (camera-to-world).
pub fn project_gaussian(g: &Gaussian3D, camera: &Pose, k: &CameraIntrinsics) -> Option<Splat2D> {
    let view = ViewTransform::new(camera, &Similarity::IDENTITY);
    project_with_view(g, &g.covariance(), &view, k)
}
