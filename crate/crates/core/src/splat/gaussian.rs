use alloc::vec::Vec;

use nalgebra::Matrix3;
#[allow(unused_imports)]
use num_traits::Float;

use crate::geom::{Pose, Quat, Vec3};

/// Zeroth-order spherical-harmonic basis constant.
pub const SH_C0: f64 = 0.28209479177;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn sh_to_color(dc: f64) -> f64 {
    0.5 + SH_C0 * dc
}

pub fn color_to_sh(color: f64) -> f64 {
    (color - 0.5) / SH_C0
}

/// One anisotropic Gaussian, activated values (metric scale, opacity in
/// `[0, 1]`, linear RGB color).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian3D {
    pub mean: Vec3,
    /// Per-axis standard deviation.
    pub scale: Vec3,
    pub rotation: Quat,
    pub opacity: f64,
    pub color: [f64; 3],
}

impl Gaussian3D {
    pub fn isotropic(mean: Vec3, sigma: f64, opacity: f64, color: [f64; 3]) -> Self {
        Self { mean, scale: Vec3::repeat(sigma), rotation: Quat::IDENTITY, opacity, color }
    }

    /// `Σ = R diag(s²) Rᵀ`
    pub fn covariance(&self) -> Matrix3<f64> {
        let r = self.rotation.to_rotation_matrix();
        let s2 = self.scale.component_mul(&self.scale);
        // Σ_ij = Σ_k R_ik R_jk s_k², filled symmetrically
        let mut cov = Matrix3::zeros();
        for i in 0..3 {
            for j in i..3 {
                let v = r[(i, 0)] * r[(j, 0)] * s2.x + r[(i, 1)] * r[(j, 1)] * s2.y + r[(i, 2)] * r[(j, 2)] * s2.z;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        cov
    }

    /// Same Gaussian moved by a rigid transform.
    pub fn transformed(&self, t: &Pose) -> Self {
        Self {
            mean: t.transform_point(&self.mean),
            rotation: t.rotation.multiply(&self.rotation).normalized(),
            ..*self
        }
    }
}

/// Uniform scale, rotation and translation: `p_splat = s·R·p_world + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Quat,
    pub translation: Vec3,
}

impl Default for Similarity {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Similarity {
    pub const IDENTITY: Similarity =
        Similarity { scale: 1.0, rotation: Quat::IDENTITY, translation: Vec3::new(0.0, 0.0, 0.0) };

    pub fn apply(&self, p_world: &Vec3) -> Vec3 {
        self.scale * self.rotation.rotate(p_world) + self.translation
    }

    pub fn apply_inverse(&self, p_splat: &Vec3) -> Vec3 {
        self.rotation.conjugate().rotate(&((p_splat - self.translation) / self.scale))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplatScene {
    pub gaussians: Vec<Gaussian3D>,
    /// World-to-splat-frame alignment.
    pub alignment: Similarity,
    pub background: [f64; 3],
}

impl Default for SplatScene {
    fn default() -> Self {
        Self { gaussians: Vec::new(), alignment: Similarity::IDENTITY, background: [0.0; 3] }
    }
}

impl SplatScene {
    pub fn new(gaussians: Vec<Gaussian3D>) -> Self {
        Self { gaussians, ..Self::default() }
    }

    pub fn with_background(mut self, background: [f64; 3]) -> Self {
        self.background = background;
        self
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }
}
