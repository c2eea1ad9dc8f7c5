//! Quaternions, rigid transforms and the pinhole camera.
//!
//! Conventions used throughout the crate:
//!
//! * Quaternions are Hamilton, stored `(x, y, z, w)`. A state orientation
//!   `q_BW` rotates body-frame vectors into the world frame:
//!   `v_W = q ⊗ v_B ⊗ q*`.
//! * The world frame has gravity along `+z` (z points down). The body frame
//!   is forward-right-down, so at hover `z_B = z_W` and thrust acts along
//!   `-z_B`.
//! * The camera frame looks along `+z`, with `x` right and `y` down.
//! * A [`RigidTransform`] `T_A^B` maps coordinates in frame `A` to frame `B`;
//!   a [`Pose`] is the transform from a local frame into the world.

use core::ops::Mul;

use nalgebra::{Matrix3, Vector3, Vector4};
#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
}

/// Unit quaternion, Hamilton convention, `(x, y, z, w)` layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat { x: 0.0, y: 0.0, z: 0.0, w: 1.0 };

    pub const fn new(x: f64, y: f64, z: f64, w: f64) -> Self {
        Self { x, y, z, w }
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis / n;
        Self::new(a.x * s, a.y * s, a.z * s, c)
    }

    /// Exponential map of a rotation vector (axis times angle).
    pub fn from_rotation_vector(rv: Vec3) -> Self {
        let angle = rv.norm();
        if angle < 1e-12 {
            // second-order accurate near zero
            let h = 0.5 * rv;
            return Self::new(h.x, h.y, h.z, 1.0).normalized();
        }
        Self::from_axis_angle(rv, angle)
    }

    /// Quaternion of a proper rotation matrix (Shepperd's method).
    pub fn from_rotation_matrix(m: &Matrix3<f64>) -> Self {
        let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let q = if trace > 0.0 {
            let s = 2.0 * (trace + 1.0).sqrt();
            Self::new(
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
                0.25 * s,
            )
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = 2.0 * (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt();
            Self::new(
                0.25 * s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(2, 1)] - m[(1, 2)]) / s,
            )
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = 2.0 * (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt();
            Self::new(
                (m[(0, 1)] + m[(1, 0)]) / s,
                0.25 * s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
            )
        } else {
            let s = 2.0 * (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt();
            Self::new(
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                0.25 * s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            )
        };
        q.normalized().canonical()
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.z, self.w]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_vector4(&self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.z, self.w)
    }

    pub fn from_vector4(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &Quat) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z + self.w * other.w
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self::new(self.x / n, self.y / n, self.z / n, self.w / n)
    }

    pub fn conjugate(&self) -> Self {
        Self::new(-self.x, -self.y, -self.z, self.w)
    }

    pub fn neg(&self) -> Self {
        Self::new(-self.x, -self.y, -self.z, -self.w)
    }

    /// Representative with `w >= 0`.
    pub fn canonical(&self) -> Self {
        if self.w < 0.0 {
            self.neg()
        } else {
            *self
        }
    }

    /// `self` or `-self`, whichever lies in the same hemisphere as `reference`.
    pub fn aligned_to(&self, reference: &Quat) -> Self {
        if self.dot(reference) < 0.0 {
            self.neg()
        } else {
            *self
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.w.is_finite()
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        let v = self.vector().norm();
        2.0 * v.atan2(self.w.abs())
    }

    /// Hamilton product `self ⊗ rhs`.
    pub fn multiply(&self, rhs: &Quat) -> Quat {
        let (a, b) = (self, rhs);
        Quat::new(
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        )
    }

    /// `q ⊗ v ⊗ q*` for a unit quaternion.
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        let u = self.vector();
        let t = 2.0 * u.cross(v);
        v + self.w * t + u.cross(&t)
    }

    pub fn to_rotation_matrix(&self) -> Matrix3<f64> {
        let (x, y, z, w) = (self.x, self.y, self.z, self.w);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Heading of the rotated body x-axis about world z.
    pub fn yaw(&self) -> f64 {
        let (x, y, z, w) = (self.x, self.y, self.z, self.w);
        (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z))
    }
}

impl Mul for Quat {
    type Output = Quat;

    fn mul(self, rhs: Quat) -> Quat {
        self.multiply(&rhs)
    }
}

pub fn quat_multiply(a: Quat, b: Quat) -> Quat {
    a.multiply(&b)
}

pub fn rotate_vector(q: Quat, v: Vec3) -> Vec3 {
    q.rotate(&v)
}

/// Rotation plus translation. Read as `T_A^B`: maps points in `A` into `B`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RigidTransform {
    pub rotation: Quat,
    pub translation: Vec3,
}

/// Placement of a local frame (body or camera) in the world.
pub type Pose = RigidTransform;

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: Quat::IDENTITY,
        translation: Vector3::new(0.0, 0.0, 0.0),
    };

    pub fn new(rotation: Quat, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(Quat::IDENTITY, translation)
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation.multiply(&other.rotation).normalized(),
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let r = self.rotation.conjugate();
        RigidTransform { rotation: r, translation: -r.rotate(&self.translation) }
    }
}

/// Camera pose in the world given the body pose and the camera-to-body
/// mounting transform `T_C^B`.
pub fn body_camera_pose(body: &Pose, camera_to_body: &RigidTransform) -> Pose {
    body.compose(camera_to_body)
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeomError> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        if self.width == 0 || self.height == 0 {
            return Err(GeomError::InvalidIntrinsics("image size must be positive"));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeomError::InvalidIntrinsics("focal lengths must be positive"));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64) {
            return Err(GeomError::InvalidIntrinsics("cx must lie inside the image"));
        }
        if !(self.cy > 0.0 && self.cy < self.height as f64) {
            return Err(GeomError::InvalidIntrinsics("cy must lie inside the image"));
        }
        Ok(())
    }

    /// Same field of view at a different resolution.
    pub fn scaled_to(&self, width: u32, height: u32) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Project a camera-frame point. `None` when the point is not in front of
/// the camera.
pub fn project_point(p_cam: &Vec3, k: &CameraIntrinsics) -> Option<Projection> {
    if !(p_cam.z > 0.0) {
        return None;
    }
    Some(Projection {
        u: k.fx * p_cam.x / p_cam.z + k.cx,
        v: k.fy * p_cam.y / p_cam.z + k.cy,
        depth: p_cam.z,
    })
}
