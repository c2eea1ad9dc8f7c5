//! Numerical core of the splat flight simulator.
//!
//! Everything here is `no_std` (with `alloc`): quaternion geometry, the
//! 10-state thrust/body-rate quadrotor model, Gaussian-splat projection and
//! tile rasterization, minimum-snap planning with flatness inversion, the
//! SQP tracking expert, domain-randomized rollout seeding and the evaluation
//! metrics. File formats, threading and the command line live in the
//! `splatsim` crate.

#![no_std]
// `!(x > 0.0)` is deliberate: NaN must fail these checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod analysis;
pub mod datagen;
pub mod dynamics;
pub mod expert;
pub mod flatness;
pub mod geom;
pub mod splat;

pub use dynamics::{ControlInput, DroneParams, DroneState, GRAVITY};
pub use geom::{CameraIntrinsics, Pose, Quat, RigidTransform, Vec3};
