//! File formats, multi-threaded rendering, dataset synthesis and the
//! command-line front end for the splat flight simulator. The numerics live
//! in `splatsim-core`.

// `!(x > 0.0)` is deliberate: NaN must fail these checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod dataset;
pub mod image_io;
pub mod inputs;
pub mod ply;
pub mod render;
pub mod report;
pub mod states_csv;

pub use splatsim_core as core;
