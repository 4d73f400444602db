//! Sparse voxel inference engine for multi-level 3D object detection with
//! dynamic spatial pruning.
//!
//! The crate is organized around an immutable [`voxgrid::SparseTensor`]:
//! a canonically ordered set of occupied voxel coordinates with one feature
//! row per voxel. On top of that sit
//!
//! * [`sconv`] — sparse convolution operators (submanifold stride-1,
//!   kernel-1 downsampling, generative transposed upsampling, folded
//!   per-channel affine + ReLU),
//! * [`backbone`] — the high-resolution residual encoder producing one
//!   feature map per pyramid level,
//! * [`decoder`] — the pruning decoder: partial addition, per-level keep
//!   scores, threshold/weak pruning, generative upsampling and the shared
//!   detection head,
//! * [`targets`] — volume-based level assignment, keep-mask ground truth
//!   and per-voxel box targets,
//! * [`losses`] — focal / DIoU / total loss evaluation (no gradients),
//! * [`postproc`] — box decoding, axis-aligned IoU, class-wise 3D NMS,
//! * [`model`] — the full parameter set, its flat named-tensor registry and
//!   seeded initialization,
//! * [`oracle`] — independent brute-force references (dense convolution,
//!   receptive-field enumeration, naive target generation) plus the
//!   self-check suites built on them.
//!
//! Everything is deterministic: tensors keep their voxels sorted by
//! `(z, y, x)`, accumulation orders are fixed, and parallel execution (std
//! builds only, capped via [`parallel::set_max_threads`]) never changes
//! results bit-for-bit.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod backbone;
pub mod config;
pub mod decoder;
pub mod error;
pub mod losses;
mod math;
pub mod model;
pub mod oracle;
pub mod parallel;
pub mod postproc;
pub mod sconv;
pub mod targets;
pub mod voxgrid;

pub use config::{PipelineConfig, PipelineMode};
pub use error::{EngineError, Result};
pub use voxgrid::{SparseTensor, VoxelCoord};
