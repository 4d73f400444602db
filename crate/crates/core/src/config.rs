//! Pipeline configuration: pruning threshold, target-generation constants,
//! voxel sizes, channel widths and postprocessing settings.

use alloc::format;
use alloc::string::String;

use crate::error::{EngineError, Result};
use crate::targets::LevelThresholds;

/// Forward-pass flavour: threshold pruning for inference, weak pruning for
/// training-time loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineMode {
    Inference,
    Training,
}

/// All tunables of the pipeline. [`Default`] carries the reference values;
/// desk-scale runs typically shrink `residual_units` and channel widths.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Keep-probability threshold: voxels scoring below `tau` are pruned.
    pub tau: f64,
    /// Keep-mask cube scale; the cube around an object at level `j` has
    /// world side `r * voxel_size(j)`.
    pub r: f64,
    /// Volume-threshold scale: level `i` starts at `n_vol * S_i^3`.
    pub n_vol: f64,
    /// Weight of the keep-mask loss in the total loss.
    pub lambda: f64,
    /// Weak-pruning voxel budget used during training-mode forwards.
    pub n_max: usize,
    /// Edge length (meters) of the raw scene quantization.
    pub base_voxel: f64,
    /// Channels of the preencoder output (level 0).
    pub stem_channels: usize,
    /// Channels of every pyramid level 1..=4.
    pub feat_channels: usize,
    /// Number of object classes predicted by the classification branch.
    pub num_classes: usize,
    /// Residual units per backbone stage.
    pub residual_units: [usize; 4],
    /// IoU threshold for class-wise NMS fusion.
    pub nms_iou: f64,
    /// Minimum sigmoid score for a decoded detection to be emitted.
    pub score_threshold: f64,
    pub mode: PipelineMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tau: 0.3,
            r: 13.0,
            n_vol: 27.0,
            lambda: 0.01,
            n_max: 100_000,
            base_voxel: 0.01,
            stem_channels: 64,
            feat_channels: 128,
            num_classes: 18,
            residual_units: [3, 4, 6, 3],
            nms_iou: 0.5,
            score_threshold: 0.01,
            mode: PipelineMode::Inference,
        }
    }
}

impl PipelineConfig {
    /// A small configuration for tests and examples: same structure, narrow
    /// channels and one residual unit per stage.
    pub fn desk() -> Self {
        Self {
            stem_channels: 8,
            feat_channels: 16,
            num_classes: 5,
            residual_units: [1, 1, 1, 1],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn req(ok: bool, msg: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(EngineError::Config(String::from(msg)))
            }
        }
        req(
            self.tau.is_finite() && (0.0..=1.0).contains(&self.tau),
            "tau must lie in [0, 1]",
        )?;
        req(self.r.is_finite() && self.r > 0.0, "r must be positive")?;
        req(
            self.n_vol.is_finite() && self.n_vol > 0.0,
            "n_vol must be positive",
        )?;
        req(
            self.lambda.is_finite() && self.lambda >= 0.0,
            "lambda must be non-negative",
        )?;
        req(self.n_max > 0, "n_max must be positive")?;
        req(
            self.base_voxel.is_finite() && self.base_voxel > 0.0,
            "base_voxel must be positive",
        )?;
        req(self.stem_channels > 0, "stem_channels must be positive")?;
        req(self.feat_channels > 0, "feat_channels must be positive")?;
        req(self.num_classes > 0, "num_classes must be positive")?;
        req(
            self.residual_units.iter().all(|&u| u > 0),
            "residual_units must be positive",
        )?;
        req(
            self.nms_iou.is_finite() && (0.0..=1.0).contains(&self.nms_iou),
            "nms_iou must lie in [0, 1]",
        )?;
        req(
            self.score_threshold.is_finite(),
            "score_threshold must be finite",
        )?;
        Ok(())
    }

    /// Voxel edge length of pyramid `level`; the raw scene sits at `-1`.
    pub fn voxel_size(&self, level: i32) -> f64 {
        debug_assert!((-1..=4).contains(&level), "level {level} out of range");
        self.base_voxel * exp2_i(level + 1)
    }

    /// Hidden width of the per-level keep-score MLPs (half the feature
    /// width, 64 at the reference 128 channels).
    pub fn prune_hidden(&self) -> usize {
        (self.feat_channels / 2).max(1)
    }

    /// Volume thresholds separating the four detection levels.
    pub fn level_thresholds(&self) -> LevelThresholds {
        LevelThresholds::new(self.n_vol, |i| self.voxel_size(i))
    }

    pub fn describe(&self) -> String {
        format!(
            "tau={} r={} n_vol={} lambda={} n_max={}",
            self.tau, self.r, self.n_vol, self.lambda, self.n_max
        )
    }
}

fn exp2_i(e: i32) -> f64 {
    if e >= 0 {
        (1u64 << e) as f64
    } else {
        1.0 / (1u64 << -e) as f64
    }
}
