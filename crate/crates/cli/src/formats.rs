//! JSON output documents: detections, per-level pruning statistics,
//! training targets and loss breakdowns.

use dsp3d_core::decoder::LevelStats;
use dsp3d_core::losses::LossBreakdown;
use dsp3d_core::postproc::Detection;
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct DetectionJson {
    pub class: u32,
    pub score: f64,
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub level: i32,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct DetectionsFile {
    pub detections: Vec<DetectionJson>,
}

impl DetectionsFile {
    pub fn from_detections(dets: &[Detection]) -> Self {
        Self {
            detections: dets
                .iter()
                .map(|d| DetectionJson {
                    class: d.class_id,
                    score: d.score,
                    center: d.bbox.center,
                    size: d.bbox.size,
                    level: d.level,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LevelStatsJson {
    pub level: i32,
    pub voxels_before_prune: usize,
    pub voxels_after_prune: usize,
    /// Fraction of voxels removed, in `[0, 1]`.
    pub prune_ratio: f64,
    pub wall_time_ms: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StatsTotals {
    pub voxels_before_prune: usize,
    pub voxels_after_prune: usize,
    pub prune_ratio: f64,
    pub wall_time_ms: f64,
}

/// The stats sidecar written next to detection files.
#[derive(Debug, Serialize, Deserialize)]
pub struct StatsFile {
    pub tau: f64,
    pub prune_enabled: bool,
    pub levels: Vec<LevelStatsJson>,
    pub totals: StatsTotals,
}

pub fn prune_ratio(before: usize, after: usize) -> f64 {
    if before == 0 {
        0.0
    } else {
        (before - after) as f64 / before as f64
    }
}

impl StatsFile {
    pub fn new(stats: &[LevelStats; 4], tau: f64, prune_enabled: bool) -> Self {
        let levels: Vec<LevelStatsJson> = stats
            .iter()
            .map(|s| LevelStatsJson {
                level: s.level,
                voxels_before_prune: s.voxels_before_prune,
                voxels_after_prune: s.voxels_after_prune,
                prune_ratio: prune_ratio(s.voxels_before_prune, s.voxels_after_prune),
                wall_time_ms: s.wall_time_ms,
            })
            .collect();
        let before: usize = levels.iter().map(|l| l.voxels_before_prune).sum();
        let after: usize = levels.iter().map(|l| l.voxels_after_prune).sum();
        let time: f64 = levels.iter().map(|l| l.wall_time_ms).sum();
        Self {
            tau,
            prune_enabled,
            levels,
            totals: StatsTotals {
                voxels_before_prune: before,
                voxels_after_prune: after,
                prune_ratio: prune_ratio(before, after),
                wall_time_ms: time,
            },
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AssignmentJson {
    #[serde(rename = "box")]
    pub box_index: usize,
    pub class: u32,
    pub level: u8,
    pub volume: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MaskVoxelJson {
    pub coord: [i32; 3],
    pub keep: u8,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MaskJson {
    pub level: i32,
    pub voxels: Vec<MaskVoxelJson>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PositiveJson {
    pub coord: [i32; 3],
    #[serde(rename = "box")]
    pub box_index: usize,
    pub class: u32,
    pub target: [f64; 6],
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LevelPositivesJson {
    pub level: i32,
    pub voxels: Vec<PositiveJson>,
}

/// Output of the `targets` command. The header echoes the constants the
/// masks were generated with.
#[derive(Debug, Serialize, Deserialize)]
pub struct TargetsFile {
    pub n_vol: f64,
    pub r: f64,
    pub assignments: Vec<AssignmentJson>,
    pub keep_masks: Vec<MaskJson>,
    pub positives: Vec<LevelPositivesJson>,
}

/// Output of the `loss-eval` command.
#[derive(Debug, Serialize, Deserialize)]
pub struct LossFile {
    /// Levels 1..=4.
    pub box_losses: [f64; 4],
    /// Levels 2..=4.
    pub keep_losses: [f64; 3],
    pub lambda: f64,
    pub total: f64,
}

impl LossFile {
    pub fn from_breakdown(b: &LossBreakdown) -> Self {
        Self {
            box_losses: b.box_losses,
            keep_losses: b.keep_losses,
            lambda: b.lambda,
            total: b.total,
        }
    }
}
