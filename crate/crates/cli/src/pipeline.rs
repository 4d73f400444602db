//! Glue between files and the engine: scene forwards, ground-truth-driven
//! keep-score overrides, and target generation on pipeline coordinates.

use anyhow::{bail, Result};
use dsp3d_core::backbone::{backbone_coord_pyramid, backbone_forward};
use dsp3d_core::decoder::{decoder_forward, DecoderOutput, ForwardOptions};
use dsp3d_core::model::ModelParams;
use dsp3d_core::targets::{
    assign_box_targets, assign_levels, gen_keep_mask, Box3D, KeepMaskGT, LevelTargets,
};
use dsp3d_core::voxgrid::{quantize, SparseTensor, VoxelCoord};
use dsp3d_core::PipelineConfig;

/// Quantize a point cloud and run the backbone.
pub fn scene_features(
    points: &[[f64; 3]],
    cfg: &PipelineConfig,
    params: &ModelParams,
) -> Result<[SparseTensor; 4]> {
    let scene = quantize(points, cfg.base_voxel)?;
    Ok(backbone_forward(&scene, &params.backbone)?)
}

/// Full forward pass from points to decoder output.
pub fn forward_scene(
    points: &[[f64; 3]],
    cfg: &PipelineConfig,
    params: &ModelParams,
    opts: &ForwardOptions,
) -> Result<DecoderOutput> {
    let feats = scene_features(points, cfg, params)?;
    Ok(decoder_forward(&feats, &params.decoder, opts)?)
}

/// Keep-score override that replays the ground-truth keep masks: voxels
/// inside an object's receptive-field cube score 1, everything else 0.
pub fn gt_mask_scores<'a>(
    cfg: &'a PipelineConfig,
    leveled_boxes: &'a [(Box3D, u8)],
) -> impl Fn(i32, &SparseTensor) -> Vec<f32> + 'a {
    move |level, merged| {
        let mask = gen_keep_mask(
            level,
            merged.voxel_size(),
            merged.coords(),
            leveled_boxes,
            cfg.r,
            |j| cfg.voxel_size(j),
        );
        mask.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect()
    }
}

/// Pair every box with its volume-assigned level.
pub fn leveled_boxes(cfg: &PipelineConfig, boxes: &[Box3D]) -> Vec<(Box3D, u8)> {
    let levels = assign_levels(boxes, &cfg.level_thresholds());
    boxes.iter().copied().zip(levels).collect()
}

fn children_union(coords: &[VoxelCoord]) -> Vec<VoxelCoord> {
    let mut out = Vec::with_capacity(coords.len() * 27);
    for c in coords {
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    out.push(VoxelCoord::new(2 * c.x + dx, 2 * c.y + dy, 2 * c.z + dz));
                }
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Coordinates of the merged maps a training-mode forward visits, derived
/// from the scene geometry alone: level 4 uses the backbone coordinates,
/// every finer level the children of the previous one. Valid while the
/// voxel counts stay within the weak-pruning budget — beyond it the
/// training forward would truncate by learned score and the walk would
/// need weights.
pub fn training_coords(
    cfg: &PipelineConfig,
    scene_coords: &[VoxelCoord],
) -> Result<[(i32, Vec<VoxelCoord>); 4]> {
    let pyramid = backbone_coord_pyramid(scene_coords);
    let m4 = pyramid[3].clone();
    let m3 = children_union(&m4);
    let m2 = children_union(&m3);
    let m1 = children_union(&m2);
    for (level, coords) in [(4, &m4), (3, &m3), (2, &m2), (1, &m1)] {
        if coords.len() > cfg.n_max {
            bail!(
                "level {level} has {} voxels, beyond the weak-pruning budget n_max = {}; \
                 target generation without weights is only defined within the budget",
                coords.len(),
                cfg.n_max
            );
        }
    }
    Ok([(1, m1), (2, m2), (3, m3), (4, m4)])
}

/// Keep masks (levels 2..=4) and box targets (levels 1..=4) on the given
/// per-level coordinate lists.
pub fn build_targets(
    cfg: &PipelineConfig,
    coords_by_level: &[(i32, Vec<VoxelCoord>)],
    boxes: &[Box3D],
) -> (Vec<u8>, Vec<KeepMaskGT>, Vec<LevelTargets>) {
    let levels = assign_levels(boxes, &cfg.level_thresholds());
    let leveled: Vec<(Box3D, u8)> = boxes.iter().copied().zip(levels.iter().copied()).collect();
    let mut masks = Vec::new();
    let mut targets = Vec::new();
    for (level, coords) in coords_by_level {
        if (2..=4).contains(level) {
            masks.push(gen_keep_mask(
                *level,
                cfg.voxel_size(*level),
                coords,
                &leveled,
                cfg.r,
                |j| cfg.voxel_size(j),
            ));
        }
        targets.push(assign_box_targets(
            *level,
            cfg.voxel_size(*level),
            coords,
            boxes,
            &levels,
        ));
    }
    (levels, masks, targets)
}
