//! Training-target generation: volume-based level assignment, keep-mask
//! ground truth from receptive-field cubes, and per-voxel box targets.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{EngineError, Result};
use crate::math;
use crate::voxgrid::VoxelCoord;

/// Number of nearest voxels marked positive per ground-truth box.
pub const K_NEAREST: usize = 6;

/// An axis-aligned world-space box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3D {
    /// Center in meters.
    pub center: [f64; 3],
    /// Extents (w, l, h) in meters, all positive.
    pub size: [f64; 3],
    pub class_id: u32,
}

impl Box3D {
    pub fn new(center: [f64; 3], size: [f64; 3], class_id: u32) -> Result<Self> {
        let ok = center.iter().all(|v| v.is_finite())
            && size.iter().all(|v| v.is_finite() && *v > 0.0);
        if !ok {
            return Err(EngineError::DegenerateBox);
        }
        Ok(Self {
            center,
            size,
            class_id,
        })
    }

    pub fn volume(&self) -> f64 {
        self.size[0] * self.size[1] * self.size[2]
    }

    pub fn min_corner(&self) -> [f64; 3] {
        [
            self.center[0] - 0.5 * self.size[0],
            self.center[1] - 0.5 * self.size[1],
            self.center[2] - 0.5 * self.size[2],
        ]
    }

    pub fn max_corner(&self) -> [f64; 3] {
        [
            self.center[0] + 0.5 * self.size[0],
            self.center[1] + 0.5 * self.size[1],
            self.center[2] + 0.5 * self.size[2],
        ]
    }
}

/// Volume thresholds `V_1..V_5` separating the four levels:
/// `V_1 = 0`, `V_i = n_vol * S_i^3` for `i = 2..4`, `V_5 = +inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelThresholds {
    v: [f64; 5],
}

impl LevelThresholds {
    /// `voxel_size(i)` must return the edge length of level `i`.
    pub fn new(n_vol: f64, voxel_size: impl Fn(i32) -> f64) -> Self {
        let mut v = [0.0; 5];
        for i in 2..=4usize {
            let s = voxel_size(i as i32);
            v[i - 1] = n_vol * s * s * s;
        }
        v[4] = f64::INFINITY;
        Self { v }
    }

    /// `V_i` for `i` in `1..=5`.
    pub fn threshold(&self, i: usize) -> f64 {
        self.v[i - 1]
    }
}

/// The unique level `i` with `V_i <= volume < V_{i+1}`.
pub fn assign_level(bbox: &Box3D, thresholds: &LevelThresholds) -> u8 {
    let vol = bbox.volume();
    for i in 1..=3u8 {
        if vol < thresholds.threshold(i as usize + 1) {
            return i;
        }
    }
    4
}

/// [`assign_level`] over a slice of boxes.
pub fn assign_levels(boxes: &[Box3D], thresholds: &LevelThresholds) -> Vec<u8> {
    boxes.iter().map(|b| assign_level(b, thresholds)).collect()
}

/// Binary keep-mask ground truth on the voxels of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct KeepMaskGT {
    pub level: i32,
    pub coords: Vec<VoxelCoord>,
    pub mask: Vec<bool>,
}

/// Generate the keep mask for level `i`: a voxel is kept when, for some
/// object at a lower level `j < i`, its center lies strictly inside the
/// cube of world side `r * S_j` around the object center:
/// `2 * max_axis |center - object_center| < r * S_j`.
///
/// `object_voxel_size(j)` must return `S_j` for the levels present in
/// `boxes_with_levels`.
pub fn gen_keep_mask(
    level: i32,
    voxel_size: f64,
    coords: &[VoxelCoord],
    boxes_with_levels: &[(Box3D, u8)],
    r: f64,
    object_voxel_size: impl Fn(i32) -> f64,
) -> KeepMaskGT {
    let mut mask = vec![false; coords.len()];
    for (bbox, j) in boxes_with_levels {
        if i32::from(*j) >= level {
            continue;
        }
        let side = r * object_voxel_size(i32::from(*j));
        for (vi, c) in coords.iter().enumerate() {
            if mask[vi] {
                continue;
            }
            let center = c.center(voxel_size);
            let d = (center[0] - bbox.center[0])
                .abs()
                .max((center[1] - bbox.center[1]).abs())
                .max((center[2] - bbox.center[2]).abs());
            if 2.0 * d < side {
                mask[vi] = true;
            }
        }
    }
    KeepMaskGT {
        level,
        coords: coords.to_vec(),
        mask,
    }
}

/// One positive voxel of a level's target assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct PositiveTarget {
    /// Row into the level's coordinate list.
    pub row: usize,
    /// Index of the claiming box in the input slice.
    pub box_index: usize,
    pub class_id: u32,
    /// `(dx, dy, dz)` in units of the level voxel size, then log-sizes in
    /// meters.
    pub regression: [f64; 6],
}

/// Target assignment for one level; rows not listed are background.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelTargets {
    pub level: i32,
    pub positives: Vec<PositiveTarget>,
}

/// Assign the `K_NEAREST` voxels closest to each box center as positives.
///
/// Boxes must be pre-assigned to levels; only boxes of `level` participate.
/// Distance ties break by canonical row order. A voxel claimed by several
/// boxes goes to the box with the nearer center (lower box index on exact
/// ties). Claimed voxels are not refilled from further candidates.
pub fn assign_box_targets(
    level: i32,
    voxel_size: f64,
    coords: &[VoxelCoord],
    boxes: &[Box3D],
    box_levels: &[u8],
) -> LevelTargets {
    debug_assert_eq!(boxes.len(), box_levels.len());
    // row -> (distance^2, box index)
    let mut claims: Vec<Option<(f64, usize)>> = vec![None; coords.len()];
    for (bi, bbox) in boxes.iter().enumerate() {
        if i32::from(box_levels[bi]) != level {
            continue;
        }
        let mut by_dist: Vec<(f64, usize)> = coords
            .iter()
            .enumerate()
            .map(|(row, c)| {
                let vc = c.center(voxel_size);
                let dx = vc[0] - bbox.center[0];
                let dy = vc[1] - bbox.center[1];
                let dz = vc[2] - bbox.center[2];
                (dx * dx + dy * dy + dz * dz, row)
            })
            .collect();
        by_dist.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(d2, row) in by_dist.iter().take(K_NEAREST) {
            let better = match claims[row] {
                None => true,
                Some((prev, _)) => d2 < prev,
            };
            if better {
                claims[row] = Some((d2, bi));
            }
        }
    }

    let mut positives = Vec::new();
    for (row, claim) in claims.iter().enumerate() {
        let Some((_, bi)) = claim else { continue };
        let bbox = &boxes[*bi];
        let vc = coords[row].center(voxel_size);
        positives.push(PositiveTarget {
            row,
            box_index: *bi,
            class_id: bbox.class_id,
            regression: [
                (bbox.center[0] - vc[0]) / voxel_size,
                (bbox.center[1] - vc[1]) / voxel_size,
                (bbox.center[2] - vc[2]) / voxel_size,
                math::ln(bbox.size[0]),
                math::ln(bbox.size[1]),
                math::ln(bbox.size[2]),
            ],
        });
    }
    LevelTargets { level, positives }
}
