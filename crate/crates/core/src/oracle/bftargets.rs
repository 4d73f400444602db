//! Naive target generation: exhaustive loops used as an equality reference
//! for the targets module. All arithmetic is written out inline — no level
//! tables, no spatial indices, no calls into the code under test.

use alloc::vec;
use alloc::vec::Vec;

use crate::targets::Box3D;
use crate::voxgrid::VoxelCoord;

/// Positives of one level: `(row, box index, class, regression)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteLevelPositives {
    pub level: i32,
    pub items: Vec<(usize, usize, u32, [f64; 6])>,
}

/// Reference output of [`brute_force_targets`].
#[derive(Debug, Clone, PartialEq)]
pub struct BruteTargets {
    /// Level per box, 1..=4.
    pub box_levels: Vec<u8>,
    /// Keep masks for levels 2..=4, aligned with the input coordinates.
    pub keep_masks: Vec<(i32, Vec<bool>)>,
    /// Positive assignments for levels 1..=4.
    pub positives: Vec<BruteLevelPositives>,
}

fn level_voxel_size(base_voxel: f64, level: i32) -> f64 {
    let mut s = base_voxel;
    let mut l = -1;
    while l < level {
        s *= 2.0;
        l += 1;
    }
    s
}

/// Exhaustively recompute level assignment, keep masks and positive voxels
/// for the given per-level coordinate lists.
pub fn brute_force_targets(
    coords_by_level: &[(i32, Vec<VoxelCoord>)],
    boxes: &[Box3D],
    n_vol: f64,
    r: f64,
    base_voxel: f64,
    k_nearest: usize,
) -> BruteTargets {
    // Volume thresholds, written out directly.
    let s2 = level_voxel_size(base_voxel, 2);
    let s3 = level_voxel_size(base_voxel, 3);
    let s4 = level_voxel_size(base_voxel, 4);
    let (v2, v3, v4) = (
        n_vol * s2 * s2 * s2,
        n_vol * s3 * s3 * s3,
        n_vol * s4 * s4 * s4,
    );
    let box_levels: Vec<u8> = boxes
        .iter()
        .map(|b| {
            let vol = b.size[0] * b.size[1] * b.size[2];
            if vol < v2 {
                1
            } else if vol < v3 {
                2
            } else if vol < v4 {
                3
            } else {
                4
            }
        })
        .collect();

    let mut keep_masks = Vec::new();
    for &(level, ref coords) in coords_by_level {
        if !(2..=4).contains(&level) {
            continue;
        }
        let s_i = level_voxel_size(base_voxel, level);
        let mut mask = vec![false; coords.len()];
        for (vi, c) in coords.iter().enumerate() {
            let cx = (c.x as f64 + 0.5) * s_i;
            let cy = (c.y as f64 + 0.5) * s_i;
            let cz = (c.z as f64 + 0.5) * s_i;
            for (bi, b) in boxes.iter().enumerate() {
                let j = i32::from(box_levels[bi]);
                if j >= level {
                    continue;
                }
                let s_j = level_voxel_size(base_voxel, j);
                let dx = (cx - b.center[0]).abs();
                let dy = (cy - b.center[1]).abs();
                let dz = (cz - b.center[2]).abs();
                let m = if dx > dy { dx } else { dy };
                let m = if m > dz { m } else { dz };
                if 2.0 * m < r * s_j {
                    mask[vi] = true;
                }
            }
        }
        keep_masks.push((level, mask));
    }

    let mut positives = Vec::new();
    for &(level, ref coords) in coords_by_level {
        // claim per row: (distance^2, box index)
        let mut claims: Vec<Option<(f64, usize)>> = vec![None; coords.len()];
        for (bi, b) in boxes.iter().enumerate() {
            if i32::from(box_levels[bi]) != level {
                continue;
            }
            let s_i = level_voxel_size(base_voxel, level);
            let mut dists: Vec<(f64, usize)> = Vec::with_capacity(coords.len());
            for (row, c) in coords.iter().enumerate() {
                let dx = (c.x as f64 + 0.5) * s_i - b.center[0];
                let dy = (c.y as f64 + 0.5) * s_i - b.center[1];
                let dz = (c.z as f64 + 0.5) * s_i - b.center[2];
                dists.push((dx * dx + dy * dy + dz * dz, row));
            }
            dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(d2, row) in dists.iter().take(k_nearest) {
                let take = match claims[row] {
                    None => true,
                    Some((best, _)) => d2 < best,
                };
                if take {
                    claims[row] = Some((d2, bi));
                }
            }
        }
        let s_i = level_voxel_size(base_voxel, level);
        let mut items = Vec::new();
        for (row, claim) in claims.iter().enumerate() {
            let Some((_, bi)) = claim else { continue };
            let b = &boxes[*bi];
            let c = coords[row];
            let reg = [
                (b.center[0] - (c.x as f64 + 0.5) * s_i) / s_i,
                (b.center[1] - (c.y as f64 + 0.5) * s_i) / s_i,
                (b.center[2] - (c.z as f64 + 0.5) * s_i) / s_i,
                crate::math::ln(b.size[0]),
                crate::math::ln(b.size[1]),
                crate::math::ln(b.size[2]),
            ];
            items.push((row, *bi, b.class_id, reg));
        }
        positives.push(BruteLevelPositives { level, items });
    }

    BruteTargets {
        box_levels,
        keep_masks,
        positives,
    }
}
