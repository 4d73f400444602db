//! Receptive-field enumeration for the decoder tail.
//!
//! From a pruned parent map to a prediction one level below, values flow
//! through the upsampling convolution (kernel 3, stride 2), the proposal
//! convolution, the head convolution (both kernel 3, stride 1) and a
//! pointwise branch. This module walks those footprints backwards over the
//! actual sparse coordinates to find exactly which parents participate.

use alloc::collections::BTreeSet;

use crate::voxgrid::VoxelCoord;

fn dilate(set: &BTreeSet<VoxelCoord>, occupied: &BTreeSet<VoxelCoord>) -> BTreeSet<VoxelCoord> {
    let mut out = BTreeSet::new();
    for v in set {
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let n = v.offset(dx, dy, dz);
                    if occupied.contains(&n) {
                        out.insert(n);
                    }
                }
            }
        }
    }
    out
}

/// Parents (coarse-level voxels) influencing the prediction at `proposal`
/// (fine-level voxel). `merged` is the fine-level coordinate set the
/// submanifold convolutions run on; `parents` is the pruned coarse map.
/// Empty if the proposal voxel itself is unoccupied.
pub fn proposal_influence(
    parents: &BTreeSet<VoxelCoord>,
    merged: &BTreeSet<VoxelCoord>,
    proposal: VoxelCoord,
) -> BTreeSet<VoxelCoord> {
    let mut set = BTreeSet::new();
    if !merged.contains(&proposal) {
        return set;
    }
    set.insert(proposal);
    let after_head = dilate(&set, merged);
    let after_proposal = dilate(&after_head, merged);

    let mut out = BTreeSet::new();
    for u in &after_proposal {
        // Parents c with 2c + o = u for some o in {-1, 0, 1}^3.
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (tx, ty, tz) = (u.x - dx, u.y - dy, u.z - dz);
                    if tx.rem_euclid(2) == 0 && ty.rem_euclid(2) == 0 && tz.rem_euclid(2) == 0 {
                        let c = VoxelCoord::new(tx / 2, ty / 2, tz / 2);
                        if parents.contains(&c) {
                            out.insert(c);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Union of [`proposal_influence`] over the 27 voxels nearest a ground-truth
/// center (the `3^3` block around `center_voxel`).
pub fn cluster_influence(
    parents: &BTreeSet<VoxelCoord>,
    merged: &BTreeSet<VoxelCoord>,
    center_voxel: VoxelCoord,
) -> BTreeSet<VoxelCoord> {
    let mut out = BTreeSet::new();
    for dz in -1..=1 {
        for dy in -1..=1 {
            for dx in -1..=1 {
                out.extend(proposal_influence(
                    parents,
                    merged,
                    center_voxel.offset(dx, dy, dz),
                ));
            }
        }
    }
    out
}

/// Whether `parent` (coarse level) lies inside the 9-voxel-wide window in
/// fine-level units centered at `center_voxel`: `|2 * parent - center| <= 4`
/// per axis. Every influence set is contained in this window.
pub fn within_nine_window(center_voxel: VoxelCoord, parent: VoxelCoord) -> bool {
    (2 * parent.x - center_voxel.x).abs() <= 4
        && (2 * parent.y - center_voxel.y).abs() <= 4
        && (2 * parent.z - center_voxel.z).abs() <= 4
}
