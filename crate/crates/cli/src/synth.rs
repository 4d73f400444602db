//! Synthetic desk-scale scenes: a floor plane plus box-shaped objects with
//! sizes drawn to cover all four detection levels.

use dsp3d_core::targets::{Box3D, LevelThresholds};
use dsp3d_core::PipelineConfig;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const FLOOR_SPACING: f64 = 0.04;

pub struct SynthScene {
    pub points: Vec<[f64; 3]>,
    pub boxes: Vec<Box3D>,
}

fn unitf(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Surface sample of an axis-aligned box (six faces on a regular grid).
fn sample_box_surface(center: [f64; 3], size: [f64; 3], out: &mut Vec<[f64; 3]>) {
    let min_side = size[0].min(size[1]).min(size[2]);
    let spacing = (min_side / 10.0).clamp(0.012, 0.035);
    let lo = [
        center[0] - size[0] / 2.0,
        center[1] - size[1] / 2.0,
        center[2] - size[2] / 2.0,
    ];
    let steps = |extent: f64| ((extent / spacing).ceil() as usize).max(1);
    let (nx, ny, nz) = (steps(size[0]), steps(size[1]), steps(size[2]));
    let at = |lo: f64, extent: f64, i: usize, n: usize| lo + extent * i as f64 / n as f64;
    for iy in 0..=ny {
        for ix in 0..=nx {
            let (x, y) = (at(lo[0], size[0], ix, nx), at(lo[1], size[1], iy, ny));
            out.push([x, y, lo[2]]);
            out.push([x, y, lo[2] + size[2]]);
        }
    }
    for iz in 1..nz {
        let z = at(lo[2], size[2], iz, nz);
        for ix in 0..=nx {
            let x = at(lo[0], size[0], ix, nx);
            out.push([x, lo[1], z]);
            out.push([x, lo[1] + size[1], z]);
        }
        for iy in 1..ny {
            let y = at(lo[1], size[1], iy, ny);
            out.push([lo[0], y, z]);
            out.push([lo[0] + size[0], y, z]);
        }
    }
}

/// Volume range of one detection level, capped for level 4.
fn level_volume_range(thr: &LevelThresholds, level: u8) -> (f64, f64) {
    match level {
        1 => (0.3 * thr.threshold(2), 0.9 * thr.threshold(2)),
        2 => (1.1 * thr.threshold(2), 0.9 * thr.threshold(3)),
        3 => (1.1 * thr.threshold(3), 0.9 * thr.threshold(4)),
        _ => (1.1 * thr.threshold(4), 2.0 * thr.threshold(4)),
    }
}

/// Generate a floor plane of `extent` × `extent` meters plus `objects`
/// box-shaped point clusters resting on it. Object sizes cycle through the
/// four levels (object `k` targets level `1 + k mod 4`) with random volume
/// inside the level's range; classes encode the level (`class = level-1`).
pub fn synth_scene(objects: usize, extent: f64, seed: u64) -> SynthScene {
    synth_scene_with(objects, extent, seed, &PipelineConfig::default(), true, None)
}

/// [`synth_scene`] with full control: custom config, optional floor, and an
/// optional fixed level for every object.
pub fn synth_scene_with(
    objects: usize,
    extent: f64,
    seed: u64,
    cfg: &PipelineConfig,
    floor: bool,
    force_level: Option<u8>,
) -> SynthScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let thr = cfg.level_thresholds();
    let mut points = Vec::new();
    let mut boxes = Vec::new();

    if floor {
        let n = (extent / FLOOR_SPACING).floor() as usize;
        for iy in 0..=n {
            for ix in 0..=n {
                points.push([
                    ix as f64 * FLOOR_SPACING + 0.005,
                    iy as f64 * FLOOR_SPACING + 0.005,
                    0.0,
                ]);
            }
        }
    }

    for k in 0..objects {
        let level = force_level.unwrap_or(1 + (k % 4) as u8);
        let (lo, hi) = level_volume_range(&thr, level);
        let volume = lo + unitf(&mut rng) * (hi - lo);
        let side = volume.powf(1.0 / 3.0);
        let ax = 0.8 + 0.45 * unitf(&mut rng);
        let ay = 0.8 + 0.45 * unitf(&mut rng);
        let size = [side * ax, side * ay, volume / (side * side * ax * ay)];
        let margin = 0.5 * size[0].max(size[1]) + 0.1;
        let span = (extent - 2.0 * margin).max(0.0);
        let center = [
            margin + unitf(&mut rng) * span,
            margin + unitf(&mut rng) * span,
            size[2] / 2.0 + 0.01,
        ];
        let bbox = Box3D::new(center, size, u32::from(level) - 1).expect("synth box");
        sample_box_surface(center, size, &mut points);
        boxes.push(bbox);
    }

    SynthScene { points, boxes }
}
