//! Randomized equality suites pitting the engine against its oracles.
//! Seeded, deterministic, and callable both from tests and from the CLI's
//! `oracle-check` command.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::PipelineConfig;
use crate::oracle::{
    brute_force_targets, cluster_influence, dense_conv_oracle, max_mixed_rel_error,
    within_nine_window, DenseGrid,
};
use crate::sconv::{conv_down, conv_pointwise, conv_s1, generative_deconv, ConvParams};
use crate::targets::{self, Box3D};
use crate::voxgrid::{SparseTensor, VoxelCoord};

/// Relative tolerance for sparse-vs-dense convolution agreement.
pub const CONV_TOL: f64 = 1e-5;

/// Outcome of one suite run.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub failures: Vec<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn unitf(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn symf(rng: &mut ChaCha8Rng) -> f32 {
    (unitf(rng) * 2.0 - 1.0) as f32
}

fn range_i(rng: &mut ChaCha8Rng, lo: i32, hi: i32) -> i32 {
    lo + (rng.next_u64() % (hi - lo + 1) as u64) as i32
}

fn random_tensor(
    rng: &mut ChaCha8Rng,
    level: i32,
    voxel_size: f64,
    channels: usize,
    max_extent: i32,
) -> SparseTensor {
    let dims = [
        range_i(rng, 2, max_extent),
        range_i(rng, 2, max_extent),
        range_i(rng, 2, max_extent),
    ];
    let origin = [
        range_i(rng, -9, 9),
        range_i(rng, -9, 9),
        range_i(rng, -9, 9),
    ];
    let density = 0.08 + 0.5 * unitf(rng);
    let mut rows = Vec::new();
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                if unitf(rng) < density {
                    let feat: Vec<f32> = (0..channels).map(|_| symf(rng)).collect();
                    rows.push((
                        VoxelCoord::new(origin[0] + x, origin[1] + y, origin[2] + z),
                        feat,
                    ));
                }
            }
        }
    }
    if rows.is_empty() {
        let feat: Vec<f32> = (0..channels).map(|_| symf(rng)).collect();
        rows.push((VoxelCoord::new(origin[0], origin[1], origin[2]), feat));
    }
    SparseTensor::from_rows(level, voxel_size, channels, rows).expect("random tensor")
}

fn random_conv(
    rng: &mut ChaCha8Rng,
    cin: usize,
    cout: usize,
    kernel: usize,
    stride: usize,
    transposed: bool,
    with_bias: bool,
) -> ConvParams {
    let w: Vec<f32> = (0..kernel.pow(3) * cin * cout).map(|_| symf(rng)).collect();
    let b = with_bias.then(|| (0..cout).map(|_| symf(rng)).collect());
    ConvParams::new(cin, cout, kernel, stride, transposed, w, b).expect("random conv")
}

/// Every convolution variant against the dense oracle on random instances.
pub fn conv_suite(seed: u64, cases_per_variant: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for case in 0..cases_per_variant {
        let cin = range_i(&mut rng, 1, 4) as usize;
        let cout = range_i(&mut rng, 1, 4) as usize;
        let with_bias = case % 2 == 0;
        let input = random_tensor(&mut rng, 1, 0.04, cin, 16);
        let grid = DenseGrid::from_sparse(&input).expect("within guard");

        for variant in 0..3usize {
            let (name, sparse, kernel, stride, transposed, params);
            match variant {
                0 => {
                    params = random_conv(&mut rng, cin, cout, 3, 1, false, with_bias);
                    sparse = conv_s1(&input, &params);
                    (name, kernel, stride, transposed) = ("conv_s1", 3, 1, false);
                }
                1 => {
                    params = random_conv(&mut rng, cin, cout, 1, 2, false, with_bias);
                    sparse = conv_down(&input, &params);
                    (name, kernel, stride, transposed) = ("conv_down", 1, 2, false);
                }
                _ => {
                    params = random_conv(&mut rng, cin, cout, 3, 2, true, with_bias);
                    sparse = generative_deconv(&input, &params);
                    (name, kernel, stride, transposed) = ("generative_deconv", 3, 2, true);
                }
            }
            let sparse = match sparse {
                Ok(t) => t,
                Err(e) => {
                    failures.push(format!("case {case} {name}: sparse op failed: {e}"));
                    continue;
                }
            };
            let dense = match dense_conv_oracle(
                &grid,
                &params.weights,
                cin,
                cout,
                kernel,
                stride,
                transposed,
                params.bias.as_deref(),
            ) {
                Ok(g) => g,
                Err(e) => {
                    failures.push(format!("case {case} {name}: oracle failed: {e}"));
                    continue;
                }
            };
            let err = max_mixed_rel_error(&sparse, &dense);
            if err >= CONV_TOL || err.is_nan() {
                failures.push(format!(
                    "case {case} {name}: rel error {err:.3e} exceeds {CONV_TOL:.0e} \
                     ({} voxels, {cin}->{cout} ch)",
                    input.len()
                ));
            }
        }
    }
    SuiteReport {
        name: "conv",
        cases: cases_per_variant * 3,
        failures,
    }
}

/// Level assignment, keep masks and box targets against the brute-force
/// reference, plus the fixed volume-threshold constants.
pub fn targets_suite(seed: u64, cases: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let cfg = PipelineConfig::default();

    let thr = cfg.level_thresholds();
    for (i, expected) in [(2usize, 0.013824f64), (3, 0.110592), (4, 0.884736)] {
        let got = thr.threshold(i);
        if (got - expected).abs() > 1e-12 {
            failures.push(format!("V_{i} = {got:.15}, expected {expected}"));
        }
    }

    for case in 0..cases {
        let n_boxes = range_i(&mut rng, 1, 20) as usize;
        let boxes: Vec<Box3D> = (0..n_boxes)
            .map(|_| {
                let center = [
                    unitf(&mut rng) * 4.0 - 2.0,
                    unitf(&mut rng) * 4.0 - 2.0,
                    unitf(&mut rng) * 2.0,
                ];
                let size = [
                    0.05 + unitf(&mut rng) * 1.45,
                    0.05 + unitf(&mut rng) * 1.45,
                    0.05 + unitf(&mut rng) * 1.45,
                ];
                Box3D::new(center, size, (rng.next_u64() % 8) as u32).expect("valid box")
            })
            .collect();

        let mut coords_by_level: Vec<(i32, Vec<VoxelCoord>)> = Vec::new();
        for level in 1..=4 {
            let n = range_i(&mut rng, 0, 250) as usize;
            let mut coords: Vec<VoxelCoord> = (0..n)
                .map(|_| {
                    VoxelCoord::new(
                        range_i(&mut rng, -25, 25),
                        range_i(&mut rng, -25, 25),
                        range_i(&mut rng, -25, 25),
                    )
                })
                .collect();
            coords.sort_unstable();
            coords.dedup();
            coords_by_level.push((level, coords));
        }

        let brute = brute_force_targets(
            &coords_by_level,
            &boxes,
            cfg.n_vol,
            cfg.r,
            cfg.base_voxel,
            targets::K_NEAREST,
        );

        let levels = targets::assign_levels(&boxes, &thr);
        if levels != brute.box_levels {
            failures.push(format!("case {case}: level assignment diverged"));
            continue;
        }

        let leveled: Vec<(Box3D, u8)> = boxes.iter().copied().zip(levels.iter().copied()).collect();
        for &(level, ref coords) in &coords_by_level {
            if (2..=4).contains(&level) {
                let mask = targets::gen_keep_mask(
                    level,
                    cfg.voxel_size(level),
                    coords,
                    &leveled,
                    cfg.r,
                    |j| cfg.voxel_size(j),
                );
                let brute_mask = &brute
                    .keep_masks
                    .iter()
                    .find(|(l, _)| *l == level)
                    .expect("mask level present")
                    .1;
                if &mask.mask != brute_mask {
                    failures.push(format!("case {case}: keep mask level {level} diverged"));
                }
            }

            let t = targets::assign_box_targets(level, cfg.voxel_size(level), coords, &boxes, &levels);
            let brute_pos = &brute
                .positives
                .iter()
                .find(|p| p.level == level)
                .expect("positive level present")
                .items;
            if t.positives.len() != brute_pos.len() {
                failures.push(format!(
                    "case {case}: level {level} positive count {} vs {}",
                    t.positives.len(),
                    brute_pos.len()
                ));
                continue;
            }
            for (p, &(row, bi, class, reg)) in t.positives.iter().zip(brute_pos) {
                let discrete_ok = p.row == row && p.box_index == bi && p.class_id == class;
                let reg_ok = p
                    .regression
                    .iter()
                    .zip(&reg)
                    .all(|(a, b)| (a - b).abs() <= 1e-12);
                if !(discrete_ok && reg_ok) {
                    failures.push(format!("case {case}: level {level} positive row {row} diverged"));
                }
            }
        }
    }
    SuiteReport {
        name: "targets",
        cases,
        failures,
    }
}

fn children_of(parents: &BTreeSet<VoxelCoord>) -> BTreeSet<VoxelCoord> {
    let mut out = BTreeSet::new();
    for p in parents {
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    out.insert(VoxelCoord::new(2 * p.x + dx, 2 * p.y + dy, 2 * p.z + dz));
                }
            }
        }
    }
    out
}

/// Decoder tail used for perturbation checks: upsample, two submanifold
/// convolutions, pointwise branch. Mirrors the shape of the real tail with
/// tiny random weights.
struct Tail {
    up: ConvParams,
    conv1: ConvParams,
    conv2: ConvParams,
    branch: ConvParams,
}

impl Tail {
    fn random(rng: &mut ChaCha8Rng, ch: usize) -> Self {
        Self {
            up: random_conv(rng, ch, ch, 3, 2, true, true),
            conv1: random_conv(rng, ch, ch, 3, 1, false, true),
            conv2: random_conv(rng, ch, ch, 3, 1, false, true),
            branch: random_conv(rng, ch, 2, 1, 1, false, true),
        }
    }

    fn run(&self, parents: &SparseTensor) -> SparseTensor {
        let u = generative_deconv(parents, &self.up).expect("tail deconv");
        let p = conv_s1(&u, &self.conv1).expect("tail conv1");
        let h = conv_s1(&p, &self.conv2).expect("tail conv2");
        conv_pointwise(&h, &self.branch).expect("tail branch")
    }
}

/// Influence sets against the 9-window bound, with perturbation evidence:
/// zeroing any parent outside the enumerated influence set leaves the
/// predictions at the 27 nearest proposals numerically unchanged.
pub fn receptive_field_suite(seed: u64, cases: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let ch = 2usize;

    // Dense attainment: with dense parents and an even-aligned center the
    // influence union is exactly the parents with |2c - v0| <= 4 per axis.
    {
        let mut parents = BTreeSet::new();
        for z in -6..=6 {
            for y in -6..=6 {
                for x in -6..=6 {
                    parents.insert(VoxelCoord::new(x, y, z));
                }
            }
        }
        let merged = children_of(&parents);
        let v0 = VoxelCoord::new(0, 0, 0);
        let inf = cluster_influence(&parents, &merged, v0);
        if inf.len() != 125 || !inf.iter().all(|c| within_nine_window(v0, *c)) {
            failures.push(String::from("dense parent grid does not attain the 9-window"));
        }
    }

    for case in 0..cases {
        let level = range_i(&mut rng, 2, 4);
        let density = 0.15 + 0.35 * unitf(&mut rng);
        let mut parent_set: BTreeSet<VoxelCoord> = BTreeSet::new();
        for z in -5..=5 {
            for y in -5..=5 {
                for x in -5..=5 {
                    if unitf(&mut rng) < density {
                        parent_set.insert(VoxelCoord::new(x, y, z));
                    }
                }
            }
        }
        let anchor = VoxelCoord::new(
            range_i(&mut rng, -3, 3),
            range_i(&mut rng, -3, 3),
            range_i(&mut rng, -3, 3),
        );
        parent_set.insert(anchor);
        let v0 = VoxelCoord::new(
            2 * anchor.x + range_i(&mut rng, -1, 1),
            2 * anchor.y + range_i(&mut rng, -1, 1),
            2 * anchor.z + range_i(&mut rng, -1, 1),
        );
        let merged = children_of(&parent_set);
        let influence = cluster_influence(&parent_set, &merged, v0);

        for c in &influence {
            if !within_nine_window(v0, *c) {
                failures.push(format!("case {case}: influence voxel {c:?} outside 9-window"));
            }
        }

        // Perturbation evidence on an actual decoder tail.
        let rows: Vec<(VoxelCoord, Vec<f32>)> = parent_set
            .iter()
            .map(|c| (*c, (0..ch).map(|_| symf(&mut rng)).collect()))
            .collect();
        let parents = SparseTensor::from_rows(level, 0.04, ch, rows).expect("parents");
        let tail = Tail::random(&mut rng, ch);
        let baseline = tail.run(&parents);

        let proposals: Vec<VoxelCoord> = {
            let mut v = Vec::new();
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let p = v0.offset(dx, dy, dz);
                        if baseline.row_of(p).is_some() {
                            v.push(p);
                        }
                    }
                }
            }
            v
        };
        if proposals.is_empty() {
            failures.push(format!("case {case}: no occupied proposals near {v0:?}"));
            continue;
        }

        let outsiders: Vec<VoxelCoord> = parents
            .coords()
            .iter()
            .filter(|c| !influence.contains(c))
            .copied()
            .take(20)
            .collect();
        for outsider in outsiders {
            let row = parents.row_of(outsider).expect("outsider occupied");
            let mut feats = parents.features().to_vec();
            for v in &mut feats[row * ch..(row + 1) * ch] {
                *v = 0.0;
            }
            let perturbed_parents = SparseTensor::new(
                parents.level(),
                parents.voxel_size(),
                ch,
                parents.coords().to_vec(),
                feats,
            )
            .expect("perturbed tensor");
            let perturbed = tail.run(&perturbed_parents);
            for p in &proposals {
                let br = baseline.row_of(*p).expect("baseline proposal");
                let pr = perturbed.row_of(*p).expect("perturbed proposal");
                if baseline.feature(br) != perturbed.feature(pr) {
                    failures.push(format!(
                        "case {case}: zeroing {outsider:?} changed proposal {p:?}"
                    ));
                }
            }
        }
    }
    SuiteReport {
        name: "receptive-field",
        cases,
        failures,
    }
}
