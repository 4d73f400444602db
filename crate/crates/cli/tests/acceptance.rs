//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line. Criteria cover oracle equivalence of every convolution variant,
//! bitwise pruning semantics, receptive-field preservation, monotonicity,
//! target and loss closed forms, NMS properties, the end-to-end compute
//! reduction demo, and bit-stability across worker-thread counts.
//!
//! The tests share process-global state (the worker-thread cap), so they
//! serialize on a mutex.

use std::collections::BTreeSet;
use std::panic::AssertUnwindSafe;
use std::sync::Mutex;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use dsp3d_cli::bench::{bench_sweep, rows_to_csv, write_csv};
use dsp3d_cli::formats::DetectionsFile;
use dsp3d_cli::pipeline::{
    build_targets, forward_scene, gt_mask_scores, leveled_boxes, scene_features,
};
use dsp3d_cli::synth::synth_scene_with;
use dsp3d_core::decoder::{decoder_forward, DecoderOutput, ForwardMode, ForwardOptions};
use dsp3d_core::losses::{diou_loss, focal_loss, total_loss, FOCAL_ALPHA, FOCAL_GAMMA};
use dsp3d_core::model::init_params;
use dsp3d_core::oracle;
use dsp3d_core::parallel::set_max_threads;
use dsp3d_core::postproc::{fuse_levels, iou_aabb, nms, Detection};
use dsp3d_core::targets::Box3D;
use dsp3d_core::voxgrid::{quantize, VoxelCoord};
use dsp3d_core::PipelineConfig;

static LOCK: Mutex<()> = Mutex::new(());

fn criterion(name: &str, f: impl FnOnce()) {
    let _guard = LOCK.lock().unwrap_or_else(|p| p.into_inner());
    set_max_threads(0);
    let result = std::panic::catch_unwind(AssertUnwindSafe(f));
    set_max_threads(0);
    match result {
        Ok(()) => println!("ACCEPTANCE {name}: PASS"),
        Err(e) => {
            println!("ACCEPTANCE {name}: FAIL");
            std::panic::resume_unwind(e);
        }
    }
}

fn desk() -> PipelineConfig {
    PipelineConfig::desk()
}

fn unitf(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Solid axis-aligned cluster of points on a fine grid filling a box.
fn solid_box_points(center: [f64; 3], size: [f64; 3], out: &mut Vec<[f64; 3]>) {
    let spacing = if size[0] > 0.3 { 0.03 } else { 0.02 };
    let n = |extent: f64| (extent / spacing).round().max(1.0) as i32;
    let (nx, ny, nz) = (n(size[0]), n(size[1]), n(size[2]));
    for iz in 0..=nz {
        for iy in 0..=ny {
            for ix in 0..=nx {
                out.push([
                    center[0] - size[0] / 2.0 + size[0] * ix as f64 / nx as f64,
                    center[1] - size[1] / 2.0 + size[1] * iy as f64 / ny as f64,
                    center[2] - size[2] / 2.0 + size[2] * iz as f64 / nz as f64,
                ]);
            }
        }
    }
}

/// Floating, well-separated objects (no floor): the scene family used for
/// the exact receptive-field preservation checks. Objects cycle through
/// levels 1, 2, 3 and small ones stay under 0.19 m so that every occupied
/// coarse-level voxel of an object sits strictly inside its keep-mask
/// cube.
fn isolated_scene(seed: u64, objects: usize) -> (Vec<[f64; 3]>, Vec<Box3D>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::new();
    let mut boxes = Vec::new();
    for k in 0..objects {
        let side = match k % 3 {
            0 => 0.12 + 0.05 * unitf(&mut rng),
            1 => 0.26 + 0.14 * unitf(&mut rng),
            _ => 0.52 + 0.10 * unitf(&mut rng),
        };
        let size = [side, side * (0.9 + 0.2 * unitf(&mut rng)), side];
        let center = [
            3.0 * k as f64 + 0.6 * unitf(&mut rng),
            1.5 + 0.6 * unitf(&mut rng),
            0.8 + 0.4 * unitf(&mut rng),
        ];
        solid_box_points(center, size, &mut points);
        boxes.push(Box3D::new(center, size, (k % 4) as u32).unwrap());
    }
    (points, boxes)
}

fn logits_bits(out: &DecoderOutput) -> Vec<u32> {
    let mut bits = Vec::new();
    for p in &out.predictions {
        bits.extend(p.class_logits.iter().map(|v| v.to_bits()));
        bits.extend(p.regression.iter().map(|v| v.to_bits()));
    }
    for k in &out.keep_scores {
        bits.extend(k.scores.iter().map(|v| v.to_bits()));
    }
    bits
}

#[test]
fn acceptance_01_convolution_oracle_suite() {
    criterion("convolution-oracle-suite", || {
        set_max_threads(1);
        let start = Instant::now();
        let report = oracle::conv_suite(0xACCE97, 200);
        let elapsed = start.elapsed().as_secs_f64();
        assert!(
            report.passed(),
            "conv oracle failures: {:?}",
            report.failures
        );
        assert_eq!(report.cases, 600, "200 instances per variant");
        assert!(
            elapsed < 60.0,
            "single-threaded oracle suite took {elapsed:.1} s (budget 60 s)"
        );
    });
}

#[test]
fn acceptance_02_tau_zero_bitwise_equivalence() {
    criterion("tau-zero-bitwise-equivalence", || {
        let cfg = desk();
        let params = init_params(&cfg, 2024);
        for seed in 0..20u64 {
            let scene = synth_scene_with(2, 1.2, 1000 + seed, &cfg, true, None);
            let feats = scene_features(&scene.points, &cfg, &params).unwrap();
            let zero =
                decoder_forward(&feats, &params.decoder, &ForwardOptions::inference(0.0)).unwrap();
            let disabled = decoder_forward(
                &feats,
                &params.decoder,
                &ForwardOptions {
                    mode: ForwardMode::Inference {
                        tau: 0.9,
                        prune_enabled: false,
                    },
                    keep_override: None,
                },
            )
            .unwrap();
            for (a, b) in zero.predictions.iter().zip(&disabled.predictions) {
                assert_eq!(a.coords, b.coords, "seed {seed}");
            }
            assert_eq!(logits_bits(&zero), logits_bits(&disabled), "seed {seed}");

            let dets_zero = fuse_levels(&zero.predictions, cfg.score_threshold, cfg.nms_iou);
            let dets_disabled =
                fuse_levels(&disabled.predictions, cfg.score_threshold, cfg.nms_iou);
            let json_zero =
                serde_json::to_string(&DetectionsFile::from_detections(&dets_zero)).unwrap();
            let json_disabled =
                serde_json::to_string(&DetectionsFile::from_detections(&dets_disabled)).unwrap();
            assert_eq!(json_zero, json_disabled, "seed {seed}");
        }
    });
}

/// The 27 voxel coordinates nearest a world point at the given level.
fn nearest_27(center: [f64; 3], voxel_size: f64) -> Vec<VoxelCoord> {
    let v0 = VoxelCoord::new(
        (center[0] / voxel_size).floor() as i32,
        (center[1] / voxel_size).floor() as i32,
        (center[2] / voxel_size).floor() as i32,
    );
    let mut out = Vec::with_capacity(27);
    for dz in -1..=1 {
        for dy in -1..=1 {
            for dx in -1..=1 {
                out.push(v0.offset(dx, dy, dz));
            }
        }
    }
    out
}

/// Compare predictions at the 27 proposals nearest `center`; every
/// proposal present in `base` must be present in `kept` with identical
/// rows. Returns how many proposals were compared.
fn assert_proposals_preserved(
    base: &dsp3d_core::decoder::RawPrediction,
    kept: &dsp3d_core::decoder::RawPrediction,
    center: [f64; 3],
    voxel_size: f64,
    what: &str,
) -> usize {
    let mut compared = 0;
    for c in nearest_27(center, voxel_size) {
        let Some(row_b) = base.coords.iter().position(|&x| x == c) else {
            continue;
        };
        let row_k = kept
            .coords
            .iter()
            .position(|&x| x == c)
            .unwrap_or_else(|| panic!("{what}: proposal {c:?} lost by pruning"));
        assert_eq!(
            base.logits(row_b),
            kept.logits(row_k),
            "{what}: logits diverge at {c:?}"
        );
        assert_eq!(
            base.regression_row(row_b),
            kept.regression_row(row_k),
            "{what}: regression diverges at {c:?}"
        );
        compared += 1;
    }
    compared
}

#[test]
fn acceptance_03_receptive_field_preservation() {
    criterion("receptive-field-preservation", || {
        let cfg = desk();

        // Per-level preservation on 20 random floored scenes: prune one
        // level with its GT mask (r = 13 covers the 9-wide receptive
        // field), keep every other level intact, and require the
        // predictions one level below at the 27 proposals nearest each GT
        // center to match the unpruned run exactly. This holds for any
        // scene; pruning several levels at once additionally perturbs the
        // merged maps two or more hops below, which no constant-world-size
        // mask can cover (see the full-pipeline check further down).
        let params = init_params(&cfg, 7031);
        let mut compared = 0usize;
        let mut removed_at = [0usize; 3];
        for seed in 0..20u64 {
            // Big enough that even the level-4 masks leave voxels to prune.
            let scene = synth_scene_with(3, 2.6, 3000 + seed, &cfg, true, None);
            let feats = scene_features(&scene.points, &cfg, &params).unwrap();
            let unpruned = decoder_forward(
                &feats,
                &params.decoder,
                &ForwardOptions {
                    mode: ForwardMode::Inference {
                        tau: 0.0,
                        prune_enabled: false,
                    },
                    keep_override: None,
                },
            )
            .unwrap();

            let leveled = leveled_boxes(&cfg, &scene.boxes);
            for prune_level in 2..=4i32 {
                let only_this_level = |level: i32, merged: &dsp3d_core::SparseTensor| {
                    if level == prune_level {
                        gt_mask_scores(&cfg, &leveled)(level, merged)
                    } else {
                        vec![1.0f32; merged.len()]
                    }
                };
                let pruned = decoder_forward(
                    &feats,
                    &params.decoder,
                    &ForwardOptions {
                        mode: ForwardMode::Inference {
                            tau: 0.5,
                            prune_enabled: true,
                        },
                        keep_override: Some(&only_this_level),
                    },
                )
                .unwrap();
                let stats = &pruned.stats[prune_level as usize - 1];
                removed_at[prune_level as usize - 2] +=
                    stats.voxels_before_prune - stats.voxels_after_prune;
                for (bbox, level) in &leveled {
                    if i32::from(*level) != prune_level - 1 {
                        continue;
                    }
                    compared += assert_proposals_preserved(
                        &unpruned.predictions[*level as usize - 1],
                        &pruned.predictions[*level as usize - 1],
                        bbox.center,
                        cfg.voxel_size(i32::from(*level)),
                        &format!("seed {seed} prune level {prune_level}"),
                    );
                }
            }
        }
        assert!(compared > 200, "only {compared} proposals compared");
        for (i, removed) in removed_at.iter().enumerate() {
            assert!(*removed > 0, "level {} pruning never removed anything", i + 2);
        }

        // Full pipeline with GT masks at every level on isolated scenes:
        // level-3 and level-4 predictions see at most one pruning hop and
        // must stay bitwise exact; the 27 proposals of smaller objects
        // must at least survive.
        let params = init_params(&cfg, 9090);
        for seed in 0..10u64 {
            let (points, boxes) = isolated_scene(4000 + seed, 3);
            let feats = scene_features(&points, &cfg, &params).unwrap();
            let unpruned = decoder_forward(
                &feats,
                &params.decoder,
                &ForwardOptions {
                    mode: ForwardMode::Inference {
                        tau: 0.0,
                        prune_enabled: false,
                    },
                    keep_override: None,
                },
            )
            .unwrap();
            let leveled = leveled_boxes(&cfg, &boxes);
            let override_fn = gt_mask_scores(&cfg, &leveled);
            let pruned = decoder_forward(
                &feats,
                &params.decoder,
                &ForwardOptions {
                    mode: ForwardMode::Inference {
                        tau: 0.5,
                        prune_enabled: true,
                    },
                    keep_override: Some(&override_fn),
                },
            )
            .unwrap();
            let removed: usize = pruned
                .stats
                .iter()
                .map(|s| s.voxels_before_prune - s.voxels_after_prune)
                .sum();
            assert!(removed > 0, "seed {seed}: GT-mask pruning removed nothing");

            // Level-4 predictions precede all pruning: identical wholesale.
            let (b4, k4) = (&unpruned.predictions[3], &pruned.predictions[3]);
            assert_eq!(b4.coords, k4.coords);
            assert_eq!(b4.class_logits, k4.class_logits);
            assert_eq!(b4.regression, k4.regression);

            for (bbox, level) in &leveled {
                let s = cfg.voxel_size(i32::from(*level));
                let base = &unpruned.predictions[*level as usize - 1];
                let kept = &pruned.predictions[*level as usize - 1];
                if *level >= 3 {
                    assert_proposals_preserved(
                        base,
                        kept,
                        bbox.center,
                        s,
                        &format!("seed {seed} full-pipeline level {level}"),
                    );
                } else {
                    for c in nearest_27(bbox.center, s) {
                        if base.coords.contains(&c) {
                            assert!(
                                kept.coords.contains(&c),
                                "seed {seed}: proposal {c:?} lost by full-pipeline pruning"
                            );
                        }
                    }
                }
            }
        }

        // Influence sets stay inside the 9x9x9 window; zeroing voxels
        // outside them never changes the predictions.
        let report = oracle::receptive_field_suite(0xF1E1D, 20);
        assert!(report.passed(), "{:?}", report.failures);
    });
}

#[test]
fn acceptance_04_pruning_monotonicity() {
    criterion("pruning-monotonicity", || {
        let cfg = desk();
        let params = init_params(&cfg, 505);
        let scene = synth_scene_with(3, 1.5, 42, &cfg, true, None);
        let feats = scene_features(&scene.points, &cfg, &params).unwrap();
        let taus: Vec<f64> = (0..=10).map(|s| s as f64 / 10.0).collect();

        // Set nesting per level: sweeping the threshold over one level's
        // score field keeps strictly shrinking, nested coordinate sets.
        // (Rerunning the whole pipeline per tau instead changes the merged
        // maps upstream, which shifts the finer levels' scores between
        // runs — only the counts stay monotone there; see below.)
        let baseline =
            decoder_forward(&feats, &params.decoder, &ForwardOptions::inference(0.0)).unwrap();
        for k in &baseline.keep_scores {
            assert!(!k.scores.is_empty());
            let mut previous: Option<BTreeSet<VoxelCoord>> = None;
            for &tau in &taus {
                let kept: BTreeSet<VoxelCoord> = k
                    .coords
                    .iter()
                    .zip(&k.scores)
                    .filter(|(_, &s)| f64::from(s) >= tau)
                    .map(|(c, _)| *c)
                    .collect();
                if tau == 0.0 {
                    assert_eq!(kept.len(), k.scores.len(), "tau 0 keeps everything");
                }
                if tau == 1.0 {
                    assert!(kept.is_empty(), "tau 1.0 keeps voxels at level {}", k.level);
                }
                if let Some(prev) = &previous {
                    assert!(
                        kept.is_subset(prev),
                        "level {}: kept set at higher tau is not nested",
                        k.level
                    );
                    assert!(kept.len() <= prev.len());
                }
                previous = Some(kept);
            }
        }

        // End-to-end sweep: per-level kept counts are non-increasing in
        // tau, tau = 1.0 keeps nothing at levels 2..4, and the top level
        // (whose merged map never depends on tau) stays set-nested.
        let mut prev_counts: Option<[usize; 4]> = None;
        let mut prev_top: Option<BTreeSet<VoxelCoord>> = None;
        for &tau in &taus {
            let out =
                decoder_forward(&feats, &params.decoder, &ForwardOptions::inference(tau)).unwrap();
            let counts: [usize; 4] =
                core::array::from_fn(|i| out.stats[i].voxels_after_prune);
            if let Some(prev) = prev_counts {
                for level in 0..4 {
                    assert!(
                        counts[level] <= prev[level],
                        "tau {tau}: level {} kept count grew: {} > {}",
                        level + 1,
                        counts[level],
                        prev[level]
                    );
                }
            }
            if tau == 1.0 {
                assert_eq!(counts[1], 0);
                assert_eq!(counts[2], 0);
                assert_eq!(counts[3], 0);
            }
            let top = &out.keep_scores[2];
            assert_eq!(top.level, 4);
            let top_kept: BTreeSet<VoxelCoord> = top
                .coords
                .iter()
                .zip(&top.scores)
                .filter(|(_, &s)| f64::from(s) >= tau)
                .map(|(c, _)| *c)
                .collect();
            assert_eq!(out.stats[3].voxels_after_prune, top_kept.len());
            if let Some(prev) = &prev_top {
                assert!(top_kept.is_subset(prev), "level 4 kept sets must nest");
            }
            prev_top = Some(top_kept);
            prev_counts = Some(counts);
        }
    });
}

#[test]
fn acceptance_05_target_oracles_and_constants() {
    criterion("target-oracles", || {
        let thr = PipelineConfig::default().level_thresholds();
        assert!((thr.threshold(2) - 0.013824).abs() < 1e-12);
        assert!((thr.threshold(3) - 0.110592).abs() < 1e-12);
        assert!((thr.threshold(4) - 0.884736).abs() < 1e-12);

        let report = oracle::targets_suite(0x7A27E7, 100);
        assert!(report.passed(), "{:?}", report.failures);
    });
}

#[test]
#[allow(clippy::approx_constant)] // frozen oracle values, some near ln 2
fn acceptance_06_loss_closed_forms_and_linearity() {
    criterion("loss-closed-forms", || {
        // Frozen focal-loss cases: (p, y, alpha, gamma, expected).
        let focal_cases: [(f64, bool, f64, f64, f64); 10] = [
            (0.5, true, 0.25, 2.0, 0.04332169878499658),
            (0.5, false, 0.25, 2.0, 0.12996509635498973),
            (0.9, true, 0.25, 2.0, 0.00026340128914456557),
            (0.9, false, 0.25, 2.0, 1.398820443993883),
            (0.1, true, 0.25, 2.0, 0.46627348133129426),
            (0.25, true, 0.5, 0.0, 0.6931471805599453),
            (0.75, false, 0.5, 0.0, 0.6931471805599453),
            (0.02, false, 0.25, 2.0, 6.060812195255851e-6),
            (0.6, true, 0.4, 1.0, 0.08173209980255854),
            (0.3, false, 0.9, 3.0, 0.0009630223486345778),
        ];
        for (p, y, a, g, expected) in focal_cases {
            let got = focal_loss(p, y, a, g);
            assert!(
                (got - expected).abs() < 1e-9,
                "focal({p}, {y}, {a}, {g}) = {got}, expected {expected}"
            );
        }

        // Frozen DIoU cases: (center_a, size_a, center_b, size_b, expected).
        #[allow(clippy::type_complexity)]
        let diou_cases: [([f64; 3], [f64; 3], [f64; 3], [f64; 3], f64); 10] = [
            ([0., 0., 0.], [1., 1., 1.], [0., 0., 0.], [1., 1., 1.], 0.0),
            ([0., 0., 0.], [1., 1., 1.], [1., 0., 0.], [1., 1., 1.], 1.1666666666666667),
            ([0., 0., 0.], [2., 2., 2.], [0., 0., 0.], [1., 1., 1.], 0.875),
            ([0., 0., 0.], [1., 1., 1.], [0.5, 0., 0.], [1., 1., 1.], 0.7254901960784315),
            ([0., 0., 0.], [2., 1., 1.], [0., 0., 0.], [1., 1., 1.], 0.5),
            ([0., 0., 0.], [1., 1., 1.], [0.25, 0.25, 0.], [1., 1., 1.], 0.6389986824769434),
            ([0., 0., 0.], [1., 2., 3.], [0.1, -0.2, 0.4], [1.5, 1., 2.], 0.728056206088993),
            ([0., 0., 0.], [1., 1., 1.], [3., 4., 0.], [1., 1., 1.], 1.5952380952380953),
            ([-1., 0.5, 2.], [0.4, 0.6, 0.8], [-1.1, 0.7, 1.9], [0.5, 0.5, 0.5], 0.8003754185299573),
            ([0., 0., 0.], [1., 1., 1.], [0., 0., 0.999], [1., 1., 1.], 1.165944185091009),
        ];
        for (ca, sa, cb, sb, expected) in diou_cases {
            let a = Box3D::new(ca, sa, 0).unwrap();
            let b = Box3D::new(cb, sb, 0).unwrap();
            let got = diou_loss(&a, &b).unwrap();
            assert!(
                (got - expected).abs() < 1e-9,
                "diou({ca:?}, {sa:?}; {cb:?}, {sb:?}) = {got}, expected {expected}"
            );
        }

        // Linearity in lambda on a real training forward.
        let cfg = desk();
        let params = init_params(&cfg, 88);
        let scene = synth_scene_with(3, 1.4, 99, &cfg, true, None);
        let out = forward_scene(
            &scene.points,
            &cfg,
            &params,
            &ForwardOptions::training(cfg.n_max),
        )
        .unwrap();
        let coords: Vec<(i32, Vec<VoxelCoord>)> = out
            .predictions
            .iter()
            .map(|p| (p.level, p.coords.clone()))
            .collect();
        let (_, masks, targets) = build_targets(&cfg, &coords, &scene.boxes);
        let targets: [_; 4] = targets.try_into().unwrap();
        let eval = |lambda: f64| {
            total_loss(
                &out.predictions,
                &targets,
                &scene.boxes,
                &out.keep_scores,
                &masks,
                lambda,
                FOCAL_ALPHA,
                FOCAL_GAMMA,
            )
            .unwrap()
        };
        let l1 = eval(0.01);
        let l2 = eval(0.02);
        let keep_sum: f64 = l1.keep_losses.iter().sum();
        assert!(keep_sum > 0.0, "keep losses must be non-trivial");
        assert!(
            ((l2.total - l1.total) - 0.01 * keep_sum).abs() < 1e-12,
            "total is not linear in lambda"
        );
        let box_sum: f64 = l1.box_losses.iter().sum();
        assert_eq!(
            l1.total,
            box_sum + 0.01 * keep_sum,
            "total must combine the parts exactly as written"
        );
    });
}

#[test]
fn acceptance_07_nms_properties() {
    criterion("nms-properties", || {
        let mut rng = ChaCha8Rng::seed_from_u64(0x9515);
        for case in 0..100 {
            let n = 1 + (rng.next_u64() % 200) as usize;
            let dets: Vec<Detection> = (0..n)
                .map(|_| {
                    let center = [
                        unitf(&mut rng) * 4.0,
                        unitf(&mut rng) * 4.0,
                        unitf(&mut rng) * 2.0,
                    ];
                    let size = [
                        0.2 + unitf(&mut rng),
                        0.2 + unitf(&mut rng),
                        0.2 + unitf(&mut rng),
                    ];
                    let class_id = (rng.next_u64() % 5) as u32;
                    Detection {
                        bbox: Box3D::new(center, size, class_id).unwrap(),
                        score: unitf(&mut rng),
                        class_id,
                        level: 1 + (rng.next_u64() % 4) as i32,
                    }
                })
                .collect();
            let once = nms(&dets, 0.5);
            let twice = nms(&once, 0.5);
            assert_eq!(once, twice, "case {case}: nms is not idempotent");
            for (i, a) in once.iter().enumerate() {
                for b in &once[i + 1..] {
                    if a.class_id == b.class_id {
                        assert!(
                            iou_aabb(&a.bbox, &b.bbox) < 0.5,
                            "case {case}: kept same-class pair above threshold"
                        );
                    }
                }
            }
            for k in &once {
                assert!(dets.iter().any(|d| d == k), "case {case}: output not a subset");
            }
        }
    });
}

#[test]
fn acceptance_08_compute_reduction_demo() {
    criterion("compute-reduction-demo", || {
        let cfg = desk();
        let params = init_params(&cfg, 1234);
        // 4 m x 4 m floored scene with three small (level-1) objects.
        let scene = synth_scene_with(3, 4.0, 77, &cfg, true, Some(1));
        assert_eq!(scene.boxes.len(), 3);

        let rows = bench_sweep(&scene.points, &cfg, &params, &[0.0], Some(&scene.boxes)).unwrap();
        let level1_upsampled = |label: &str| -> usize {
            rows.iter()
                .find(|r| r.tau == label && r.level == 1)
                .expect("level-1 row")
                .voxels_before
        };
        let full = level1_upsampled("0");
        let pruned = level1_upsampled("gt");
        assert!(full > 0);
        let reduction = 1.0 - pruned as f64 / full as f64;
        println!(
            "  level-1 upsampled voxels: {full} unpruned vs {pruned} with GT masks \
             ({:.1}% reduction)",
            reduction * 100.0
        );
        assert!(
            reduction >= 0.5,
            "GT-mask pruning reduced level-1 upsampled voxels by only {:.1}%",
            reduction * 100.0
        );

        // The sweep lands in the bench CSV.
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("demo.csv");
        write_csv(&csv_path, &rows).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        assert!(text.lines().count() == rows.len() + 1);
        assert!(text.lines().any(|l| l.starts_with("gt,1,")));
        assert_eq!(text, rows_to_csv(&rows));
    });
}

#[test]
fn acceptance_09_thread_count_determinism() {
    criterion("thread-count-determinism", || {
        let cfg = desk();
        let params = init_params(&cfg, 60_001);
        let scene = synth_scene_with(3, 2.0, 4242, &cfg, true, None);
        let (iso_points, iso_boxes) = isolated_scene(8, 2);

        let capture = || {
            // Inference forward with learned pruning.
            let out = forward_scene(
                &scene.points,
                &cfg,
                &params,
                &ForwardOptions::inference(cfg.tau),
            )
            .unwrap();
            let dets = fuse_levels(&out.predictions, cfg.score_threshold, cfg.nms_iou);
            let det_json =
                serde_json::to_string(&DetectionsFile::from_detections(&dets)).unwrap();
            let counts: Vec<usize> = out
                .stats
                .iter()
                .flat_map(|s| [s.voxels_before_prune, s.voxels_after_prune])
                .collect();

            // Training forward and loss on the isolated scene.
            let tr = forward_scene(
                &iso_points,
                &cfg,
                &params,
                &ForwardOptions::training(cfg.n_max),
            )
            .unwrap();
            let coords: Vec<(i32, Vec<VoxelCoord>)> = tr
                .predictions
                .iter()
                .map(|p| (p.level, p.coords.clone()))
                .collect();
            let (_, masks, targets) = build_targets(&cfg, &coords, &iso_boxes);
            let targets: [_; 4] = targets.try_into().unwrap();
            let loss = total_loss(
                &tr.predictions,
                &targets,
                &iso_boxes,
                &tr.keep_scores,
                &masks,
                cfg.lambda,
                FOCAL_ALPHA,
                FOCAL_GAMMA,
            )
            .unwrap();
            let loss_bits: Vec<u64> = loss
                .box_losses
                .iter()
                .chain(&loss.keep_losses)
                .chain(std::iter::once(&loss.total))
                .map(|v| v.to_bits())
                .collect();

            // Bench rows minus the timing column.
            let rows = bench_sweep(&scene.points, &cfg, &params, &[0.0, 0.3], Some(&scene.boxes))
                .unwrap();
            let bench_key: Vec<String> = rows
                .iter()
                .map(|r| {
                    format!(
                        "{},{},{},{},{}",
                        r.tau, r.level, r.voxels_before, r.voxels_after, r.prune_ratio
                    )
                })
                .collect();

            // A raw scene quantization, serialized canonically.
            let tensor_bytes = quantize(&scene.points, cfg.base_voxel)
                .unwrap()
                .canonical_bytes();

            (
                logits_bits(&out),
                det_json,
                counts,
                logits_bits(&tr),
                loss_bits,
                bench_key,
                tensor_bytes,
            )
        };

        set_max_threads(1);
        let single = capture();
        set_max_threads(4);
        let quad = capture();
        set_max_threads(0);
        assert_eq!(single.0, quad.0, "prediction bits differ across thread counts");
        assert_eq!(single.1, quad.1, "detection JSON differs across thread counts");
        assert_eq!(single.2, quad.2, "prune counts differ across thread counts");
        assert_eq!(single.3, quad.3, "training forward differs across thread counts");
        assert_eq!(single.4, quad.4, "loss bits differ across thread counts");
        assert_eq!(single.5, quad.5, "bench rows differ across thread counts");
        assert_eq!(single.6, quad.6, "quantization differs across thread counts");
    });
}
