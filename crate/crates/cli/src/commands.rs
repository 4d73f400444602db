//! Subcommand implementations. Each returns `Ok(())` on success; runtime
//! failures bubble up as errors and exit with status 1.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dsp3d_core::decoder::{ForwardMode, ForwardOptions};
use dsp3d_core::losses::{total_loss, FOCAL_ALPHA, FOCAL_GAMMA};
use dsp3d_core::oracle;
use dsp3d_core::postproc::fuse_levels;
use dsp3d_core::voxgrid::quantize;

use crate::bench::{bench_sweep, write_csv};
use crate::boxesio::{read_boxes, write_boxes};
use crate::configio::load_config;
use crate::formats::{
    AssignmentJson, DetectionsFile, LevelPositivesJson, LossFile, MaskJson, MaskVoxelJson,
    PositiveJson, StatsFile, TargetsFile,
};
use crate::modelio::{init_and_save, load_weights};
use crate::pipeline::{build_targets, forward_scene, training_coords};
use crate::points::{read_points, write_points};
use crate::synth::synth_scene;

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).context("serializing JSON")?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Sidecar path for the stats written next to a detections file:
/// `dets.json` -> `dets.stats.json`.
pub fn stats_path(out: &Path) -> PathBuf {
    out.with_extension("stats.json")
}

pub fn cmd_infer(
    points: &Path,
    weights: &Path,
    config: &Path,
    out: &Path,
    no_prune: bool,
) -> Result<()> {
    let cfg = load_config(config)?;
    let params = load_weights(weights, &cfg)?;
    let pts = read_points(points)?;
    let opts = ForwardOptions {
        mode: ForwardMode::Inference {
            tau: cfg.tau,
            prune_enabled: !no_prune,
        },
        keep_override: None,
    };
    let result = forward_scene(&pts, &cfg, &params, &opts)?;
    let detections = fuse_levels(&result.predictions, cfg.score_threshold, cfg.nms_iou);
    write_json(out, &DetectionsFile::from_detections(&detections))?;
    write_json(
        &stats_path(out),
        &StatsFile::new(&result.stats, cfg.tau, !no_prune),
    )?;
    Ok(())
}

pub fn cmd_targets(points: &Path, boxes: &Path, config: &Path, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let pts = read_points(points)?;
    let gt = read_boxes(boxes)?;
    let scene = quantize(&pts, cfg.base_voxel)?;
    let coords = training_coords(&cfg, scene.coords())?;
    let (levels, masks, targets) = build_targets(&cfg, &coords, &gt);

    let file = TargetsFile {
        n_vol: cfg.n_vol,
        r: cfg.r,
        assignments: gt
            .iter()
            .enumerate()
            .map(|(i, b)| AssignmentJson {
                box_index: i,
                class: b.class_id,
                level: levels[i],
                volume: b.volume(),
            })
            .collect(),
        keep_masks: masks
            .iter()
            .map(|m| MaskJson {
                level: m.level,
                voxels: m
                    .coords
                    .iter()
                    .zip(&m.mask)
                    .map(|(c, &keep)| MaskVoxelJson {
                        coord: [c.x, c.y, c.z],
                        keep: u8::from(keep),
                    })
                    .collect(),
            })
            .collect(),
        positives: targets
            .iter()
            .map(|t| {
                let coords = &coords[t.level as usize - 1].1;
                LevelPositivesJson {
                    level: t.level,
                    voxels: t
                        .positives
                        .iter()
                        .map(|p| PositiveJson {
                            coord: [coords[p.row].x, coords[p.row].y, coords[p.row].z],
                            box_index: p.box_index,
                            class: p.class_id,
                            target: p.regression,
                        })
                        .collect(),
                }
            })
            .collect(),
    };
    write_json(out, &file)
}

pub fn cmd_loss_eval(points: &Path, boxes: &Path, weights: &Path, config: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let params = load_weights(weights, &cfg)?;
    let pts = read_points(points)?;
    let gt = read_boxes(boxes)?;

    // Loss evaluation always runs the training-mode forward.
    let result = forward_scene(&pts, &cfg, &params, &ForwardOptions::training(cfg.n_max))?;
    let coords: Vec<(i32, Vec<dsp3d_core::VoxelCoord>)> = result
        .predictions
        .iter()
        .map(|p| (p.level, p.coords.clone()))
        .collect();
    let (_, masks, targets) = build_targets(&cfg, &coords, &gt);
    let targets: [_; 4] = targets.try_into().expect("four levels");
    let breakdown = total_loss(
        &result.predictions,
        &targets,
        &gt,
        &result.keep_scores,
        &masks,
        cfg.lambda,
        FOCAL_ALPHA,
        FOCAL_GAMMA,
    )?;
    let file = LossFile::from_breakdown(&breakdown);
    println!("{}", serde_json::to_string_pretty(&file)?);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_bench(
    points: &Path,
    weights: &Path,
    config: &Path,
    taus: &[f64],
    csv: &Path,
    boxes: Option<&Path>,
    gt_prune: bool,
) -> Result<()> {
    if taus.is_empty() {
        bail!("--taus requires at least one threshold");
    }
    for t in taus {
        if !(0.0..=1.0).contains(t) {
            bail!("tau {t} outside [0, 1]");
        }
    }
    let cfg = load_config(config)?;
    let params = load_weights(weights, &cfg)?;
    let pts = read_points(points)?;
    let gt = match (boxes, gt_prune) {
        (Some(path), true) => Some(read_boxes(path)?),
        (None, true) => bail!("--gt-prune requires --boxes"),
        _ => None,
    };
    let rows = bench_sweep(&pts, &cfg, &params, taus, gt.as_deref())?;
    write_csv(csv, &rows)
}

pub fn cmd_synth(objects: usize, extent: f64, seed: u64, out: &Path) -> Result<()> {
    if !extent.is_finite() || extent <= 0.0 {
        bail!("--extent must be positive");
    }
    let scene = synth_scene(objects, extent, seed);
    let stem = out.to_string_lossy();
    let points_path = PathBuf::from(format!("{stem}.points.txt"));
    let boxes_path = PathBuf::from(format!("{stem}.boxes.json"));
    write_points(&points_path, &scene.points)?;
    write_boxes(&boxes_path, &scene.boxes)?;
    println!(
        "wrote {} points to {} and {} boxes to {}",
        scene.points.len(),
        points_path.display(),
        scene.boxes.len(),
        boxes_path.display()
    );
    Ok(())
}

pub fn cmd_init_weights(config: &Path, seed: u64, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    init_and_save(out, &cfg, seed)?;
    println!("wrote seeded weights to {}", out.display());
    Ok(())
}

/// Which oracle suites to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SuiteName {
    Conv,
    Targets,
    ReceptiveField,
    All,
}

pub fn cmd_oracle_check(suite: SuiteName) -> Result<()> {
    let mut reports = Vec::new();
    let seed = 0x5EED;
    if matches!(suite, SuiteName::Conv | SuiteName::All) {
        reports.push(oracle::conv_suite(seed, 200));
    }
    if matches!(suite, SuiteName::Targets | SuiteName::All) {
        reports.push(oracle::targets_suite(seed, 100));
    }
    if matches!(suite, SuiteName::ReceptiveField | SuiteName::All) {
        reports.push(oracle::receptive_field_suite(seed, 20));
    }

    let mut failed = false;
    for report in &reports {
        let status = if report.passed() { "ok" } else { "FAILED" };
        println!("suite {}: {} ({} cases)", report.name, status, report.cases);
        for f in &report.failures {
            println!("  {f}");
        }
        failed |= !report.passed();
    }
    if failed {
        bail!("oracle checks failed");
    }
    Ok(())
}
