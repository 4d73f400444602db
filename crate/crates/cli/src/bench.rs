//! Threshold sweep: run the decoder at several pruning thresholds over one
//! scene and record per-level voxel counts as CSV rows.

use std::path::Path;

use anyhow::{Context, Result};
use dsp3d_core::decoder::{decoder_forward, ForwardOptions};
use dsp3d_core::model::ModelParams;
use dsp3d_core::targets::Box3D;
use dsp3d_core::PipelineConfig;

use crate::formats::prune_ratio;
use crate::pipeline::{gt_mask_scores, leveled_boxes, scene_features};

/// One CSV row of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    /// Numeric threshold, or "gt" for the ground-truth-mask run.
    pub tau: String,
    pub level: i32,
    pub voxels_before: usize,
    pub voxels_after: usize,
    pub prune_ratio: f64,
    pub time_ms: f64,
}

/// Run the sweep. The backbone runs once; each threshold reruns only the
/// decoder. With `gt_boxes` present, a final run replaces the learned keep
/// scores by the ground-truth masks (rows labeled `gt`).
pub fn bench_sweep(
    points: &[[f64; 3]],
    cfg: &PipelineConfig,
    params: &ModelParams,
    taus: &[f64],
    gt_boxes: Option<&[Box3D]>,
) -> Result<Vec<BenchRow>> {
    let feats = scene_features(points, cfg, params)?;
    let mut rows = Vec::new();

    let mut push_run = |label: String, out: &dsp3d_core::decoder::DecoderOutput| {
        for s in out.stats.iter() {
            rows.push(BenchRow {
                tau: label.clone(),
                level: s.level,
                voxels_before: s.voxels_before_prune,
                voxels_after: s.voxels_after_prune,
                prune_ratio: prune_ratio(s.voxels_before_prune, s.voxels_after_prune),
                time_ms: s.wall_time_ms,
            });
        }
    };

    for &tau in taus {
        let out = decoder_forward(&feats, &params.decoder, &ForwardOptions::inference(tau))?;
        push_run(format!("{tau}"), &out);
    }

    if let Some(boxes) = gt_boxes {
        let leveled = leveled_boxes(cfg, boxes);
        let override_fn = gt_mask_scores(cfg, &leveled);
        let opts = ForwardOptions {
            // Mask scores are exactly 0 or 1; any threshold inside (0, 1]
            // keeps precisely the masked voxels.
            mode: dsp3d_core::decoder::ForwardMode::Inference {
                tau: 0.5,
                prune_enabled: true,
            },
            keep_override: Some(&override_fn),
        };
        let out = decoder_forward(&feats, &params.decoder, &opts)?;
        push_run("gt".to_string(), &out);
    }

    Ok(rows)
}

pub const CSV_HEADER: &str = "tau,level,voxels_before,voxels_after,prune_ratio,time_ms";

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.tau, r.level, r.voxels_before, r.voxels_after, r.prune_ratio, r.time_ms
        ));
    }
    out
}

pub fn write_csv(path: &Path, rows: &[BenchRow]) -> Result<()> {
    std::fs::write(path, rows_to_csv(rows))
        .with_context(|| format!("writing CSV {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use dsp3d_core::model::init_params;

    #[test]
    fn sweep_counts_are_monotone_in_tau() {
        let cfg = PipelineConfig::desk();
        let params = init_params(&cfg, 13);
        let scene = crate::synth::synth_scene_with(2, 1.2, 3, &cfg, true, Some(1));
        let rows = bench_sweep(&scene.points, &cfg, &params, &[0.0, 0.3, 0.5, 1.0], None).unwrap();
        assert_eq!(rows.len(), 16);
        for level in 1..=4 {
            let after: Vec<usize> = rows
                .iter()
                .filter(|r| r.level == level)
                .map(|r| r.voxels_after)
                .collect();
            assert!(after.windows(2).all(|w| w[1] <= w[0]), "level {level}: {after:?}");
        }
        // tau = 1.0 prunes everything at levels 2..4.
        for r in rows.iter().filter(|r| r.tau == "1" && r.level >= 2) {
            assert_eq!(r.voxels_after, 0);
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let rows = vec![BenchRow {
            tau: "0.3".into(),
            level: 4,
            voxels_before: 10,
            voxels_after: 5,
            prune_ratio: 0.5,
            time_ms: 1.25,
        }];
        let csv = rows_to_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.next(), Some("0.3,4,10,5,0.5,1.25"));
    }
}
