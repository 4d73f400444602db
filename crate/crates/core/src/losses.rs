//! Loss evaluation: focal loss on keep masks and classification, DIoU box
//! regression, and the total objective. Evaluation only — no gradients.

use alloc::vec::Vec;

use crate::decoder::{KeepScores, RawPrediction};
use crate::error::{EngineError, Result};
use crate::math;
use crate::postproc::iou_aabb;
use crate::targets::{Box3D, KeepMaskGT, LevelTargets};

/// Default focal-loss class balance.
pub const FOCAL_ALPHA: f64 = 0.25;
/// Default focal-loss focusing exponent.
pub const FOCAL_GAMMA: f64 = 2.0;
/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const FOCAL_EPS: f64 = 1e-7;

/// Focal loss for one probability/label pair:
/// `-alpha_t * (1 - p_t)^gamma * ln(p_t)` with `p_t = p` for positives and
/// `1 - p` otherwise.
pub fn focal_loss(p: f64, y: bool, alpha: f64, gamma: f64) -> f64 {
    let p = p.clamp(FOCAL_EPS, 1.0 - FOCAL_EPS);
    let (pt, at) = if y { (p, alpha) } else { (1.0 - p, 1.0 - alpha) };
    -at * math::powf(1.0 - pt, gamma) * math::ln(pt)
}

/// Distance-IoU loss for axis-aligned boxes:
/// `1 - IoU + |c_a - c_b|^2 / d^2` where `d` is the diagonal of the
/// smallest box enclosing both.
pub fn diou_loss(pred: &Box3D, gt: &Box3D) -> Result<f64> {
    for s in pred.size.iter().chain(&gt.size) {
        if !(s.is_finite() && *s > 0.0) {
            return Err(EngineError::DegenerateBox);
        }
    }
    let iou = iou_aabb(pred, gt);
    let (pmin, pmax) = (pred.min_corner(), pred.max_corner());
    let (gmin, gmax) = (gt.min_corner(), gt.max_corner());
    let mut d2 = 0.0;
    let mut dist2 = 0.0;
    for a in 0..3 {
        let side = pmax[a].max(gmax[a]) - pmin[a].min(gmin[a]);
        d2 += side * side;
        let dc = pred.center[a] - gt.center[a];
        dist2 += dc * dc;
    }
    Ok(1.0 - iou + dist2 / d2)
}

/// Per-level box and keep losses plus the combined total.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    /// Box loss per level 1..=4 (classification focal + DIoU on positives).
    pub box_losses: [f64; 4],
    /// Keep-mask focal loss per level 2..=4.
    pub keep_losses: [f64; 3],
    pub lambda: f64,
    /// `sum(box_losses) + lambda * sum(keep_losses)`, exactly as written.
    pub total: f64,
}

/// Evaluate the full objective.
///
/// `preds` and `box_targets` cover levels 1..=4 in order; `keep_scores` and
/// `keep_masks` cover levels 2..=4 in order and must agree coordinate-wise.
/// The box loss of a level is the mean over all voxels of the per-voxel
/// one-vs-all classification focal loss (summed over classes) plus the mean
/// DIoU over positive voxels (0 when there are none).
#[allow(clippy::too_many_arguments)]
pub fn total_loss(
    preds: &[RawPrediction; 4],
    box_targets: &[LevelTargets; 4],
    boxes: &[Box3D],
    keep_scores: &[KeepScores],
    keep_masks: &[KeepMaskGT],
    lambda: f64,
    alpha: f64,
    gamma: f64,
) -> Result<LossBreakdown> {
    let mut box_losses = [0.0f64; 4];
    for i in 0..4 {
        let pred = &preds[i];
        let tgt = &box_targets[i];
        if pred.level != i as i32 + 1 || tgt.level != pred.level {
            return Err(EngineError::CoordMismatch("box targets vs predictions"));
        }
        box_losses[i] = level_box_loss(pred, tgt, boxes, alpha, gamma)?;
    }

    if keep_scores.len() != 3 || keep_masks.len() != 3 {
        return Err(EngineError::CoordMismatch("keep scores/masks must cover levels 2..4"));
    }
    let mut keep_losses = [0.0f64; 3];
    for k in 0..3 {
        let scores = &keep_scores[k];
        let mask = &keep_masks[k];
        if scores.level != k as i32 + 2
            || mask.level != scores.level
            || scores.coords != mask.coords
        {
            return Err(EngineError::CoordMismatch("keep scores vs masks"));
        }
        let n = scores.scores.len();
        if n > 0 {
            let mut sum = 0.0;
            for (s, m) in scores.scores.iter().zip(&mask.mask) {
                sum += focal_loss(*s as f64, *m, alpha, gamma);
            }
            keep_losses[k] = sum / n as f64;
        }
    }

    let total = box_losses.iter().sum::<f64>() + lambda * keep_losses.iter().sum::<f64>();
    Ok(LossBreakdown {
        box_losses,
        keep_losses,
        lambda,
        total,
    })
}

fn level_box_loss(
    pred: &RawPrediction,
    tgt: &LevelTargets,
    boxes: &[Box3D],
    alpha: f64,
    gamma: f64,
) -> Result<f64> {
    let n = pred.len();
    if n == 0 {
        if !tgt.positives.is_empty() {
            return Err(EngineError::CoordMismatch("positives on an empty level"));
        }
        return Ok(0.0);
    }
    // row -> positive class
    let mut pos_class: Vec<Option<u32>> = alloc::vec![None; n];
    for p in &tgt.positives {
        if p.row >= n || p.box_index >= boxes.len() {
            return Err(EngineError::CoordMismatch("positive row out of range"));
        }
        pos_class[p.row] = Some(p.class_id);
    }

    let mut cls_sum = 0.0;
    for (row, target) in pos_class.iter().enumerate() {
        for (c, &logit) in pred.logits(row).iter().enumerate() {
            let y = *target == Some(c as u32);
            cls_sum += focal_loss(math::sigmoid(logit as f64), y, alpha, gamma);
        }
    }
    let cls = cls_sum / n as f64;

    let mut reg_sum = 0.0;
    for p in &tgt.positives {
        let (center, size) = pred.decode_box(p.row);
        let decoded = Box3D {
            center,
            size,
            class_id: p.class_id,
        };
        reg_sum += diou_loss(&decoded, &boxes[p.box_index])?;
    }
    let reg = if tgt.positives.is_empty() {
        0.0
    } else {
        reg_sum / tgt.positives.len() as f64
    };
    Ok(cls + reg)
}
