//! Postprocessing: box decoding, axis-aligned IoU, class-wise greedy 3D
//! NMS and the fusion of all four levels into final detections.

use alloc::vec::Vec;

use crate::decoder::RawPrediction;
use crate::math;
use crate::targets::Box3D;

/// One decoded detection.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: Box3D,
    /// Sigmoid of the winning class logit, in `[0, 1]`.
    pub score: f64,
    pub class_id: u32,
    /// Pyramid level that produced this detection.
    pub level: i32,
}

/// Decode raw per-voxel outputs into detections.
///
/// Class is the argmax logit (lowest index on ties), score its sigmoid;
/// the box center is `voxel_center + offset * voxel_size` and sizes are
/// `exp(log_size)`. Only detections with `score >= score_threshold` are
/// emitted.
pub fn decode(pred: &RawPrediction, score_threshold: f64) -> Vec<Detection> {
    let mut out = Vec::new();
    for row in 0..pred.len() {
        let logits = pred.logits(row);
        let mut best = 0usize;
        for (c, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = c;
            }
        }
        let score = math::sigmoid(logits[best] as f64);
        if score < score_threshold {
            continue;
        }
        let (center, size) = pred.decode_box(row);
        out.push(Detection {
            bbox: Box3D {
                center,
                size,
                class_id: best as u32,
            },
            score,
            class_id: best as u32,
            level: pred.level,
        });
    }
    out
}

/// Intersection-over-union of two axis-aligned boxes.
pub fn iou_aabb(a: &Box3D, b: &Box3D) -> f64 {
    let (amin, amax) = (a.min_corner(), a.max_corner());
    let (bmin, bmax) = (b.min_corner(), b.max_corner());
    let mut inter = 1.0f64;
    for axis in 0..3 {
        let lo = amin[axis].max(bmin[axis]);
        let hi = amax[axis].min(bmax[axis]);
        if hi <= lo {
            return 0.0;
        }
        inter *= hi - lo;
    }
    let union = a.volume() + b.volume() - inter;
    inter / union
}

/// Deterministic detection ordering: score descending, then class, center,
/// size and level ascending.
fn det_order(a: &Detection, b: &Detection) -> core::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.class_id.cmp(&b.class_id))
        .then(a.bbox.center[2].total_cmp(&b.bbox.center[2]))
        .then(a.bbox.center[1].total_cmp(&b.bbox.center[1]))
        .then(a.bbox.center[0].total_cmp(&b.bbox.center[0]))
        .then(a.bbox.size[2].total_cmp(&b.bbox.size[2]))
        .then(a.bbox.size[1].total_cmp(&b.bbox.size[1]))
        .then(a.bbox.size[0].total_cmp(&b.bbox.size[0]))
        .then(a.level.cmp(&b.level))
}

/// Greedy class-wise non-maximum suppression: walk detections by
/// descending score and keep one iff its IoU with every already kept
/// detection of the same class stays below `iou_threshold`. Boxes of
/// different classes never suppress each other; scores are unmodified.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_unstable_by(|&i, &j| det_order(&dets[i], &dets[j]));
    let mut kept: Vec<Detection> = Vec::new();
    for i in order {
        let cand = &dets[i];
        let suppressed = kept
            .iter()
            .filter(|k| k.class_id == cand.class_id)
            .any(|k| iou_aabb(&k.bbox, &cand.bbox) >= iou_threshold);
        if !suppressed {
            kept.push(cand.clone());
        }
    }
    kept
}

/// Decode every level, concatenate, and run one NMS pass over the union.
pub fn fuse_levels(
    preds: &[RawPrediction],
    score_threshold: f64,
    iou_threshold: f64,
) -> Vec<Detection> {
    let mut all = Vec::new();
    for p in preds {
        all.extend(decode(p, score_threshold));
    }
    nms(&all, iou_threshold)
}
