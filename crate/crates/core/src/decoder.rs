//! Multi-level pruning decoder.
//!
//! Level 4 starts from the top backbone map; each block emits proposals and
//! predictions for its level, scores every voxel for retention, prunes, and
//! generatively upsamples what survives into the next finer level, where
//! the result is merged with the backbone map by partial addition. Level 4
//! has no partial addition and level 1 neither prunes nor upsamples.
//!
//! Inference applies threshold pruning to the proposal map. Training-mode
//! forwards skip it and instead weak-prune each merged map: every voxel
//! inherits its parent's keep score by nearest-neighbor upsampling and only
//! the `n_max` best survive. Keep scores are produced in both modes — the
//! keep-mask loss needs them.

use alloc::vec::Vec;

use crate::error::{EngineError, Result};
use crate::math;
use crate::sconv::{
    affine_relu, conv_pointwise, conv_s1, generative_deconv, AffineParams, ConvParams,
};
use crate::voxgrid::{SparseTensor, VoxelCoord};

/// Per-voxel retention probabilities predicted for one level.
#[derive(Debug, Clone, PartialEq)]
pub struct KeepScores {
    pub level: i32,
    pub coords: Vec<VoxelCoord>,
    /// Sigmoid outputs in `[0, 1]`, one per coordinate.
    pub scores: Vec<f32>,
}

/// Two-layer keep-score MLP (`channels -> hidden -> 1`, ReLU between,
/// sigmoid output). One per level in `{2, 3, 4}`, never shared.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneHeadParams {
    pub in_channels: usize,
    pub hidden: usize,
    /// `[in_channels][hidden]` row-major.
    pub w1: Vec<f32>,
    pub b1: Vec<f32>,
    /// `[hidden]` (single output column).
    pub w2: Vec<f32>,
    pub b2: Vec<f32>,
}

impl PruneHeadParams {
    pub fn new(
        in_channels: usize,
        hidden: usize,
        w1: Vec<f32>,
        b1: Vec<f32>,
        w2: Vec<f32>,
        b2: Vec<f32>,
    ) -> Result<Self> {
        let shape_ok = w1.len() == in_channels * hidden
            && b1.len() == hidden
            && w2.len() == hidden
            && b2.len() == 1;
        if !shape_ok {
            return Err(EngineError::InvalidArgument("prune head shape mismatch"));
        }
        let finite = w1.iter().chain(&b1).chain(&w2).chain(&b2).all(|v| v.is_finite());
        if !finite {
            return Err(EngineError::ParamNotFinite {
                name: alloc::string::String::from("prune head"),
            });
        }
        Ok(Self {
            in_channels,
            hidden,
            w1,
            b1,
            w2,
            b2,
        })
    }
}

/// The shared detection head: one submanifold convolution followed by two
/// pointwise branches (class logits and 6-value box regression). The same
/// parameters run at every level.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub conv: ConvParams,
    pub affine: AffineParams,
    pub cls: ConvParams,
    pub reg: ConvParams,
}

/// Per-level decoder block: proposal convolution always; keep-score head
/// and upsampling only on levels 2..=4.
#[derive(Debug, Clone, PartialEq)]
pub struct DspBlockParams {
    pub proposal: ConvParams,
    pub proposal_affine: AffineParams,
    pub prune: Option<PruneHeadParams>,
    pub up: Option<(ConvParams, AffineParams)>,
}

/// Full decoder parameter set. `blocks[i]` serves level `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub blocks: [DspBlockParams; 4],
    pub head: HeadParams,
}

/// Raw per-voxel outputs of the detection head at one level.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPrediction {
    pub level: i32,
    pub voxel_size: f64,
    pub coords: Vec<VoxelCoord>,
    pub num_classes: usize,
    /// `[voxels][num_classes]` row-major.
    pub class_logits: Vec<f32>,
    /// `[voxels][6]` row-major: `(dx, dy, dz)` in voxel-size units, then
    /// log-sizes in meters.
    pub regression: Vec<f32>,
}

impl RawPrediction {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn logits(&self, row: usize) -> &[f32] {
        &self.class_logits[row * self.num_classes..(row + 1) * self.num_classes]
    }

    pub fn regression_row(&self, row: usize) -> &[f32] {
        &self.regression[row * 6..(row + 1) * 6]
    }

    /// World-space box encoded at `row`: center = voxel center + offset
    /// times the level voxel size, sizes = exp(log-sizes). Log-sizes are
    /// clamped to ±30 so the result stays finite.
    pub fn decode_box(&self, row: usize) -> ([f64; 3], [f64; 3]) {
        let reg = self.regression_row(row);
        let vc = self.coords[row].center(self.voxel_size);
        let center = [
            vc[0] + reg[0] as f64 * self.voxel_size,
            vc[1] + reg[1] as f64 * self.voxel_size,
            vc[2] + reg[2] as f64 * self.voxel_size,
        ];
        let size = [
            math::exp((reg[3] as f64).clamp(-30.0, 30.0)),
            math::exp((reg[4] as f64).clamp(-30.0, 30.0)),
            math::exp((reg[5] as f64).clamp(-30.0, 30.0)),
        ];
        (center, size)
    }
}

/// Merge a backbone map into an upsampled map (partial addition): the
/// result keeps exactly the upsampled coordinates; features add on shared
/// voxels and pass through elsewhere. Backbone-only voxels are dropped.
pub fn partial_add(backbone: &SparseTensor, upsampled: &SparseTensor) -> Result<SparseTensor> {
    if backbone.level() != upsampled.level() {
        return Err(EngineError::LevelMismatch {
            a: backbone.level(),
            b: upsampled.level(),
        });
    }
    if backbone.channels() != upsampled.channels() {
        return Err(EngineError::ChannelMismatch {
            expected: backbone.channels(),
            got: upsampled.channels(),
        });
    }
    let ch = upsampled.channels();
    let mut features = upsampled.features().to_vec();
    for (row, c) in upsampled.coords().iter().enumerate() {
        if let Some(brow) = backbone.row_of(*c) {
            let b = backbone.feature(brow);
            for (dst, src) in features[row * ch..(row + 1) * ch].iter_mut().zip(b) {
                *dst += *src;
            }
        }
    }
    Ok(SparseTensor::new_unchecked(
        upsampled.level(),
        upsampled.voxel_size(),
        ch,
        upsampled.coords().to_vec(),
        features,
    ))
}

/// Largest representable score strictly below 1. Predicted scores are
/// capped here so saturated sigmoids cannot round up to exactly 1.0 in
/// f32 — a threshold of 1 must always prune everything.
pub const MAX_KEEP_SCORE: f32 = 1.0 - f32::EPSILON / 2.0;

/// Keep-score prediction: one sigmoid per voxel of the merged map, capped
/// at [`MAX_KEEP_SCORE`].
pub fn predict_keep(merged: &SparseTensor, head: &PruneHeadParams) -> Result<KeepScores> {
    if !(2..=4).contains(&merged.level()) {
        return Err(EngineError::LevelOutOfRange {
            level: merged.level(),
            what: "keep-score prediction",
        });
    }
    if merged.channels() != head.in_channels {
        return Err(EngineError::ChannelMismatch {
            expected: head.in_channels,
            got: merged.channels(),
        });
    }
    let hid = head.hidden;
    let mut scores = Vec::with_capacity(merged.len());
    let mut h = alloc::vec![0.0f64; hid];
    for row in 0..merged.len() {
        let f = merged.feature(row);
        for (j, hv) in h.iter_mut().enumerate() {
            let mut acc = head.b1[j] as f64;
            for (ci, &fv) in f.iter().enumerate() {
                acc += fv as f64 * head.w1[ci * hid + j] as f64;
            }
            *hv = acc.max(0.0);
        }
        let mut out = head.b2[0] as f64;
        for (j, hv) in h.iter().enumerate() {
            out += hv * head.w2[j] as f64;
        }
        scores.push((math::sigmoid(out) as f32).min(MAX_KEEP_SCORE));
    }
    Ok(KeepScores {
        level: merged.level(),
        coords: merged.coords().to_vec(),
        scores,
    })
}

/// Threshold pruning: keep voxels scoring at least `tau` (strictly lower
/// scores are removed). Scores must cover exactly the proposal coordinates.
pub fn prune(proposals: &SparseTensor, scores: &KeepScores, tau: f64) -> Result<SparseTensor> {
    if scores.coords.as_slice() != proposals.coords() {
        return Err(EngineError::CoordMismatch("prune scores vs proposals"));
    }
    let ch = proposals.channels();
    let mut coords = Vec::new();
    let mut features = Vec::new();
    for (row, &s) in scores.scores.iter().enumerate() {
        if s as f64 >= tau {
            coords.push(proposals.coords()[row]);
            features.extend_from_slice(proposals.feature(row));
        }
    }
    Ok(SparseTensor::new_unchecked(
        proposals.level(),
        proposals.voxel_size(),
        ch,
        coords,
        features,
    ))
}

/// Training-time weak pruning. Every voxel inherits the score of its parent
/// coordinate (`floor(c / 2)`) from the coarser level — nearest-neighbor
/// upsampling of the keep mask; voxels without a scored parent get 0. When
/// more than `n_max` voxels are present, only the `n_max` highest-scored
/// survive, ties broken by canonical coordinate order.
pub fn weak_prune(
    merged: &SparseTensor,
    parent_scores: &KeepScores,
    n_max: usize,
) -> Result<SparseTensor> {
    if parent_scores.level != merged.level() + 1 {
        return Err(EngineError::LevelMismatch {
            a: parent_scores.level,
            b: merged.level() + 1,
        });
    }
    if merged.len() <= n_max {
        return Ok(merged.clone());
    }
    let mut parent_map: hashbrown::HashMap<u64, f32> =
        hashbrown::HashMap::with_capacity(parent_scores.coords.len());
    for (c, &s) in parent_scores.coords.iter().zip(&parent_scores.scores) {
        parent_map.insert(c.pack(), s);
    }
    let mut order: Vec<(f32, usize)> = merged
        .coords()
        .iter()
        .enumerate()
        .map(|(row, c)| {
            let s = parent_map.get(&c.parent().pack()).copied().unwrap_or(0.0);
            (s, row)
        })
        .collect();
    order.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut keep_rows: Vec<usize> = order[..n_max].iter().map(|&(_, r)| r).collect();
    keep_rows.sort_unstable();

    let ch = merged.channels();
    let mut coords = Vec::with_capacity(n_max);
    let mut features = Vec::with_capacity(n_max * ch);
    for row in keep_rows {
        coords.push(merged.coords()[row]);
        features.extend_from_slice(merged.feature(row));
    }
    Ok(SparseTensor::new_unchecked(
        merged.level(),
        merged.voxel_size(),
        ch,
        coords,
        features,
    ))
}

/// Run the shared detection head on a proposal map.
pub fn detection_head(proposals: &SparseTensor, head: &HeadParams) -> Result<RawPrediction> {
    let h = affine_relu(&conv_s1(proposals, &head.conv)?, &head.affine, true)?;
    let logits = conv_pointwise(&h, &head.cls)?;
    let regression = conv_pointwise(&h, &head.reg)?;
    Ok(RawPrediction {
        level: proposals.level(),
        voxel_size: proposals.voxel_size(),
        coords: proposals.coords().to_vec(),
        num_classes: head.cls.out_channels,
        class_logits: logits.features().to_vec(),
        regression: regression.features().to_vec(),
    })
}

/// Forward-pass flavour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForwardMode {
    /// Threshold pruning with `tau`; `prune_enabled: false` bypasses the
    /// pruning step entirely (equivalent to `tau = 0`).
    Inference { tau: f64, prune_enabled: bool },
    /// No learnable pruning; weak pruning with the `n_max` budget after
    /// each partial addition.
    Training { n_max: usize },
}

/// Keep-score substitute: receives the level and its merged map, returns
/// one score per voxel.
pub type KeepScoreFn<'a> = &'a dyn Fn(i32, &SparseTensor) -> Vec<f32>;

/// Options for [`decoder_forward`].
pub struct ForwardOptions<'a> {
    pub mode: ForwardMode,
    /// Replaces the predicted keep scores of every level that has a prune
    /// head.
    pub keep_override: Option<KeepScoreFn<'a>>,
}

impl ForwardOptions<'_> {
    pub fn inference(tau: f64) -> Self {
        Self {
            mode: ForwardMode::Inference {
                tau,
                prune_enabled: true,
            },
            keep_override: None,
        }
    }

    pub fn training(n_max: usize) -> Self {
        Self {
            mode: ForwardMode::Training { n_max },
            keep_override: None,
        }
    }
}

/// Voxel counts around the pruning applied at one level: threshold pruning
/// of the proposal map in inference, weak pruning of the merged map in
/// training. Level 1 never prunes and level 4 never weak-prunes, so there
/// `before == after`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelStats {
    pub level: i32,
    pub voxels_before_prune: usize,
    pub voxels_after_prune: usize,
    /// Wall time spent on this level; 0 on no_std builds.
    pub wall_time_ms: f64,
}

/// Everything a forward pass produces.
#[derive(Debug, Clone)]
pub struct DecoderOutput {
    /// Raw predictions for levels 1..=4 (index `i` holds level `i + 1`).
    pub predictions: [RawPrediction; 4],
    /// Keep scores for levels 2..=4, ascending.
    pub keep_scores: Vec<KeepScores>,
    /// Per-level voxel statistics for levels 1..=4 (index `i` holds level
    /// `i + 1`).
    pub stats: [LevelStats; 4],
}

/// Run the decoder over the four backbone maps.
pub fn decoder_forward(
    backbone_feats: &[SparseTensor; 4],
    params: &DecoderParams,
    opts: &ForwardOptions,
) -> Result<DecoderOutput> {
    for (i, f) in backbone_feats.iter().enumerate() {
        if f.level() != i as i32 + 1 {
            return Err(EngineError::LevelOutOfRange {
                level: f.level(),
                what: "decoder backbone input",
            });
        }
    }

    let mut predictions: [Option<RawPrediction>; 4] = Default::default();
    let mut stats: [Option<LevelStats>; 4] = Default::default();
    let mut keep_scores: Vec<KeepScores> = Vec::with_capacity(3);
    let mut upsampled: Option<SparseTensor> = None;
    let mut parent_scores: Option<KeepScores> = None;

    for level in (1..=4i32).rev() {
        #[cfg(feature = "std")]
        let t0 = std::time::Instant::now();

        let block = &params.blocks[level as usize - 1];
        let mut merged = match upsampled.take() {
            None => backbone_feats[3].clone(),
            Some(up) => partial_add(&backbone_feats[level as usize - 1], &up)?,
        };

        let mut before = merged.len();
        let mut after = merged.len();
        if let ForwardMode::Training { n_max } = opts.mode {
            if level < 4 {
                let parents = parent_scores.as_ref().ok_or(EngineError::InvalidArgument(
                    "missing parent keep scores for weak pruning",
                ))?;
                merged = weak_prune(&merged, parents, n_max)?;
                after = merged.len();
            }
        }

        let scores = match &block.prune {
            Some(head) => Some(match opts.keep_override {
                Some(f) => {
                    let s = f(level, &merged);
                    if s.len() != merged.len() {
                        return Err(EngineError::InvalidArgument(
                            "keep override returned wrong score count",
                        ));
                    }
                    KeepScores {
                        level,
                        coords: merged.coords().to_vec(),
                        scores: s,
                    }
                }
                None => predict_keep(&merged, head)?,
            }),
            None => None,
        };

        let proposals = affine_relu(
            &conv_s1(&merged, &block.proposal)?,
            &block.proposal_affine,
            true,
        )?;
        predictions[level as usize - 1] = Some(detection_head(&proposals, &params.head)?);

        if level >= 2 {
            let scores_ref = scores
                .as_ref()
                .ok_or(EngineError::InvalidArgument("missing prune head"))?;
            let kept = match opts.mode {
                ForwardMode::Inference {
                    tau,
                    prune_enabled: true,
                } => {
                    before = proposals.len();
                    let kept = prune(&proposals, scores_ref, tau)?;
                    after = kept.len();
                    kept
                }
                ForwardMode::Inference {
                    prune_enabled: false,
                    ..
                } => {
                    before = proposals.len();
                    after = proposals.len();
                    proposals.clone()
                }
                ForwardMode::Training { .. } => proposals.clone(),
            };
            let (up_conv, up_affine) = block
                .up
                .as_ref()
                .ok_or(EngineError::InvalidArgument("missing upsampling conv"))?;
            upsampled = Some(affine_relu(
                &generative_deconv(&kept, up_conv)?,
                up_affine,
                true,
            )?);
        } else if matches!(opts.mode, ForwardMode::Inference { .. }) {
            before = proposals.len();
            after = proposals.len();
        }

        parent_scores = scores.clone();
        if let Some(s) = scores {
            keep_scores.push(s);
        }

        #[cfg(feature = "std")]
        let wall_time_ms = t0.elapsed().as_secs_f64() * 1e3;
        #[cfg(not(feature = "std"))]
        let wall_time_ms = 0.0;

        stats[level as usize - 1] = Some(LevelStats {
            level,
            voxels_before_prune: before,
            voxels_after_prune: after,
            wall_time_ms,
        });
    }

    keep_scores.reverse(); // built 4..2, reported 2..4
    Ok(DecoderOutput {
        predictions: predictions.map(|p| p.expect("all levels visited")),
        keep_scores,
        stats: stats.map(|s| s.expect("all levels visited")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PipelineConfig;
    use crate::model::init_params;
    use crate::voxgrid::quantize;

    fn tensor(level: i32, size: f64, rows: Vec<(VoxelCoord, Vec<f32>)>) -> SparseTensor {
        let ch = rows.first().map(|(_, f)| f.len()).unwrap_or(1);
        SparseTensor::from_rows(level, size, ch, rows).unwrap()
    }

    #[test]
    fn partial_add_definition_case() {
        let b = tensor(
            1,
            0.04,
            vec![
                (VoxelCoord::new(0, 0, 0), vec![1.0]),
                (VoxelCoord::new(1, 0, 0), vec![2.0]),
            ],
        );
        let u = tensor(
            1,
            0.04,
            vec![
                (VoxelCoord::new(0, 0, 0), vec![0.5]),
                (VoxelCoord::new(2, 0, 0), vec![3.0]),
            ],
        );
        let m = partial_add(&b, &u).unwrap();
        assert_eq!(m.coords(), u.coords());
        assert_eq!(m.feature(0), &[1.5]);
        assert_eq!(m.feature(1), &[3.0]);
    }

    #[test]
    fn partial_add_empty_upsampled_is_empty() {
        let b = tensor(1, 0.04, vec![(VoxelCoord::new(0, 0, 0), vec![1.0])]);
        let u = SparseTensor::empty(1, 0.04, 1);
        assert!(partial_add(&b, &u).unwrap().is_empty());
    }

    #[test]
    fn partial_add_disjoint_equals_upsampled() {
        let b = tensor(1, 0.04, vec![(VoxelCoord::new(5, 5, 5), vec![1.0])]);
        let u = tensor(1, 0.04, vec![(VoxelCoord::new(0, 0, 0), vec![0.25])]);
        let m = partial_add(&b, &u).unwrap();
        assert_eq!(m.coords(), u.coords());
        assert_eq!(m.features(), u.features());
    }

    fn zero_prune_head(ch: usize) -> PruneHeadParams {
        PruneHeadParams::new(ch, 4, vec![0.0; ch * 4], vec![0.0; 4], vec![0.0; 4], vec![0.0])
            .unwrap()
    }

    #[test]
    fn predict_keep_zero_weights_scores_half() {
        let t = tensor(
            2,
            0.08,
            vec![
                (VoxelCoord::new(0, 0, 0), vec![1.0, -2.0]),
                (VoxelCoord::new(1, 1, 1), vec![3.0, 4.0]),
            ],
        );
        let s = predict_keep(&t, &zero_prune_head(2)).unwrap();
        assert_eq!(s.scores, vec![0.5, 0.5]);
    }

    #[test]
    fn predict_keep_empty_tensor_empty_scores() {
        let t = SparseTensor::empty(3, 0.16, 2);
        let s = predict_keep(&t, &zero_prune_head(2)).unwrap();
        assert!(s.scores.is_empty());
    }

    #[test]
    fn predict_keep_closed_form_sigmoid() {
        // One input channel, one hidden unit wired to pre-activation 2.0.
        let head = PruneHeadParams::new(1, 1, vec![1.0], vec![0.0], vec![2.0], vec![0.0]).unwrap();
        let t = tensor(2, 0.08, vec![(VoxelCoord::new(0, 0, 0), vec![1.0])]);
        let s = predict_keep(&t, &head).unwrap();
        let expected = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((s.scores[0] as f64 - expected).abs() < 1e-6);
        assert!((s.scores[0] - 0.8808).abs() < 1e-3);
    }

    fn scored(t: &SparseTensor, scores: Vec<f32>) -> KeepScores {
        KeepScores {
            level: t.level(),
            coords: t.coords().to_vec(),
            scores,
        }
    }

    #[test]
    fn prune_threshold_semantics() {
        let t = tensor(
            2,
            0.08,
            vec![
                (VoxelCoord::new(0, 0, 0), vec![1.0]),
                (VoxelCoord::new(1, 0, 0), vec![2.0]),
            ],
        );
        let kept = prune(&t, &scored(&t, vec![0.9, 0.2]), 0.3).unwrap();
        assert_eq!(kept.coords(), &[VoxelCoord::new(0, 0, 0)]);

        // tau = 0 keeps everything (sigmoid scores are positive).
        let kept = prune(&t, &scored(&t, vec![0.001, 0.999]), 0.0).unwrap();
        assert_eq!(kept.len(), 2);

        // tau = 1 removes everything (sigmoid scores are below one).
        let kept = prune(&t, &scored(&t, vec![0.9999, 0.5]), 1.0).unwrap();
        assert_eq!(kept.len(), 0);

        // Boundary is inclusive: a score exactly at tau survives.
        let kept = prune(&t, &scored(&t, vec![0.3, 0.2]), 0.3).unwrap();
        assert_eq!(kept.len(), 1);
    }

    #[test]
    fn prune_rejects_coordinate_mismatch() {
        let t = tensor(2, 0.08, vec![(VoxelCoord::new(0, 0, 0), vec![1.0])]);
        let other = tensor(2, 0.08, vec![(VoxelCoord::new(1, 0, 0), vec![1.0])]);
        let s = scored(&other, vec![0.5]);
        assert!(matches!(
            prune(&t, &s, 0.5),
            Err(EngineError::CoordMismatch(_))
        ));
    }

    #[test]
    fn weak_prune_is_noop_under_budget() {
        let t = tensor(
            1,
            0.04,
            (0..10)
                .map(|i| (VoxelCoord::new(i, 0, 0), vec![i as f32]))
                .collect(),
        );
        let parents = KeepScores {
            level: 2,
            coords: vec![],
            scores: vec![],
        };
        let out = weak_prune(&t, &parents, 100_000).unwrap();
        assert_eq!(out.coords(), t.coords());
        assert_eq!(out.features(), t.features());
    }

    #[test]
    fn weak_prune_keeps_best_scored_parents() {
        // Four level-1 voxels under four distinct level-2 parents.
        let t = tensor(
            1,
            0.04,
            vec![
                (VoxelCoord::new(0, 0, 0), vec![1.0]),
                (VoxelCoord::new(2, 0, 0), vec![2.0]),
                (VoxelCoord::new(4, 0, 0), vec![3.0]),
                (VoxelCoord::new(6, 0, 0), vec![4.0]),
            ],
        );
        let parents = KeepScores {
            level: 2,
            coords: vec![
                VoxelCoord::new(0, 0, 0),
                VoxelCoord::new(1, 0, 0),
                VoxelCoord::new(2, 0, 0),
                VoxelCoord::new(3, 0, 0),
            ],
            scores: vec![0.9, 0.9, 0.1, 0.1],
        };
        let out = weak_prune(&t, &parents, 2).unwrap();
        assert_eq!(
            out.coords(),
            &[VoxelCoord::new(0, 0, 0), VoxelCoord::new(2, 0, 0)]
        );
    }

    #[test]
    fn weak_prune_ties_break_canonically() {
        let t = tensor(
            1,
            0.04,
            vec![
                (VoxelCoord::new(0, 0, 0), vec![1.0]),
                (VoxelCoord::new(1, 0, 0), vec![2.0]),
                (VoxelCoord::new(0, 1, 0), vec![3.0]),
            ],
        );
        let parents = KeepScores {
            level: 2,
            coords: vec![VoxelCoord::new(0, 0, 0)],
            scores: vec![0.7],
        };
        let out = weak_prune(&t, &parents, 1).unwrap();
        assert_eq!(out.coords(), &[VoxelCoord::new(0, 0, 0)]);
    }

    #[test]
    fn detection_head_zero_weights_zero_outputs() {
        let cfg = PipelineConfig::desk();
        let mut head = init_params(&cfg, 2).decoder.head;
        head.conv.weights.iter_mut().for_each(|w| *w = 0.0);
        head.cls.weights.iter_mut().for_each(|w| *w = 0.0);
        head.reg.weights.iter_mut().for_each(|w| *w = 0.0);
        let ch = cfg.feat_channels;
        let t = tensor(2, 0.08, vec![(VoxelCoord::new(0, 0, 0), vec![1.0; ch])]);
        let pred = detection_head(&t, &head).unwrap();
        assert!(pred.class_logits.iter().all(|&v| v == 0.0));
        assert!(pred.regression.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn detection_head_empty_input() {
        let cfg = PipelineConfig::desk();
        let head = init_params(&cfg, 2).decoder.head;
        let t = SparseTensor::empty(1, 0.04, cfg.feat_channels);
        let pred = detection_head(&t, &head).unwrap();
        assert!(pred.is_empty());
    }

    #[test]
    fn detection_head_matches_primitive_composition() {
        let cfg = PipelineConfig::desk();
        let params = init_params(&cfg, 21);
        let head = &params.decoder.head;
        let ch = cfg.feat_channels;
        let rows: Vec<_> = (0..4)
            .map(|i| {
                (
                    VoxelCoord::new(i, i % 2, 0),
                    (0..ch).map(|c| ((i * 31 + c as i32 * 7) % 13) as f32 * 0.1 - 0.6).collect(),
                )
            })
            .collect();
        let t = tensor(2, 0.08, rows);
        let pred = detection_head(&t, head).unwrap();

        let h = affine_relu(&conv_s1(&t, &head.conv).unwrap(), &head.affine, true).unwrap();
        let logits = conv_pointwise(&h, &head.cls).unwrap();
        let reg = conv_pointwise(&h, &head.reg).unwrap();
        assert_eq!(pred.class_logits, logits.features());
        assert_eq!(pred.regression, reg.features());
    }

    fn small_scene() -> SparseTensor {
        let mut pts = Vec::new();
        for i in 0..6 {
            for j in 0..6 {
                for k in 0..3 {
                    pts.push([
                        0.30 + i as f64 * 0.02,
                        0.30 + j as f64 * 0.02,
                        0.10 + k as f64 * 0.02,
                    ]);
                }
            }
        }
        quantize(&pts, 0.01).unwrap()
    }

    #[test]
    fn tau_zero_forward_is_bitwise_equal_to_disabled_pruning() {
        let cfg = PipelineConfig::desk();
        let params = init_params(&cfg, 40);
        let feats = crate::backbone::backbone_forward(&small_scene(), &params.backbone).unwrap();

        let a = decoder_forward(&feats, &params.decoder, &ForwardOptions::inference(0.0)).unwrap();
        let opts = ForwardOptions {
            mode: ForwardMode::Inference {
                tau: 0.7,
                prune_enabled: false,
            },
            keep_override: None,
        };
        let b = decoder_forward(&feats, &params.decoder, &opts).unwrap();
        for (pa, pb) in a.predictions.iter().zip(&b.predictions) {
            assert_eq!(pa.coords, pb.coords);
            assert_eq!(pa.class_logits, pb.class_logits);
            assert_eq!(pa.regression, pb.regression);
        }
    }

    #[test]
    fn empty_scene_gives_empty_predictions() {
        let cfg = PipelineConfig::desk();
        let params = init_params(&cfg, 40);
        let scene = quantize(&[], cfg.base_voxel).unwrap();
        let feats = crate::backbone::backbone_forward(&scene, &params.backbone).unwrap();
        let out = decoder_forward(&feats, &params.decoder, &ForwardOptions::inference(0.3)).unwrap();
        for p in &out.predictions {
            assert!(p.is_empty());
        }
        for s in &out.stats {
            assert_eq!(s.voxels_before_prune, 0);
        }
    }

    #[test]
    fn training_mode_produces_keep_scores_for_levels_2_to_4() {
        let cfg = PipelineConfig::desk();
        let params = init_params(&cfg, 40);
        let feats = crate::backbone::backbone_forward(&small_scene(), &params.backbone).unwrap();
        let out =
            decoder_forward(&feats, &params.decoder, &ForwardOptions::training(cfg.n_max)).unwrap();
        let levels: Vec<i32> = out.keep_scores.iter().map(|k| k.level).collect();
        assert_eq!(levels, vec![2, 3, 4]);
        // Keep scores align with the prediction coordinates of their level.
        for k in &out.keep_scores {
            let pred = &out.predictions[k.level as usize - 1];
            assert_eq!(k.coords, pred.coords);
        }
    }

    #[test]
    fn pruning_monotonic_in_tau_for_fixed_scores() {
        let t = tensor(
            2,
            0.08,
            (0..20)
                .map(|i| (VoxelCoord::new(i, 0, 0), vec![1.0]))
                .collect(),
        );
        let scores = scored(
            &t,
            (0..20).map(|i| 0.05 * i as f32).collect::<Vec<_>>(),
        );
        let mut prev: Option<Vec<VoxelCoord>> = None;
        for step in 0..=10 {
            let tau = step as f64 / 10.0;
            let kept = prune(&t, &scores, tau).unwrap();
            let coords = kept.coords().to_vec();
            if let Some(prev) = &prev {
                assert!(coords.iter().all(|c| prev.contains(c)));
                assert!(coords.len() <= prev.len());
            }
            prev = Some(coords);
        }
    }
}
