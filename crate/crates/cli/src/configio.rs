//! Strict JSON pipeline configuration. Missing keys take the built-in
//! defaults; unknown keys are rejected so experiment-script typos surface
//! immediately.

use std::path::Path;

use anyhow::{bail, Context, Result};
use dsp3d_core::{PipelineConfig, PipelineMode};
use serde::{Deserialize, Serialize};

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_vol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    base_voxel: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stem_channels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    feat_channels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    num_classes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual_units: Option<[usize; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nms_iou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    score_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<String>,
}

/// Parse a configuration JSON document.
pub fn parse_config(text: &str) -> Result<PipelineConfig> {
    let file: ConfigFile = serde_json::from_str(text).context("invalid config JSON")?;
    let mut cfg = PipelineConfig::default();
    macro_rules! merge {
        ($($field:ident),*) => {
            $(if let Some(v) = file.$field { cfg.$field = v; })*
        };
    }
    merge!(
        tau,
        r,
        n_vol,
        lambda,
        n_max,
        base_voxel,
        stem_channels,
        feat_channels,
        num_classes,
        residual_units,
        nms_iou,
        score_threshold
    );
    if let Some(mode) = file.mode {
        cfg.mode = match mode.as_str() {
            "inference" => PipelineMode::Inference,
            "training" => PipelineMode::Training,
            other => bail!("mode must be \"inference\" or \"training\", got {other:?}"),
        };
    }
    cfg.validate().context("invalid configuration")?;
    Ok(cfg)
}

/// Load and validate a configuration file.
pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    parse_config(&text).with_context(|| format!("parsing config {}", path.display()))
}

/// Serialize a configuration as a full JSON document (every key explicit).
pub fn config_to_json(cfg: &PipelineConfig) -> String {
    let file = ConfigFile {
        tau: Some(cfg.tau),
        r: Some(cfg.r),
        n_vol: Some(cfg.n_vol),
        lambda: Some(cfg.lambda),
        n_max: Some(cfg.n_max),
        base_voxel: Some(cfg.base_voxel),
        stem_channels: Some(cfg.stem_channels),
        feat_channels: Some(cfg.feat_channels),
        num_classes: Some(cfg.num_classes),
        residual_units: Some(cfg.residual_units),
        nms_iou: Some(cfg.nms_iou),
        score_threshold: Some(cfg.score_threshold),
        mode: Some(
            match cfg.mode {
                PipelineMode::Inference => "inference",
                PipelineMode::Training => "training",
            }
            .to_string(),
        ),
    };
    serde_json::to_string_pretty(&file).expect("config serializes")
}
