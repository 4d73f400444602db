//! Binary weight files.
//!
//! Layout: magic `DSPW`, version byte `1`, a little-endian u32 header
//! length, a JSON manifest `[{"name", "shape", "offset"}, ...]` and the
//! payload of little-endian IEEE-754 f32 values. Manifest entries appear
//! in registry order with contiguous, non-overlapping byte offsets into
//! the payload; every model parameter appears exactly once.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use dsp3d_core::model::{init_named, ModelParams};
use dsp3d_core::PipelineConfig;
use serde::{Deserialize, Serialize};

const MAGIC: &[u8; 4] = b"DSPW";
const VERSION: u8 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset of this tensor within the payload.
    offset: usize,
}

fn encode(named: &[(String, Vec<usize>, Vec<f32>)]) -> Vec<u8> {
    let mut manifest = Vec::with_capacity(named.len());
    let mut offset = 0usize;
    for (name, shape, values) in named {
        manifest.push(ManifestEntry {
            name: name.clone(),
            shape: shape.clone(),
            offset,
        });
        offset += values.len() * 4;
    }
    let header = serde_json::to_vec(&manifest).expect("manifest serializes");

    let mut out = Vec::with_capacity(9 + header.len() + offset);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, _, values) in named {
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Write the full parameter set of `model` to `path`.
pub fn save_weights(path: &Path, cfg: &PipelineConfig, model: &ModelParams) -> Result<()> {
    let bytes = encode(&model.to_named(cfg));
    std::fs::write(path, bytes).with_context(|| format!("writing weights {}", path.display()))
}

/// Read and validate a weight file against the model registry for `cfg`.
pub fn load_weights(path: &Path, cfg: &PipelineConfig) -> Result<ModelParams> {
    let bytes =
        std::fs::read(path).with_context(|| format!("reading weights {}", path.display()))?;
    decode(&bytes, cfg).with_context(|| format!("weight file {}", path.display()))
}

fn decode(bytes: &[u8], cfg: &PipelineConfig) -> Result<ModelParams> {
    if bytes.len() < 9 {
        bail!("truncated: {} bytes", bytes.len());
    }
    if &bytes[0..4] != MAGIC {
        bail!("bad magic {:?} (expected \"DSPW\")", &bytes[0..4]);
    }
    if bytes[4] != VERSION {
        bail!("unsupported version {}", bytes[4]);
    }
    let header_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let payload_start = 9 + header_len;
    if bytes.len() < payload_start {
        bail!("truncated header: {} of {} bytes", bytes.len() - 9, header_len);
    }
    let manifest: Vec<ManifestEntry> =
        serde_json::from_slice(&bytes[9..payload_start]).context("invalid manifest JSON")?;
    let payload = &bytes[payload_start..];

    let mut expected_offset = 0usize;
    let mut values: BTreeMap<String, Vec<f32>> = BTreeMap::new();
    for entry in &manifest {
        let count: usize = entry.shape.iter().product();
        if entry.offset != expected_offset {
            bail!(
                "manifest offsets must be sorted and contiguous: {} at {} (expected {})",
                entry.name,
                entry.offset,
                expected_offset
            );
        }
        let end = entry.offset + count * 4;
        if end > payload.len() {
            bail!(
                "payload truncated: {} needs bytes {}..{} of {}",
                entry.name,
                entry.offset,
                end,
                payload.len()
            );
        }
        let mut vals = Vec::with_capacity(count);
        for chunk in payload[entry.offset..end].chunks_exact(4) {
            vals.push(f32::from_le_bytes(chunk.try_into().unwrap()));
        }
        if values.insert(entry.name.clone(), vals).is_some() {
            bail!("duplicate parameter {}", entry.name);
        }
        expected_offset = end;
    }
    if expected_offset != payload.len() {
        bail!(
            "payload length {} does not match manifest total {}",
            payload.len(),
            expected_offset
        );
    }

    ModelParams::from_named(cfg, values).map_err(|e| anyhow::anyhow!("{e}"))
}

/// Seed-initialize a parameter set and write it to `path`.
pub fn init_and_save(path: &Path, cfg: &PipelineConfig, seed: u64) -> Result<ModelParams> {
    let model = ModelParams::from_named(cfg, init_named(cfg, seed))
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    save_weights(path, cfg, &model)?;
    Ok(model)
}
