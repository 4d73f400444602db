//! Ground-truth box JSON: `{"boxes": [{"center": [...], "size": [...],
//! "class": n}, ...]}`, meters.

use std::path::Path;

use anyhow::{Context, Result};
use dsp3d_core::targets::Box3D;
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
struct BoxJson {
    center: [f64; 3],
    size: [f64; 3],
    class: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct BoxesFile {
    boxes: Vec<BoxJson>,
}

pub fn read_boxes(path: &Path) -> Result<Vec<Box3D>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading boxes {}", path.display()))?;
    let file: BoxesFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing boxes {}", path.display()))?;
    file.boxes
        .into_iter()
        .enumerate()
        .map(|(i, b)| {
            Box3D::new(b.center, b.size, b.class)
                .map_err(|e| anyhow::anyhow!("box {i}: {e}"))
        })
        .collect()
}

pub fn write_boxes(path: &Path, boxes: &[Box3D]) -> Result<()> {
    let file = BoxesFile {
        boxes: boxes
            .iter()
            .map(|b| BoxJson {
                center: b.center,
                size: b.size,
                class: b.class_id,
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&file).expect("boxes serialize");
    std::fs::write(path, text).with_context(|| format!("writing boxes {}", path.display()))
}
