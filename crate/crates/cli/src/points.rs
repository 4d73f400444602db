//! Point-cloud text format: one `x y z` triple in meters per line,
//! `#`-prefixed comment lines ignored.

use std::path::Path;

use anyhow::{bail, Context, Result};

pub fn parse_points(text: &str) -> Result<Vec<[f64; 3]>> {
    let mut pts = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let mut triple = [0.0f64; 3];
        for v in triple.iter_mut() {
            let tok = match it.next() {
                Some(t) => t,
                None => bail!("line {}: expected 3 coordinates", lineno + 1),
            };
            *v = tok
                .parse::<f64>()
                .with_context(|| format!("line {}: bad number {tok:?}", lineno + 1))?;
        }
        if it.next().is_some() {
            bail!("line {}: trailing fields after 3 coordinates", lineno + 1);
        }
        pts.push(triple);
    }
    Ok(pts)
}

pub fn read_points(path: &Path) -> Result<Vec<[f64; 3]>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading points {}", path.display()))?;
    parse_points(&text).with_context(|| format!("parsing points {}", path.display()))
}

pub fn write_points(path: &Path, pts: &[[f64; 3]]) -> Result<()> {
    let mut out = String::with_capacity(pts.len() * 24);
    out.push_str("# x y z (meters)\n");
    for p in pts {
        out.push_str(&format!("{} {} {}\n", p[0], p[1], p[2]));
    }
    std::fs::write(path, out).with_context(|| format!("writing points {}", path.display()))
}
