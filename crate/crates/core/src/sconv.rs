//! Sparse convolution engine.
//!
//! Four operators cover the whole network: submanifold stride-1 kernel-3
//! convolution, stride-2 kernel-1 downsampling, stride-2 kernel-3
//! generative transposed convolution and per-channel affine (folded
//! normalization) with optional ReLU.
//!
//! Accumulation is carried out in f64 in a fixed order — kernel offsets in
//! `(dz, dy, dx)` lexicographic order, contributing voxels in canonical
//! order — and rounded to f32 once per output value. Workers only ever
//! parallelize over output voxels, so results are bit-identical for any
//! thread count.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{EngineError, Result};
use crate::parallel::for_row_chunks;
use crate::voxgrid::{kernel3_index, SparseTensor, VoxelCoord, COORD_LIMIT, KERNEL3_OFFSETS};

/// Weights of one sparse convolution layer.
///
/// `weights` is laid out `[kernel_size^3][in_channels][out_channels]`
/// row-major, with kernel offsets enumerated in `(dz, dy, dx)`
/// lexicographic order (a single `(0,0,0)` tap for kernel size 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub transposed: bool,
    pub weights: Vec<f32>,
    pub bias: Option<Vec<f32>>,
}

impl ConvParams {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        transposed: bool,
        weights: Vec<f32>,
        bias: Option<Vec<f32>>,
    ) -> Result<Self> {
        if !matches!(kernel_size, 1 | 3) {
            return Err(EngineError::InvalidArgument("kernel_size must be 1 or 3"));
        }
        if !matches!(stride, 1 | 2) {
            return Err(EngineError::InvalidArgument("stride must be 1 or 2"));
        }
        let expected = kernel_size.pow(3) * in_channels * out_channels;
        if weights.len() != expected {
            return Err(EngineError::ParamShape {
                name: alloc::string::String::from("conv.weight"),
                expected,
                got: weights.len(),
            });
        }
        if !weights.iter().all(|w| w.is_finite()) {
            return Err(EngineError::ParamNotFinite {
                name: alloc::string::String::from("conv.weight"),
            });
        }
        if let Some(b) = &bias {
            if b.len() != out_channels {
                return Err(EngineError::ParamShape {
                    name: alloc::string::String::from("conv.bias"),
                    expected: out_channels,
                    got: b.len(),
                });
            }
            if !b.iter().all(|v| v.is_finite()) {
                return Err(EngineError::ParamNotFinite {
                    name: alloc::string::String::from("conv.bias"),
                });
            }
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel_size,
            stride,
            transposed,
            weights,
            bias,
        })
    }

    fn weights_f64(&self) -> Vec<f64> {
        self.weights.iter().map(|&w| w as f64).collect()
    }

    fn bias_f64(&self) -> Vec<f64> {
        match &self.bias {
            Some(b) => b.iter().map(|&v| v as f64).collect(),
            None => vec![0.0; self.out_channels],
        }
    }
}

/// Per-channel scale and shift (inference-time normalization folded into
/// an affine map).
#[derive(Debug, Clone, PartialEq)]
pub struct AffineParams {
    pub scale: Vec<f32>,
    pub bias: Vec<f32>,
}

impl AffineParams {
    pub fn new(scale: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if scale.len() != bias.len() {
            return Err(EngineError::InvalidArgument(
                "affine scale and bias lengths differ",
            ));
        }
        if !scale.iter().all(|v| v.is_finite() && *v != 0.0) {
            return Err(EngineError::ParamNotFinite {
                name: alloc::string::String::from("affine.scale"),
            });
        }
        if !bias.iter().all(|v| v.is_finite()) {
            return Err(EngineError::ParamNotFinite {
                name: alloc::string::String::from("affine.bias"),
            });
        }
        Ok(Self { scale, bias })
    }

    /// Identity affine of the given width.
    pub fn identity(channels: usize) -> Self {
        Self {
            scale: vec![1.0; channels],
            bias: vec![0.0; channels],
        }
    }
}

fn check_channels(input: &SparseTensor, p: &ConvParams) -> Result<()> {
    if input.channels() != p.in_channels {
        return Err(EngineError::ChannelMismatch {
            expected: p.in_channels,
            got: input.channels(),
        });
    }
    Ok(())
}

/// Submanifold convolution: kernel 3, stride 1, output coordinates equal
/// input coordinates (no dilation). The feature at voxel `v` is
/// `sum_o W[o]^T · feat(v + o)` over occupied neighbors, in fixed offset
/// order, plus bias.
pub fn conv_s1(input: &SparseTensor, p: &ConvParams) -> Result<SparseTensor> {
    if p.kernel_size != 3 || p.stride != 1 || p.transposed {
        return Err(EngineError::InvalidArgument(
            "conv_s1 expects kernel 3, stride 1, not transposed",
        ));
    }
    check_channels(input, p)?;
    let (cin, cout) = (p.in_channels, p.out_channels);
    let w = p.weights_f64();
    let bias = p.bias_f64();
    let coords = input.coords();

    let mut out = vec![0.0f32; input.len() * cout];
    for_row_chunks(&mut out, cout, |first, chunk| {
        let mut acc = vec![0.0f64; cout];
        for (r, row_out) in chunk.chunks_mut(cout).enumerate() {
            let v = coords[first + r];
            acc.iter_mut().for_each(|a| *a = 0.0);
            for (k, [dx, dy, dz]) in KERNEL3_OFFSETS.iter().enumerate() {
                let Some(nrow) = input.row_of(v.offset(*dx, *dy, *dz)) else {
                    continue;
                };
                let feat = input.feature(nrow);
                let wk = &w[k * cin * cout..(k + 1) * cin * cout];
                accumulate(&mut acc, feat, wk, cout);
            }
            for (o, a) in row_out.iter_mut().enumerate() {
                *a = (acc[o] + bias[o]) as f32;
            }
        }
    });

    Ok(SparseTensor::new_unchecked(
        input.level(),
        input.voxel_size(),
        cout,
        coords.to_vec(),
        out,
    ))
}

/// Pointwise convolution: kernel 1, stride 1 — an independent linear map
/// per voxel. Coordinates are unchanged.
pub fn conv_pointwise(input: &SparseTensor, p: &ConvParams) -> Result<SparseTensor> {
    if p.kernel_size != 1 || p.stride != 1 || p.transposed {
        return Err(EngineError::InvalidArgument(
            "conv_pointwise expects kernel 1, stride 1, not transposed",
        ));
    }
    check_channels(input, p)?;
    let (cin, cout) = (p.in_channels, p.out_channels);
    let w = p.weights_f64();
    let bias = p.bias_f64();

    let mut out = vec![0.0f32; input.len() * cout];
    for_row_chunks(&mut out, cout, |first, chunk| {
        let mut acc = vec![0.0f64; cout];
        for (r, row_out) in chunk.chunks_mut(cout).enumerate() {
            acc.iter_mut().for_each(|a| *a = 0.0);
            accumulate(&mut acc, input.feature(first + r), &w[..cin * cout], cout);
            for (o, a) in row_out.iter_mut().enumerate() {
                *a = (acc[o] + bias[o]) as f32;
            }
        }
    });

    Ok(SparseTensor::new_unchecked(
        input.level(),
        input.voxel_size(),
        cout,
        input.coords().to_vec(),
        out,
    ))
}

/// Strided downsampling: kernel 1, stride 2. Output coordinates are the
/// deduplicated `floor(c / 2)`; each output accumulates `W · feat` over the
/// up-to-eight input voxels that map to it, in canonical input order.
pub fn conv_down(input: &SparseTensor, p: &ConvParams) -> Result<SparseTensor> {
    if p.kernel_size != 1 || p.stride != 2 || p.transposed {
        return Err(EngineError::InvalidArgument(
            "conv_down expects kernel 1, stride 2, not transposed",
        ));
    }
    check_channels(input, p)?;
    let (cin, cout) = (p.in_channels, p.out_channels);
    let w = p.weights_f64();
    let bias = p.bias_f64();

    // (parent key, input row); row order within a parent is canonical
    // because input rows already are.
    let mut pairs: Vec<(u64, u32)> = input
        .coords()
        .iter()
        .enumerate()
        .map(|(r, c)| (c.parent().pack(), r as u32))
        .collect();
    pairs.sort_unstable();

    let mut coords = Vec::new();
    let mut features = Vec::new();
    let mut acc = vec![0.0f64; cout];
    let mut i = 0;
    while i < pairs.len() {
        let key = pairs[i].0;
        acc.iter_mut().for_each(|a| *a = 0.0);
        while i < pairs.len() && pairs[i].0 == key {
            let feat = input.feature(pairs[i].1 as usize);
            accumulate(&mut acc, feat, &w[..cin * cout], cout);
            i += 1;
        }
        // Groups arrive in ascending packed-key order, i.e. canonical order.
        coords.push(input.coords()[pairs[i - 1].1 as usize].parent());
        features.extend(acc.iter().zip(&bias).map(|(a, b)| (a + b) as f32));
    }

    Ok(SparseTensor::new_unchecked(
        input.level() + 1,
        input.voxel_size() * 2.0,
        cout,
        coords,
        features,
    ))
}

/// Generative transposed convolution: kernel 3, stride 2. Every input voxel
/// `c` emits all 27 children `2c + o`; the output coordinate set is their
/// union. Contributions to one output are accumulated over its (at most
/// eight) parents in canonical order, then the bias is added once.
pub fn generative_deconv(input: &SparseTensor, p: &ConvParams) -> Result<SparseTensor> {
    if p.kernel_size != 3 || p.stride != 2 || !p.transposed {
        return Err(EngineError::InvalidArgument(
            "generative_deconv expects kernel 3, stride 2, transposed",
        ));
    }
    if input.level() < 1 {
        return Err(EngineError::LevelOutOfRange {
            level: input.level(),
            what: "generative_deconv (cannot upsample below the base level)",
        });
    }
    check_channels(input, p)?;
    let (cin, cout) = (p.in_channels, p.out_channels);
    let w = p.weights_f64();
    let bias = p.bias_f64();

    let mut child_keys: Vec<u64> = Vec::with_capacity(input.len() * 27);
    for c in input.coords() {
        let base = VoxelCoord::new(c.x * 2, c.y * 2, c.z * 2);
        if base.x.abs() + 1 >= COORD_LIMIT
            || base.y.abs() + 1 >= COORD_LIMIT
            || base.z.abs() + 1 >= COORD_LIMIT
        {
            return Err(EngineError::CoordOutOfRange {
                axis: 'x',
                value: base.x as i64,
            });
        }
        for [dx, dy, dz] in KERNEL3_OFFSETS {
            child_keys.push(base.offset(dx, dy, dz).pack());
        }
    }
    child_keys.sort_unstable();
    child_keys.dedup();
    let coords: Vec<VoxelCoord> = child_keys.iter().map(|&k| unpack(k)).collect();

    let mut out = vec![0.0f32; coords.len() * cout];
    for_row_chunks(&mut out, cout, |first, chunk| {
        let mut acc = vec![0.0f64; cout];
        for (r, row_out) in chunk.chunks_mut(cout).enumerate() {
            let u = coords[first + r];
            acc.iter_mut().for_each(|a| *a = 0.0);
            // Parity-feasible parents per axis, ascending, so the nested
            // loops visit candidates in canonical (z, y, x) order.
            let (zs, nz) = parent_axis(u.z);
            let (ys, ny) = parent_axis(u.y);
            let (xs, nx) = parent_axis(u.x);
            for &cz in &zs[..nz] {
                for &cy in &ys[..ny] {
                    for &cx in &xs[..nx] {
                        let parent = VoxelCoord::new(cx, cy, cz);
                        let Some(prow) = input.row_of(parent) else {
                            continue;
                        };
                        let k = kernel3_index(u.x - 2 * cx, u.y - 2 * cy, u.z - 2 * cz);
                        let wk = &w[k * cin * cout..(k + 1) * cin * cout];
                        accumulate(&mut acc, input.feature(prow), wk, cout);
                    }
                }
            }
            for (o, a) in row_out.iter_mut().enumerate() {
                *a = (acc[o] + bias[o]) as f32;
            }
        }
    });

    Ok(SparseTensor::new_unchecked(
        input.level() - 1,
        input.voxel_size() * 0.5,
        cout,
        coords,
        out,
    ))
}

/// Per-voxel, per-channel `scale * x + bias`, then `max(0, ·)` when `relu`
/// is set. Coordinates are unchanged.
pub fn affine_relu(input: &SparseTensor, a: &AffineParams, relu: bool) -> Result<SparseTensor> {
    if input.channels() != a.scale.len() {
        return Err(EngineError::ChannelMismatch {
            expected: a.scale.len(),
            got: input.channels(),
        });
    }
    let ch = input.channels();
    let mut features = Vec::with_capacity(input.features().len());
    for row in 0..input.len() {
        for (c, &x) in input.feature(row).iter().enumerate() {
            let mut v = a.scale[c] * x + a.bias[c];
            if relu {
                v = v.max(0.0);
            }
            features.push(v);
        }
    }
    Ok(SparseTensor::new_unchecked(
        input.level(),
        input.voxel_size(),
        ch,
        input.coords().to_vec(),
        features,
    ))
}

/// `acc[o] += feat[i] * w[i][o]` with the inner loop over output channels.
#[inline]
fn accumulate(acc: &mut [f64], feat: &[f32], w: &[f64], cout: usize) {
    for (ci, &f) in feat.iter().enumerate() {
        let fv = f as f64;
        let wrow = &w[ci * cout..(ci + 1) * cout];
        for (a, &wv) in acc.iter_mut().zip(wrow) {
            *a += fv * wv;
        }
    }
}

/// Candidate parent indices along one axis for output index `u`:
/// `c` with `2c + o = u`, `o ∈ {-1, 0, 1}`.
#[inline]
fn parent_axis(u: i32) -> ([i32; 2], usize) {
    if u.rem_euclid(2) == 0 {
        ([u / 2, 0], 1)
    } else {
        ([(u - 1).div_euclid(2), (u + 1).div_euclid(2)], 2)
    }
}

fn unpack(key: u64) -> VoxelCoord {
    let mask = (1u64 << 21) - 1;
    VoxelCoord::new(
        (key & mask) as i32 - COORD_LIMIT,
        ((key >> 21) & mask) as i32 - COORD_LIMIT,
        ((key >> 42) & mask) as i32 - COORD_LIMIT,
    )
}
