//! Dense reference convolutions on small boxed grids.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{EngineError, Result};
use crate::voxgrid::{SparseTensor, VoxelCoord};

/// Constructed grids refuse dimensions beyond this per axis.
pub const DENSE_GUARD: usize = 32;

/// A dense block of voxels with `channels` values per cell, addressed by
/// absolute voxel coordinates starting at `origin`.
#[derive(Debug, Clone)]
pub struct DenseGrid {
    pub origin: VoxelCoord,
    /// Extents along x, y, z.
    pub dims: [usize; 3],
    pub channels: usize,
    /// `[z][y][x][channel]` row-major.
    pub values: Vec<f64>,
}

impl DenseGrid {
    pub fn zeros(origin: VoxelCoord, dims: [usize; 3], channels: usize) -> Result<Self> {
        if dims.iter().any(|&d| d > DENSE_GUARD) {
            return Err(EngineError::OracleGuard { limit: DENSE_GUARD });
        }
        Ok(Self::zeros_unguarded(origin, dims, channels))
    }

    fn zeros_unguarded(origin: VoxelCoord, dims: [usize; 3], channels: usize) -> Self {
        Self {
            origin,
            dims,
            channels,
            values: vec![0.0; dims[0] * dims[1] * dims[2] * channels],
        }
    }

    fn offset_of(&self, c: VoxelCoord) -> Option<usize> {
        let lx = (c.x - self.origin.x) as i64;
        let ly = (c.y - self.origin.y) as i64;
        let lz = (c.z - self.origin.z) as i64;
        let inside = (0..self.dims[0] as i64).contains(&lx)
            && (0..self.dims[1] as i64).contains(&ly)
            && (0..self.dims[2] as i64).contains(&lz);
        if !inside {
            return None;
        }
        let (nx, ny) = (self.dims[0] as i64, self.dims[1] as i64);
        Some((((lz * ny + ly) * nx + lx) as usize) * self.channels)
    }

    /// Value at `(coord, channel)`; zero outside the grid.
    pub fn get(&self, c: VoxelCoord, ch: usize) -> f64 {
        match self.offset_of(c) {
            Some(base) => self.values[base + ch],
            None => 0.0,
        }
    }

    pub fn set(&mut self, c: VoxelCoord, ch: usize, v: f64) {
        let base = self.offset_of(c).expect("coordinate outside dense grid");
        self.values[base + ch] = v;
    }

    fn add(&mut self, c: VoxelCoord, ch: usize, v: f64) {
        if let Some(base) = self.offset_of(c) {
            self.values[base + ch] += v;
        }
    }

    /// Iterate all absolute cell coordinates of the grid.
    pub fn cells(&self) -> impl Iterator<Item = VoxelCoord> + '_ {
        let o = self.origin;
        let [nx, ny, nz] = self.dims;
        (0..nz).flat_map(move |z| {
            (0..ny).flat_map(move |y| {
                (0..nx).map(move |x| VoxelCoord::new(o.x + x as i32, o.y + y as i32, o.z + z as i32))
            })
        })
    }

    /// Scatter a sparse tensor into its bounding box.
    pub fn from_sparse(t: &SparseTensor) -> Result<Self> {
        if t.is_empty() {
            return Self::zeros(VoxelCoord::new(0, 0, 0), [0, 0, 0], t.channels());
        }
        let mut min = t.coords()[0];
        let mut max = t.coords()[0];
        for c in t.coords() {
            min = VoxelCoord::new(min.x.min(c.x), min.y.min(c.y), min.z.min(c.z));
            max = VoxelCoord::new(max.x.max(c.x), max.y.max(c.y), max.z.max(c.z));
        }
        let dims = [
            (max.x - min.x + 1) as usize,
            (max.y - min.y + 1) as usize,
            (max.z - min.z + 1) as usize,
        ];
        let mut g = Self::zeros(min, dims, t.channels())?;
        for (row, c) in t.coords().iter().enumerate() {
            for (ch, &v) in t.feature(row).iter().enumerate() {
                g.set(*c, ch, v as f64);
            }
        }
        Ok(g)
    }
}

/// Textbook dense 3D (transposed) convolution with zero padding, in f64.
///
/// Supported shapes mirror the sparse engine: kernel 3 / stride 1, kernel 1
/// / stride 2 (summing each 2×2×2 cell), and kernel 3 / stride 2 transposed
/// (scatter to `2c + o`, bias on every output cell). Weights are laid out
/// `[kernel^3][in][out]` with offsets in `(dz, dy, dx)` lexicographic
/// order, exactly like the engine's.
#[allow(clippy::too_many_arguments)]
pub fn dense_conv_oracle(
    grid: &DenseGrid,
    weights: &[f32],
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    transposed: bool,
    bias: Option<&[f32]>,
) -> Result<DenseGrid> {
    if grid.channels != in_channels {
        return Err(EngineError::ChannelMismatch {
            expected: in_channels,
            got: grid.channels,
        });
    }
    let expected = kernel.pow(3) * in_channels * out_channels;
    if weights.len() != expected {
        return Err(EngineError::ParamShape {
            name: alloc::string::String::from("oracle weights"),
            expected,
            got: weights.len(),
        });
    }
    let w = |k: usize, ci: usize, co: usize| weights[(k * in_channels + ci) * out_channels + co] as f64;
    let b = |co: usize| bias.map(|b| b[co] as f64).unwrap_or(0.0);

    match (kernel, stride, transposed) {
        (3, 1, false) => {
            let mut out = DenseGrid::zeros_unguarded(grid.origin, grid.dims, out_channels);
            for cell in grid.cells() {
                for co in 0..out_channels {
                    let mut acc = 0.0;
                    let mut k = 0;
                    for dz in -1..=1 {
                        for dy in -1..=1 {
                            for dx in -1..=1 {
                                let nb = cell.offset(dx, dy, dz);
                                for ci in 0..in_channels {
                                    acc += w(k, ci, co) * grid.get(nb, ci);
                                }
                                k += 1;
                            }
                        }
                    }
                    out.set(cell, co, acc + b(co));
                }
            }
            Ok(out)
        }
        (1, 2, false) => {
            let half = |v: i32| v.div_euclid(2);
            let o = grid.origin;
            let max = VoxelCoord::new(
                o.x + grid.dims[0] as i32 - 1,
                o.y + grid.dims[1] as i32 - 1,
                o.z + grid.dims[2] as i32 - 1,
            );
            let origin = VoxelCoord::new(half(o.x), half(o.y), half(o.z));
            let dims = [
                (half(max.x) - origin.x + 1) as usize,
                (half(max.y) - origin.y + 1) as usize,
                (half(max.z) - origin.z + 1) as usize,
            ];
            let mut out = DenseGrid::zeros_unguarded(origin, dims, out_channels);
            let cells: Vec<VoxelCoord> = out.cells().collect();
            for cell in cells {
                for co in 0..out_channels {
                    let mut acc = 0.0;
                    for dz in 0..=1 {
                        for dy in 0..=1 {
                            for dx in 0..=1 {
                                let child =
                                    VoxelCoord::new(2 * cell.x + dx, 2 * cell.y + dy, 2 * cell.z + dz);
                                for ci in 0..in_channels {
                                    acc += w(0, ci, co) * grid.get(child, ci);
                                }
                            }
                        }
                    }
                    out.set(cell, co, acc + b(co));
                }
            }
            Ok(out)
        }
        (3, 2, true) => {
            let o = grid.origin;
            let origin = VoxelCoord::new(2 * o.x - 1, 2 * o.y - 1, 2 * o.z - 1);
            let dims = [
                2 * (grid.dims[0].max(1) - 1) + 3,
                2 * (grid.dims[1].max(1) - 1) + 3,
                2 * (grid.dims[2].max(1) - 1) + 3,
            ];
            let mut out = DenseGrid::zeros_unguarded(origin, dims, out_channels);
            for cell in grid.cells() {
                let base = VoxelCoord::new(2 * cell.x, 2 * cell.y, 2 * cell.z);
                let mut k = 0;
                for dz in -1..=1 {
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            let dst = base.offset(dx, dy, dz);
                            for co in 0..out_channels {
                                let mut acc = 0.0;
                                for ci in 0..in_channels {
                                    acc += w(k, ci, co) * grid.get(cell, ci);
                                }
                                out.add(dst, co, acc);
                            }
                            k += 1;
                        }
                    }
                }
            }
            if bias.is_some() {
                let cells: Vec<VoxelCoord> = out.cells().collect();
                for cell in cells {
                    for co in 0..out_channels {
                        let v = out.get(cell, co);
                        out.set(cell, co, v + b(co));
                    }
                }
            }
            Ok(out)
        }
        _ => Err(EngineError::InvalidArgument(
            "unsupported oracle convolution shape",
        )),
    }
}

/// Largest `|sparse - dense| / max(1, |dense|)` over the sparse tensor's
/// voxels; infinite if a sparse voxel lies outside the dense grid.
pub fn max_mixed_rel_error(sparse: &SparseTensor, dense: &DenseGrid) -> f64 {
    let mut worst = 0.0f64;
    for (row, c) in sparse.coords().iter().enumerate() {
        for (ch, &s) in sparse.feature(row).iter().enumerate() {
            if dense.offset_of(*c).is_none() {
                return f64::INFINITY;
            }
            let d = dense.get(*c, ch);
            let err = (s as f64 - d).abs() / d.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    worst
}
