//! Sparse voxel tensor core: coordinate hashing, point-cloud quantization
//! and set algebra over coordinate maps.
//!
//! Coordinates follow one convention throughout the crate: the world
//! position of a voxel's minimum corner is `index * voxel_size` and its
//! center sits at `(index + 0.5) * voxel_size`. All tensors keep their
//! voxels sorted by `(z, y, x)` — the canonical order every operator
//! preserves, which is what makes runs reproducible bit-for-bit.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{EngineError, Result};
use crate::math;

/// Voxel indices are confined to `|c| < 2^20` per axis so a packed 64-bit
/// key is collision-free.
pub const COORD_LIMIT: i32 = 1 << 20;

/// Signed voxel indices of one occupied cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VoxelCoord {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl VoxelCoord {
    pub const fn new(x: i32, y: i32, z: i32) -> Self {
        Self { x, y, z }
    }

    pub fn in_range(&self) -> bool {
        self.x.abs() < COORD_LIMIT && self.y.abs() < COORD_LIMIT && self.z.abs() < COORD_LIMIT
    }

    /// Pack into a single key whose integer order equals the canonical
    /// `(z, y, x)` order. Requires [`Self::in_range`].
    pub fn pack(&self) -> u64 {
        debug_assert!(self.in_range());
        let b = |v: i32| (v + COORD_LIMIT) as u64;
        (b(self.z) << 42) | (b(self.y) << 21) | b(self.x)
    }

    /// Componentwise translation.
    pub fn offset(&self, dx: i32, dy: i32, dz: i32) -> Self {
        Self::new(self.x + dx, self.y + dy, self.z + dz)
    }

    /// Parent coordinate at the next coarser level (`floor(c / 2)`).
    pub fn parent(&self) -> Self {
        Self::new(
            self.x.div_euclid(2),
            self.y.div_euclid(2),
            self.z.div_euclid(2),
        )
    }

    /// World-space center of this voxel for a given voxel edge length.
    pub fn center(&self, voxel_size: f64) -> [f64; 3] {
        [
            (self.x as f64 + 0.5) * voxel_size,
            (self.y as f64 + 0.5) * voxel_size,
            (self.z as f64 + 0.5) * voxel_size,
        ]
    }
}

impl PartialOrd for VoxelCoord {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for VoxelCoord {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        (self.z, self.y, self.x).cmp(&(other.z, other.y, other.x))
    }
}

/// World-space center of `coord` under the crate-wide `+0.5` convention.
pub fn voxel_center(coord: VoxelCoord, voxel_size: f64) -> [f64; 3] {
    coord.center(voxel_size)
}

/// The 27 kernel offsets of a 3^3 kernel, enumerated in the fixed
/// `(dz, dy, dx)` lexicographic order used for weight indexing and
/// accumulation everywhere.
pub const KERNEL3_OFFSETS: [[i32; 3]; 27] = {
    let mut offs = [[0i32; 3]; 27];
    let mut k = 0;
    let mut dz = -1i32;
    while dz <= 1 {
        let mut dy = -1i32;
        while dy <= 1 {
            let mut dx = -1i32;
            while dx <= 1 {
                offs[k] = [dx, dy, dz];
                k += 1;
                dx += 1;
            }
            dy += 1;
        }
        dz += 1;
    }
    offs
};

/// Index of `(dx, dy, dz)` within [`KERNEL3_OFFSETS`].
pub fn kernel3_index(dx: i32, dy: i32, dz: i32) -> usize {
    debug_assert!(dx.abs() <= 1 && dy.abs() <= 1 && dz.abs() <= 1);
    (((dz + 1) * 3 + (dy + 1)) * 3 + (dx + 1)) as usize
}

type CoordIndex = hashbrown::HashMap<u64, u32>;

/// Coordinate-indexed set of occupied voxels with one feature row each.
///
/// `level` is the pyramid stage: the quantized input scene sits at level
/// `-1`, the preencoder output at level `0` and the backbone levels at
/// `1..=4` with `voxel_size = base * 2^(level + 1)`. Tensors are immutable
/// after construction and safe to share across threads.
#[derive(Debug, Clone)]
pub struct SparseTensor {
    level: i32,
    voxel_size: f64,
    channels: usize,
    coords: Vec<VoxelCoord>,
    features: Vec<f32>,
    index: CoordIndex,
}

impl SparseTensor {
    /// Tensor with no occupied voxels.
    pub fn empty(level: i32, voxel_size: f64, channels: usize) -> Self {
        Self {
            level,
            voxel_size,
            channels,
            coords: Vec::new(),
            features: Vec::new(),
            index: CoordIndex::new(),
        }
    }

    /// Build from coordinates already in canonical order without duplicates.
    pub fn new(
        level: i32,
        voxel_size: f64,
        channels: usize,
        coords: Vec<VoxelCoord>,
        features: Vec<f32>,
    ) -> Result<Self> {
        if features.len() != coords.len() * channels {
            return Err(EngineError::InvalidArgument(
                "feature length must be voxels * channels",
            ));
        }
        for w in coords.windows(2) {
            if w[0] >= w[1] {
                return Err(EngineError::InvalidArgument(
                    "coordinates must be strictly increasing in (z, y, x) order",
                ));
            }
        }
        for c in &coords {
            check_range(*c)?;
        }
        Ok(Self::new_unchecked(
            level, voxel_size, channels, coords, features,
        ))
    }

    /// Build from unordered `(coord, feature_row)` pairs; sorts canonically
    /// and rejects duplicates.
    pub fn from_rows(
        level: i32,
        voxel_size: f64,
        channels: usize,
        mut rows: Vec<(VoxelCoord, Vec<f32>)>,
    ) -> Result<Self> {
        for (c, row) in &rows {
            check_range(*c)?;
            if row.len() != channels {
                return Err(EngineError::ChannelMismatch {
                    expected: channels,
                    got: row.len(),
                });
            }
        }
        rows.sort_unstable_by_key(|(c, _)| c.pack());
        for w in rows.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(EngineError::InvalidArgument("duplicate voxel coordinate"));
            }
        }
        let mut coords = Vec::with_capacity(rows.len());
        let mut features = Vec::with_capacity(rows.len() * channels);
        for (c, row) in rows {
            coords.push(c);
            features.extend_from_slice(&row);
        }
        Ok(Self::new_unchecked(
            level, voxel_size, channels, coords, features,
        ))
    }

    /// Internal fast path: `coords` are canonical, unique and in range by
    /// construction.
    pub(crate) fn new_unchecked(
        level: i32,
        voxel_size: f64,
        channels: usize,
        coords: Vec<VoxelCoord>,
        features: Vec<f32>,
    ) -> Self {
        debug_assert_eq!(features.len(), coords.len() * channels);
        debug_assert!(coords.windows(2).all(|w| w[0] < w[1]));
        let mut index = CoordIndex::with_capacity(coords.len());
        for (i, c) in coords.iter().enumerate() {
            index.insert(c.pack(), i as u32);
        }
        Self {
            level,
            voxel_size,
            channels,
            coords,
            features,
            index,
        }
    }

    pub fn level(&self) -> i32 {
        self.level
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[VoxelCoord] {
        &self.coords
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    /// Feature row of voxel `row`.
    pub fn feature(&self, row: usize) -> &[f32] {
        &self.features[row * self.channels..(row + 1) * self.channels]
    }

    /// Row index of `coord`, if occupied.
    pub fn row_of(&self, coord: VoxelCoord) -> Option<usize> {
        if !coord.in_range() {
            return None;
        }
        self.index.get(&coord.pack()).map(|&r| r as usize)
    }

    /// Canonical byte serialization: level, voxel size, channel count,
    /// then `(x, y, z, features)` per voxel in canonical order, all
    /// little-endian. Two serializations of equal tensors are identical.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + self.coords.len() * (12 + 4 * self.channels));
        out.extend_from_slice(&self.level.to_le_bytes());
        out.extend_from_slice(&self.voxel_size.to_le_bytes());
        out.extend_from_slice(&(self.channels as u32).to_le_bytes());
        out.extend_from_slice(&(self.coords.len() as u64).to_le_bytes());
        for (i, c) in self.coords.iter().enumerate() {
            out.extend_from_slice(&c.x.to_le_bytes());
            out.extend_from_slice(&c.y.to_le_bytes());
            out.extend_from_slice(&c.z.to_le_bytes());
            for v in self.feature(i) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

fn check_range(c: VoxelCoord) -> Result<()> {
    if c.x.abs() >= COORD_LIMIT {
        return Err(EngineError::CoordOutOfRange {
            axis: 'x',
            value: c.x as i64,
        });
    }
    if c.y.abs() >= COORD_LIMIT {
        return Err(EngineError::CoordOutOfRange {
            axis: 'y',
            value: c.y as i64,
        });
    }
    if c.z.abs() >= COORD_LIMIT {
        return Err(EngineError::CoordOutOfRange {
            axis: 'z',
            value: c.z as i64,
        });
    }
    Ok(())
}

/// Level assigned to freshly quantized scenes (the raw input resolution,
/// one step below the preencoder output at level 0).
pub const SCENE_LEVEL: i32 = -1;

/// Quantize a point cloud onto the voxel grid.
///
/// Each occupied cell (`floor(coord / voxel_size)` per axis) becomes one
/// voxel with the constant 1-channel feature `[1.0]`. An empty point list
/// yields an empty tensor; non-finite coordinates are an error.
pub fn quantize(points: &[[f64; 3]], voxel_size: f64) -> Result<SparseTensor> {
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(EngineError::InvalidArgument("voxel_size must be positive"));
    }
    let mut keys: Vec<u64> = Vec::with_capacity(points.len());
    let mut coords_tmp: Vec<VoxelCoord> = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        if !(p[0].is_finite() && p[1].is_finite() && p[2].is_finite()) {
            return Err(EngineError::NonFiniteInput { index: i });
        }
        let ix = math::floor(p[0] / voxel_size);
        let iy = math::floor(p[1] / voxel_size);
        let iz = math::floor(p[2] / voxel_size);
        for (axis, v) in [('x', ix), ('y', iy), ('z', iz)] {
            if v.abs() >= COORD_LIMIT as f64 {
                return Err(EngineError::CoordOutOfRange {
                    axis,
                    value: v as i64,
                });
            }
        }
        let c = VoxelCoord::new(ix as i32, iy as i32, iz as i32);
        keys.push(c.pack());
        coords_tmp.push(c);
    }
    let mut pairs: Vec<(u64, VoxelCoord)> = keys.into_iter().zip(coords_tmp).collect();
    pairs.sort_unstable_by_key(|(k, _)| *k);
    pairs.dedup_by_key(|(k, _)| *k);
    let coords: Vec<VoxelCoord> = pairs.into_iter().map(|(_, c)| c).collect();
    let features = vec![1.0f32; coords.len()];
    Ok(SparseTensor::new_unchecked(
        SCENE_LEVEL,
        voxel_size,
        1,
        coords,
        features,
    ))
}

/// Disjoint partition of two tensors' coordinate sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoordPartition {
    pub shared: Vec<VoxelCoord>,
    pub a_only: Vec<VoxelCoord>,
    pub b_only: Vec<VoxelCoord>,
}

/// Split `coords(a) ∪ coords(b)` into shared / a-only / b-only lists, each
/// in canonical order. The tensors must live at the same level.
pub fn coord_set_ops(a: &SparseTensor, b: &SparseTensor) -> Result<CoordPartition> {
    if a.level() != b.level() {
        return Err(EngineError::LevelMismatch {
            a: a.level(),
            b: b.level(),
        });
    }
    let mut part = CoordPartition {
        shared: Vec::new(),
        a_only: Vec::new(),
        b_only: Vec::new(),
    };
    // Merge walk over two canonically sorted lists.
    let (ca, cb) = (a.coords(), b.coords());
    let (mut i, mut j) = (0, 0);
    while i < ca.len() && j < cb.len() {
        match ca[i].cmp(&cb[j]) {
            core::cmp::Ordering::Less => {
                part.a_only.push(ca[i]);
                i += 1;
            }
            core::cmp::Ordering::Greater => {
                part.b_only.push(cb[j]);
                j += 1;
            }
            core::cmp::Ordering::Equal => {
                part.shared.push(ca[i]);
                i += 1;
                j += 1;
            }
        }
    }
    part.a_only.extend_from_slice(&ca[i..]);
    part.b_only.extend_from_slice(&cb[j..]);
    Ok(part)
}
