//! High-resolution encoder: a kernel-1 stride-2 preencoder followed by four
//! residual stages, producing one feature map per pyramid level (1..=4).
//!
//! Every stage halves the coordinate grid with a kernel-1 stride-2
//! convolution and then applies its residual units, which preserve the
//! coordinate set. There is no pooling anywhere.

use alloc::vec::Vec;

use crate::error::{EngineError, Result};
use crate::sconv::{affine_relu, conv_down, conv_s1, AffineParams, ConvParams};
use crate::voxgrid::{SparseTensor, VoxelCoord, SCENE_LEVEL};

/// One residual unit: two submanifold convolutions with affines and an
/// identity skip: `relu(x + affine2(conv2(relu(affine1(conv1(x))))))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualUnitParams {
    pub conv1: ConvParams,
    pub affine1: AffineParams,
    pub conv2: ConvParams,
    pub affine2: AffineParams,
}

/// One backbone stage: stride-2 downsampling plus its residual units.
#[derive(Debug, Clone, PartialEq)]
pub struct StageParams {
    pub down: ConvParams,
    pub down_affine: AffineParams,
    pub units: Vec<ResidualUnitParams>,
}

/// Full encoder parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneParams {
    /// Preencoder: 1 -> stem channels, stride 2 (scene level -> level 0).
    pub pre: ConvParams,
    pub pre_affine: AffineParams,
    /// Stages 1..=4, consuming level `i-1` and emitting level `i`.
    pub stages: [StageParams; 4],
}

/// Apply one residual unit; coordinates and channel count are preserved.
pub fn residual_unit(input: &SparseTensor, unit: &ResidualUnitParams) -> Result<SparseTensor> {
    let h = affine_relu(&conv_s1(input, &unit.conv1)?, &unit.affine1, true)?;
    let h = affine_relu(&conv_s1(&h, &unit.conv2)?, &unit.affine2, false)?;
    add_relu(input, &h)
}

/// Elementwise `relu(a + b)` for tensors with identical coordinates.
fn add_relu(a: &SparseTensor, b: &SparseTensor) -> Result<SparseTensor> {
    if a.channels() != b.channels() {
        return Err(EngineError::ChannelMismatch {
            expected: a.channels(),
            got: b.channels(),
        });
    }
    if a.coords() != b.coords() {
        return Err(EngineError::CoordMismatch("residual skip"));
    }
    let features: Vec<f32> = a
        .features()
        .iter()
        .zip(b.features())
        .map(|(x, y)| (x + y).max(0.0))
        .collect();
    Ok(SparseTensor::new_unchecked(
        a.level(),
        a.voxel_size(),
        a.channels(),
        a.coords().to_vec(),
        features,
    ))
}

/// Run the encoder on a quantized scene, returning the four level feature
/// maps. An empty scene yields four empty tensors.
pub fn backbone_forward(
    scene: &SparseTensor,
    p: &BackboneParams,
) -> Result<[SparseTensor; 4]> {
    if scene.level() != SCENE_LEVEL {
        return Err(EngineError::LevelOutOfRange {
            level: scene.level(),
            what: "backbone input (expected the quantized scene)",
        });
    }
    let mut x = affine_relu(&conv_down(scene, &p.pre)?, &p.pre_affine, true)?;
    let mut out: Vec<SparseTensor> = Vec::with_capacity(4);
    for stage in &p.stages {
        x = affine_relu(&conv_down(&x, &stage.down)?, &stage.down_affine, true)?;
        for unit in &stage.units {
            x = residual_unit(&x, unit)?;
        }
        out.push(x.clone());
    }
    Ok(out.try_into().expect("four stages"))
}

/// Coordinate sets of the four levels, derived from the scene alone by
/// iterated floor-halving. Matches the coordinates of
/// [`backbone_forward`]'s outputs without touching any weights.
pub fn backbone_coord_pyramid(scene_coords: &[VoxelCoord]) -> [Vec<VoxelCoord>; 4] {
    let mut current = halve(scene_coords); // level 0
    let mut out: [Vec<VoxelCoord>; 4] = Default::default();
    for lvl in out.iter_mut() {
        current = halve(&current);
        *lvl = current.clone();
    }
    out
}

fn halve(coords: &[VoxelCoord]) -> Vec<VoxelCoord> {
    let mut v: Vec<VoxelCoord> = coords.iter().map(|c| c.parent()).collect();
    v.sort_unstable();
    v.dedup();
    v
}
