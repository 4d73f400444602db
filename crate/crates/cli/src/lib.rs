//! IO layer and command implementations for the `dsp3d` binary: weight
//! files, configuration and scene formats, synthetic scenes, the benchmark
//! sweep and the subcommand glue. All numerics live in `dsp3d-core`.

pub mod bench;
pub mod boxesio;
pub mod commands;
pub mod configio;
pub mod formats;
pub mod modelio;
pub mod pipeline;
pub mod points;
pub mod synth;
