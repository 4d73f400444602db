//! Independent brute-force references for the engine's operators, plus the
//! randomized self-check suites built on them.
//!
//! The references deliberately share no machinery with the operators they
//! verify: dense triple-loop convolutions over boxed grids, explicit
//! footprint walks for receptive fields, and naive double loops for target
//! generation. They live in the shipped library so `oracle-check` can run
//! them in the field.

mod bftargets;
mod dense;
mod influence;
mod suites;

pub use bftargets::{brute_force_targets, BruteLevelPositives, BruteTargets};
pub use dense::{dense_conv_oracle, max_mixed_rel_error, DenseGrid, DENSE_GUARD};
pub use influence::{cluster_influence, proposal_influence, within_nine_window};
pub use suites::{conv_suite, receptive_field_suite, targets_suite, SuiteReport};
