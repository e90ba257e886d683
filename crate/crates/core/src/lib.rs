//! Analytical performance models for systolic-array + SIMD deep-learning
//! accelerators.
//!
//! Convolution and FC layers run on a `J x K` weight-stationary systolic array
//! with double-buffered SRAMs; everything else runs on a `1 x K` SIMD array with a
//! single-buffered vector memory. For every layer the models report compute and
//! DRAM-stall cycles, DRAM and SRAM traffic, and operation counts. Training
//! workloads are expanded into forward, backward and update layers, backward
//! convolutions are mapped onto forward convolutions, and a tile-level
//! discrete-event simulator ([`oracle`]) replays the schedule to cross-check the
//! closed forms.

pub mod conv;
pub mod energy;
pub mod error;
pub mod explorer;
pub mod network;
pub mod oracle;
pub mod simd;
pub mod specs;
pub mod tiler;
pub mod train;

pub use error::{Error, Result};
pub use specs::*;

pub(crate) fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}
