//! Domain vocabulary: hardware parameters, layer shapes, tilings, statistics,
//! and the native hardware/network file formats.

mod hardware;
mod layer;
mod network;
mod stats;

pub use hardware::{load_hardware_spec, Buffer, HardwareConfig, OpKind, OpLatency};
#[cfg(test)]
pub(crate) use hardware::test_hw;
pub use layer::*;
pub use network::{load_network_spec, network_from_json_str, network_to_json_string, with_batch};
pub use stats::*;
