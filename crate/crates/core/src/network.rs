//! Whole-network evaluation: tiling, per-layer models, and aggregation.

use serde::{Deserialize, Serialize};

use crate::conv::{conv_eval, Conventions, Variant};
use crate::error::{Error, Result};
use crate::simd::{bn_backward_eval, simd_generic_eval, tensor_add_eval};
use crate::specs::*;
use crate::tiler::{generate_layer_tiling, simd_profile, validate_tiling};
use crate::train::expand_training;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Forward pass with batch norm folded into the preceding convolution.
    #[default]
    Inference,
    /// Forward, backward and parameter-update layers.
    Training,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Applies to systolic-array layers; SIMD layers always use their serialized model.
    pub variant: Variant,
    pub conventions: Conventions,
}

/// Layers executed for `mode`, in order.
pub fn workload(network: &[LayerSpec], mode: Mode) -> Result<Vec<LayerSpec>> {
    match mode {
        Mode::Inference => Ok(network
            .iter()
            .filter(|l| l.kind != LayerKind::BatchNorm)
            .cloned()
            .collect()),
        Mode::Training => Ok(expand_training(network)?.layers()),
    }
}

/// The layer's tiling: the supplied one (inner tiles recomputed) if present, else generated.
pub fn resolve_tiling(layer: &LayerSpec, hw: &HardwareConfig) -> Result<Tiling> {
    let Some(given) = layer.tiling else {
        return generate_layer_tiling(layer, hw);
    };
    let tiling = match given {
        Tiling::Conv(t) => Tiling::Conv(ConvTiling::from_outer(t.outer, hw.pe_rows, hw.pe_cols)),
        Tiling::Simd(t) => Tiling::Simd(SimdTiling::from_outer(t.outer, hw.simd_lanes())),
    };
    let report = validate_tiling(layer, &tiling, hw);
    if !report.within_bounds {
        return Err(Error::invalid(
            format!("layer `{}`", layer.name),
            "tile sizes must lie between 1 and the full dimension",
        ));
    }
    if let Some(buffer) = report.first_overflow() {
        return Err(Error::Infeasible {
            layer: layer.name.clone(),
            buffer,
        });
    }
    Ok(tiling)
}

pub fn evaluate_layer(layer: &LayerSpec, hw: &HardwareConfig, opts: SimOptions) -> Result<LayerStats> {
    let tiling = resolve_tiling(layer, hw)?;
    let hw = hw.with_layer_bits(&layer.bits);
    match (&layer.shape, tiling) {
        (LayerShape::Conv(s), Tiling::Conv(t)) => Ok(conv_eval(s, &t, &hw, opts.variant, opts.conventions)),
        (LayerShape::Simd(s), Tiling::Simd(t)) => Ok(match layer.kind {
            LayerKind::TensorAdd => tensor_add_eval(s, &t, &hw),
            LayerKind::BnBackward => bn_backward_eval(s, &t, &hw).total,
            _ => simd_generic_eval(&simd_profile(layer, s)?, &t, &hw),
        }),
        _ => Err(Error::invalid(format!("layer `{}`", layer.name), "tiling variant does not match shape")),
    }
}

/// Evaluates already-expanded layers in order.
pub fn evaluate_layers(layers: &[LayerSpec], hw: &HardwareConfig, opts: SimOptions) -> Result<NetworkStats> {
    let records = layers
        .iter()
        .map(|l| {
            evaluate_layer(l, hw, opts).map(|stats| LayerRecord {
                name: l.name.clone(),
                kind: l.kind,
                stats,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NetworkStats::from_layers(records))
}

pub fn simulate_network(network: &[LayerSpec], hw: &HardwareConfig, mode: Mode, opts: SimOptions) -> Result<NetworkStats> {
    evaluate_layers(&workload(network, mode)?, hw, opts)
}
