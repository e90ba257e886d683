//! Outer-tile generation and validation.
//!
//! The generator is greedy: dimensions are visited in a fixed priority order and
//! each one takes the largest divisor (> 1) of its full extent that keeps every
//! buffer within capacity, or failing that the largest feasible integer. The
//! systolic-array order is `oc, ic, kh, kw, oh, ow, n`; larger channel and kernel
//! tiles cut the partial-sum round trips that dominate DRAM traffic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simd::{profile_for, SimdOpProfile};
use crate::specs::*;

pub const CONV_ORDER: [&str; 7] = ["oc", "ic", "kh", "kw", "oh", "ow", "n"];
pub const SIMD_ORDER: [&str; 4] = ["c", "n", "w", "h"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferFit {
    pub buffer: Buffer,
    pub required_bits: u64,
    pub usable_bits: u64,
    pub fits: bool,
}

/// Per-buffer capacity check of one tiling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilingConstraintReport {
    pub buffers: Vec<BufferFit>,
    /// Every tile size lies in `1..=dim`.
    pub within_bounds: bool,
}

impl TilingConstraintReport {
    fn new(required: &[(Buffer, u64)], hw: &HardwareConfig, within_bounds: bool) -> Self {
        let buffers = required
            .iter()
            .map(|&(buffer, required_bits)| {
                let usable_bits = hw.usable_bits(buffer);
                BufferFit {
                    buffer,
                    required_bits,
                    usable_bits,
                    fits: required_bits <= usable_bits,
                }
            })
            .collect();
        TilingConstraintReport { buffers, within_bounds }
    }

    pub fn all_fit(&self) -> bool {
        self.within_bounds && self.buffers.iter().all(|b| b.fits)
    }

    pub fn first_overflow(&self) -> Option<Buffer> {
        self.buffers.iter().find(|b| !b.fits).map(|b| b.buffer)
    }

    pub fn get(&self, buffer: Buffer) -> Option<&BufferFit> {
        self.buffers.iter().find(|b| b.buffer == buffer)
    }
}

/// Bits each SA buffer must hold for one outer tile.
pub fn conv_tile_bits(shape: &ConvShape, t: &ConvTile, hw: &HardwareConfig) -> Vec<(Buffer, u64)> {
    let mut v = vec![
        (Buffer::WBuf, t.kh * t.kw * t.ic * t.oc * hw.bits_weight),
        (Buffer::IBuf, t.ih(shape.stride) * t.iw(shape.stride) * t.n * t.ic * hw.bits_ifmap),
        (Buffer::OBuf, t.oh * t.ow * t.n * t.oc * hw.bits_psum),
    ];
    if shape.has_bias {
        v.push((Buffer::BBuf, t.oc * hw.bits_bias));
    }
    v
}

fn conv_overflow(shape: &ConvShape, t: &ConvTile, hw: &HardwareConfig) -> Option<Buffer> {
    conv_tile_bits(shape, t, hw)
        .into_iter()
        .find(|&(b, bits)| bits > hw.usable_bits(b))
        .map(|(b, _)| b)
}

fn simd_overflow(profile: &SimdOpProfile, t: &SimdTile, hw: &HardwareConfig) -> Option<Buffer> {
    (profile.resident_bits(t, hw) > hw.usable_bits(Buffer::VMem)).then_some(Buffer::VMem)
}

/// Largest value in `1..=full` for `dim` that keeps `fits` true, divisors first.
fn grow<T: Copy>(tile: &mut T, dim: &str, full: u64, set: fn(&mut T, &str, u64), fits: impl Fn(&T) -> bool) {
    let try_value = |v: u64| {
        let mut t = *tile;
        set(&mut t, dim, v);
        fits(&t)
    };
    let divisor = (2..=full).rev().filter(|d| full.is_multiple_of(*d)).find(|&d| try_value(d));
    let chosen = match divisor {
        Some(d) => d,
        None => {
            // feasibility is monotone in a single tile dimension
            let (mut lo, mut hi) = (1, full);
            while lo < hi {
                let mid = lo + (hi - lo).div_ceil(2);
                if try_value(mid) {
                    lo = mid;
                } else {
                    hi = mid - 1;
                }
            }
            lo
        }
    };
    set(tile, dim, chosen);
}

fn conv_set(t: &mut ConvTile, dim: &str, v: u64) {
    t.set(dim, v)
}

fn simd_set(t: &mut SimdTile, dim: &str, v: u64) {
    t.set(dim, v)
}

/// Outer tile for a convolution; the error carries `name` and the overflowing buffer.
pub fn generate_conv_tile(name: &str, shape: &ConvShape, hw: &HardwareConfig) -> Result<ConvTile> {
    let mut tile = ConvTile::ones();
    if let Some(buffer) = conv_overflow(shape, &tile, hw) {
        return Err(Error::Infeasible {
            layer: name.to_string(),
            buffer,
        });
    }
    let full = ConvTile::full(shape);
    for dim in CONV_ORDER {
        grow(&mut tile, dim, full.get(dim), conv_set, |t| conv_overflow(shape, t, hw).is_none());
    }
    Ok(tile)
}

pub fn generate_conv_tiling(shape: &ConvShape, hw: &HardwareConfig) -> Result<ConvTiling> {
    generate_conv_tile("conv", shape, hw).map(|t| ConvTiling::from_outer(t, hw.pe_rows, hw.pe_cols))
}

/// Outer tile over a SIMD profile's iteration space so that every resident tile fits VMem.
pub fn generate_simd_tile(name: &str, profile: &SimdOpProfile, hw: &HardwareConfig) -> Result<SimdTile> {
    let mut tile = SimdTile::ones();
    if let Some(buffer) = simd_overflow(profile, &tile, hw) {
        return Err(Error::Infeasible {
            layer: name.to_string(),
            buffer,
        });
    }
    for dim in SIMD_ORDER {
        grow(&mut tile, dim, profile.space.get(dim), simd_set, |t| simd_overflow(profile, t, hw).is_none());
    }
    Ok(tile)
}

pub fn generate_simd_tiling(profile: &SimdOpProfile, hw: &HardwareConfig) -> Result<SimdTiling> {
    generate_simd_tile("simd", profile, hw).map(|t| SimdTiling::from_outer(t, hw.simd_lanes()))
}

/// Generates a tiling for any layer, with layer-level bit overrides applied.
pub fn generate_layer_tiling(layer: &LayerSpec, hw: &HardwareConfig) -> Result<Tiling> {
    let hw = hw.with_layer_bits(&layer.bits);
    match &layer.shape {
        LayerShape::Conv(s) => {
            let t = generate_conv_tile(&layer.name, s, &hw)?;
            Ok(Tiling::Conv(ConvTiling::from_outer(t, hw.pe_rows, hw.pe_cols)))
        }
        LayerShape::Simd(s) => {
            let profile = simd_profile(layer, s)?;
            let t = generate_simd_tile(&layer.name, &profile, &hw)?;
            Ok(Tiling::Simd(SimdTiling::from_outer(t, hw.simd_lanes())))
        }
    }
}

pub(crate) fn simd_profile(layer: &LayerSpec, shape: &SimdShape) -> Result<SimdOpProfile> {
    profile_for(layer.kind, shape).ok_or_else(|| {
        Error::invalid(
            format!("layer `{}`", layer.name),
            format!("{} has no SIMD profile", layer.kind.name()),
        )
    })
}

pub fn validate_conv_tiling(shape: &ConvShape, tile: &ConvTile, hw: &HardwareConfig) -> TilingConstraintReport {
    let full = ConvTile::full(shape);
    let bounds = ConvTile::DIMS.iter().all(|&d| (1..=full.get(d)).contains(&tile.get(d)));
    let bits = if bounds { conv_tile_bits(shape, tile, hw) } else { Vec::new() };
    TilingConstraintReport::new(&bits, hw, bounds)
}

pub fn validate_simd_tiling(profile: &SimdOpProfile, tile: &SimdTile, hw: &HardwareConfig) -> TilingConstraintReport {
    let bounds = SimdTile::DIMS.iter().all(|&d| (1..=profile.space.get(d)).contains(&tile.get(d)));
    let bits = if bounds {
        vec![(Buffer::VMem, profile.resident_bits(tile, hw))]
    } else {
        Vec::new()
    };
    TilingConstraintReport::new(&bits, hw, bounds)
}

/// Capacity report for a tiling of `layer`. Layer bit overrides are applied.
pub fn validate_tiling(layer: &LayerSpec, tiling: &Tiling, hw: &HardwareConfig) -> TilingConstraintReport {
    let hw = hw.with_layer_bits(&layer.bits);
    match (&layer.shape, tiling) {
        (LayerShape::Conv(s), Tiling::Conv(t)) => validate_conv_tiling(s, &t.outer, &hw),
        (LayerShape::Simd(s), Tiling::Simd(t)) => match profile_for(layer.kind, s) {
            Some(p) => validate_simd_tiling(&p, &t.outer, &hw),
            None => TilingConstraintReport::new(&[], &hw, false),
        },
        _ => TilingConstraintReport::new(&[], &hw, false),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specs::test_hw;

    fn example() -> ConvShape {
        ConvShape::new(1, 8, 8, 4, 8, 3, 3, 1, 0, 0, true).unwrap()
    }

    #[test]
    fn ample_buffers_take_full_dims() {
        let hw = test_hw(4, 4);
        let t = generate_conv_tiling(&example(), &hw).unwrap();
        assert_eq!(t.outer, ConvTile::full(&example()));
        assert_eq!((t.inner.ic, t.inner.oc), (4, 4));
    }

    #[test]
    fn tiny_wbuf_is_infeasible() {
        let mut hw = test_hw(4, 4);
        hw.wbuf_bytes = 2; // 8 usable bits < 16-bit weight
        let err = generate_conv_tile("c1", &example(), &hw).unwrap_err();
        match err {
            Error::Infeasible { layer, buffer } => assert_eq!((layer.as_str(), buffer), ("c1", Buffer::WBuf)),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn small_channel_count_clamps_inner_tile() {
        let hw = test_hw(64, 64);
        let s = ConvShape::new(1, 8, 8, 3, 8, 3, 3, 1, 1, 1, false).unwrap();
        let t = generate_conv_tiling(&s, &hw).unwrap();
        assert_eq!(t.inner.ic, 3);
    }

    #[test]
    fn prime_dimension_uses_largest_feasible_integer() {
        let mut hw = test_hw(4, 4);
        // 1x1 everything except a 13-wide oc; room for 10 weights
        let s = ConvShape::new(1, 1, 1, 1, 13, 1, 1, 1, 0, 0, false).unwrap();
        hw.wbuf_bytes = 40;
        let t = generate_conv_tile("c", &s, &hw).unwrap();
        assert_eq!(t.oc, 10);
    }

    #[test]
    fn divisors_are_preferred() {
        let mut hw = test_hw(4, 4);
        let s = ConvShape::new(1, 1, 1, 1, 12, 1, 1, 1, 0, 0, false).unwrap();
        hw.wbuf_bytes = 40; // room for 10; 6 is the largest divisor
        assert_eq!(generate_conv_tile("c", &s, &hw).unwrap().oc, 6);
    }

    #[test]
    fn tensor_add_halves_height_when_vmem_holds_half() {
        let mut hw = test_hw(4, 4);
        let shape = SimdShape::new(4, 4, 1, 8).unwrap();
        let p = profile_for(LayerKind::TensorAdd, &shape).unwrap();
        // three tiles of half the tensor at 32 bits
        hw.vmem_bytes = 3 * 64 * 32 / 8;
        let t = generate_simd_tiling(&p, &hw).unwrap();
        assert_eq!(t.outer, SimdTile { h: 2, w: 4, n: 1, c: 8 });
        hw.vmem_bytes = 1 << 20;
        assert_eq!(generate_simd_tiling(&p, &hw).unwrap().outer, p.space);
    }

    #[test]
    fn vmem_overflow_names_vmem() {
        let mut hw = test_hw(4, 4);
        hw.vmem_bytes = 4;
        let shape = SimdShape::new(2, 2, 2, 8).unwrap();
        let p = profile_for(LayerKind::BnBackward, &shape).unwrap();
        assert!(matches!(
            generate_simd_tile("bn", &p, &hw),
            Err(Error::Infeasible { buffer: Buffer::VMem, .. })
        ));
    }

    #[test]
    fn report_flags_oversized_oc() {
        let mut hw = test_hw(4, 4);
        let s = example();
        let t = generate_conv_tile("c", &s, &hw).unwrap();
        let layer = LayerSpec::conv("c", s);
        let tiling = Tiling::Conv(ConvTiling::from_outer(t, 4, 4));
        assert!(validate_tiling(&layer, &tiling, &hw).all_fit());
        // half of WBuf now one byte short of the 4608-bit weight tensor
        hw.wbuf_bytes = 4608 / 4 - 1;
        let r = validate_tiling(&layer, &tiling, &hw);
        assert!(!r.get(Buffer::WBuf).unwrap().fits);
        assert!(r.get(Buffer::IBuf).unwrap().fits);
    }

    #[test]
    fn fc_goes_through_conv_path() {
        let hw = test_hw(4, 4);
        let s = ConvShape::fully_connected(2, 16, 10, true).unwrap();
        let layer = LayerSpec::conv("fc", s).with_kind(LayerKind::FC);
        let t = generate_layer_tiling(&layer, &hw).unwrap();
        let r = validate_tiling(&layer, &t, &hw);
        assert!(r.all_fit());
        assert!(r.get(Buffer::BBuf).is_some());
    }

    #[test]
    fn out_of_range_tile_is_reported() {
        let hw = test_hw(4, 4);
        let s = example();
        let t = ConvTile { oc: 9, ..ConvTile::full(&s) };
        assert!(!validate_conv_tiling(&s, &t, &hw).within_bounds);
    }
}
