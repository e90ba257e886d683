use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer taxonomy covering the forward pass and every backward/update operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    Conv,
    FC,
    ReLU,
    TensorAdd,
    MaxPool,
    AvgPool,
    GlobalAvgPool,
    BatchNorm,
    ConvGradIfmap,
    ConvGradWeight,
    ReluBackward,
    TensorAddBackward,
    PoolBackward,
    BnBackward,
    ParamUpdate,
}

impl LayerKind {
    /// Kinds executed on the systolic array (and therefore shaped as convolutions).
    pub fn is_conv_family(self) -> bool {
        matches!(
            self,
            LayerKind::Conv | LayerKind::FC | LayerKind::ConvGradIfmap | LayerKind::ConvGradWeight
        )
    }

    pub fn is_pool(self) -> bool {
        matches!(
            self,
            LayerKind::MaxPool | LayerKind::AvgPool | LayerKind::GlobalAvgPool | LayerKind::PoolBackward
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv => "Conv",
            LayerKind::FC => "FC",
            LayerKind::ReLU => "ReLU",
            LayerKind::TensorAdd => "TensorAdd",
            LayerKind::MaxPool => "MaxPool",
            LayerKind::AvgPool => "AvgPool",
            LayerKind::GlobalAvgPool => "GlobalAvgPool",
            LayerKind::BatchNorm => "BatchNorm",
            LayerKind::ConvGradIfmap => "ConvGradIfmap",
            LayerKind::ConvGradWeight => "ConvGradWeight",
            LayerKind::ReluBackward => "ReluBackward",
            LayerKind::TensorAddBackward => "TensorAddBackward",
            LayerKind::PoolBackward => "PoolBackward",
            LayerKind::BnBackward => "BnBackward",
            LayerKind::ParamUpdate => "ParamUpdate",
        }
    }
}

/// Dimensions of a convolution (or FC, or transformed backward convolution).
///
/// Padding is stored explicitly; `oh`/`ow` must follow from the other fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvShape {
    pub n: u64,
    pub ih: u64,
    pub iw: u64,
    pub ic: u64,
    pub oh: u64,
    pub ow: u64,
    pub oc: u64,
    pub kh: u64,
    pub kw: u64,
    pub stride: u64,
    pub pad_h: u64,
    pub pad_w: u64,
    pub has_bias: bool,
}

pub(crate) fn conv_out_dim(input: u64, pad: u64, kernel: u64, stride: u64) -> Option<u64> {
    let padded = input + 2 * pad;
    if kernel > padded || stride == 0 {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

impl ConvShape {
    /// Builds a shape, deriving the output extent from the input, kernel, stride and pad.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: u64,
        ih: u64,
        iw: u64,
        ic: u64,
        oc: u64,
        kh: u64,
        kw: u64,
        stride: u64,
        pad_h: u64,
        pad_w: u64,
        has_bias: bool,
    ) -> Result<Self> {
        let oh = conv_out_dim(ih, pad_h, kh, stride)
            .ok_or_else(|| Error::invalid("conv shape", "kernel height exceeds padded ifmap height"))?;
        let ow = conv_out_dim(iw, pad_w, kw, stride)
            .ok_or_else(|| Error::invalid("conv shape", "kernel width exceeds padded ifmap width"))?;
        let shape = ConvShape {
            n,
            ih,
            iw,
            ic,
            oh,
            ow,
            oc,
            kh,
            kw,
            stride,
            pad_h,
            pad_w,
            has_bias,
        };
        shape.validate("conv shape")?;
        Ok(shape)
    }

    /// An FC layer is a 1x1 convolution over a 1x1 ifmap.
    pub fn fully_connected(n: u64, inputs: u64, outputs: u64, has_bias: bool) -> Result<Self> {
        ConvShape::new(n, 1, 1, inputs, outputs, 1, 1, 1, 0, 0, has_bias)
    }

    pub fn validate(&self, location: &str) -> Result<()> {
        let dims = [
            ("n", self.n),
            ("ih", self.ih),
            ("iw", self.iw),
            ("ic", self.ic),
            ("oh", self.oh),
            ("ow", self.ow),
            ("oc", self.oc),
            ("kh", self.kh),
            ("kw", self.kw),
            ("s", self.stride),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::invalid(location, format!("{name} must be at least 1")));
            }
        }
        let oh = conv_out_dim(self.ih, self.pad_h, self.kh, self.stride);
        let ow = conv_out_dim(self.iw, self.pad_w, self.kw, self.stride);
        if oh != Some(self.oh) || ow != Some(self.ow) {
            return Err(Error::invalid(
                location,
                format!(
                    "ofmap {}x{} inconsistent with ifmap {}x{}, kernel {}x{}, stride {}, pad {}x{} (expected {}x{})",
                    self.oh,
                    self.ow,
                    self.ih,
                    self.iw,
                    self.kh,
                    self.kw,
                    self.stride,
                    self.pad_h,
                    self.pad_w,
                    oh.map_or("-".into(), |v| v.to_string()),
                    ow.map_or("-".into(), |v| v.to_string()),
                ),
            ));
        }
        Ok(())
    }

    /// Ifmap rows actually touched by the sliding window, padding included.
    pub fn effective_ih(&self) -> u64 {
        self.stride * (self.oh - 1) + self.kh
    }

    pub fn effective_iw(&self) -> u64 {
        self.stride * (self.ow - 1) + self.kw
    }

    pub fn macs(&self) -> u64 {
        self.n * self.oh * self.ow * self.oc * self.kh * self.kw * self.ic
    }

    pub fn weight_elems(&self) -> u64 {
        self.kh * self.kw * self.ic * self.oc
    }

    pub fn ofmap_elems(&self) -> u64 {
        self.oh * self.ow * self.n * self.oc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    Max,
    Avg,
}

/// Sliding window of a pooling layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PoolWindow {
    pub mode: PoolMode,
    pub rh: u64,
    pub rw: u64,
    pub stride: u64,
    pub pad: u64,
}

/// Shape of a layer executed on the SIMD array.
///
/// For pooling layers `h`/`w` are the input extent; the output extent follows
/// from the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SimdShape {
    pub h: u64,
    pub w: u64,
    pub n: u64,
    pub c: u64,
    pub pool: Option<PoolWindow>,
}

impl SimdShape {
    pub fn new(h: u64, w: u64, n: u64, c: u64) -> Result<Self> {
        let s = SimdShape {
            h,
            w,
            n,
            c,
            pool: None,
        };
        s.validate("simd shape")?;
        Ok(s)
    }

    pub fn pooled(h: u64, w: u64, n: u64, c: u64, window: PoolWindow) -> Result<Self> {
        let s = SimdShape {
            h,
            w,
            n,
            c,
            pool: Some(window),
        };
        s.validate("simd shape")?;
        Ok(s)
    }

    pub fn validate(&self, location: &str) -> Result<()> {
        for (name, v) in [("h", self.h), ("w", self.w), ("n", self.n), ("c", self.c)] {
            if v == 0 {
                return Err(Error::invalid(location, format!("{name} must be at least 1")));
            }
        }
        if let Some(p) = self.pool {
            if p.rh == 0 || p.rw == 0 || p.stride == 0 {
                return Err(Error::invalid(location, "pool window and stride must be at least 1"));
            }
            if conv_out_dim(self.h, p.pad, p.rh, p.stride).is_none()
                || conv_out_dim(self.w, p.pad, p.rw, p.stride).is_none()
            {
                return Err(Error::invalid(location, "pool window exceeds padded input"));
            }
        }
        Ok(())
    }

    /// Output extent (`oh`, `ow`); identical to the input when not pooling.
    pub fn out_hw(&self) -> (u64, u64) {
        match self.pool {
            Some(p) => (
                conv_out_dim(self.h, p.pad, p.rh, p.stride).unwrap_or(1),
                conv_out_dim(self.w, p.pad, p.rw, p.stride).unwrap_or(1),
            ),
            None => (self.h, self.w),
        }
    }

    pub fn elems(&self) -> u64 {
        self.h * self.w * self.n * self.c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerShape {
    Conv(ConvShape),
    Simd(SimdShape),
}

/// Per-layer bit-width overrides; unset fields fall back to the hardware config.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerBits {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<u64>,
    #[serde(default, rename = "in", skip_serializing_if = "Option::is_none")]
    pub simd_in: Option<u64>,
    #[serde(default, rename = "out", skip_serializing_if = "Option::is_none")]
    pub simd_out: Option<u64>,
}

impl LayerBits {
    pub fn is_empty(&self) -> bool {
        *self == LayerBits::default()
    }
}

/// Outer tile sizes of a convolution; `ih`/`iw` follow from the sliding window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvTile {
    pub oh: u64,
    pub ow: u64,
    pub n: u64,
    pub kh: u64,
    pub kw: u64,
    pub ic: u64,
    pub oc: u64,
}

impl ConvTile {
    pub fn ones() -> Self {
        ConvTile {
            oh: 1,
            ow: 1,
            n: 1,
            kh: 1,
            kw: 1,
            ic: 1,
            oc: 1,
        }
    }

    pub fn full(shape: &ConvShape) -> Self {
        ConvTile {
            oh: shape.oh,
            ow: shape.ow,
            n: shape.n,
            kh: shape.kh,
            kw: shape.kw,
            ic: shape.ic,
            oc: shape.oc,
        }
    }

    pub fn ih(&self, stride: u64) -> u64 {
        stride * (self.oh - 1) + self.kh
    }

    pub fn iw(&self, stride: u64) -> u64 {
        stride * (self.ow - 1) + self.kw
    }

    pub(crate) const DIMS: [&'static str; 7] = ["oh", "ow", "n", "kh", "kw", "ic", "oc"];

    pub(crate) fn get(&self, dim: &str) -> u64 {
        match dim {
            "oh" => self.oh,
            "ow" => self.ow,
            "n" => self.n,
            "kh" => self.kh,
            "kw" => self.kw,
            "ic" => self.ic,
            "oc" => self.oc,
            _ => unreachable!("unknown conv dim {dim}"),
        }
    }

    pub(crate) fn set(&mut self, dim: &str, v: u64) {
        match dim {
            "oh" => self.oh = v,
            "ow" => self.ow = v,
            "n" => self.n = v,
            "kh" => self.kh = v,
            "kw" => self.kw = v,
            "ic" => self.ic = v,
            "oc" => self.oc = v,
            _ => unreachable!("unknown conv dim {dim}"),
        }
    }
}

/// Outer tile sizes of a SIMD iteration space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SimdTile {
    pub h: u64,
    pub w: u64,
    pub n: u64,
    pub c: u64,
}

impl SimdTile {
    pub(crate) const DIMS: [&'static str; 4] = ["h", "w", "n", "c"];

    pub fn ones() -> Self {
        SimdTile { h: 1, w: 1, n: 1, c: 1 }
    }

    pub fn volume(&self) -> u64 {
        self.h * self.w * self.n * self.c
    }

    pub(crate) fn get(&self, dim: &str) -> u64 {
        match dim {
            "h" => self.h,
            "w" => self.w,
            "n" => self.n,
            "c" => self.c,
            _ => unreachable!("unknown simd dim {dim}"),
        }
    }

    pub(crate) fn set(&mut self, dim: &str, v: u64) {
        match dim {
            "h" => self.h = v,
            "w" => self.w = v,
            "n" => self.n = v,
            "c" => self.c = v,
            _ => unreachable!("unknown simd dim {dim}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvTiling {
    pub outer: ConvTile,
    pub inner: ConvTile,
}

impl ConvTiling {
    /// Inner tiles map one `J x K` GEMM step: `t_ic = J`, `t_oc = K`, the rest 1,
    /// clamped so that no inner tile exceeds its outer tile.
    pub fn from_outer(outer: ConvTile, pe_rows: u64, pe_cols: u64) -> Self {
        let inner = ConvTile {
            ic: pe_rows.min(outer.ic),
            oc: pe_cols.min(outer.oc),
            ..ConvTile::ones()
        };
        ConvTiling { outer, inner }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SimdTiling {
    pub outer: SimdTile,
    pub inner: SimdTile,
}

impl SimdTiling {
    /// Inner tile maps `t_c = K` onto the ALUs, the rest 1.
    pub fn from_outer(outer: SimdTile, lanes: u64) -> Self {
        let inner = SimdTile {
            c: lanes.min(outer.c),
            ..SimdTile::ones()
        };
        SimdTiling { outer, inner }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tiling {
    Conv(ConvTiling),
    Simd(SimdTiling),
}

/// One layer of a network, forward or backward.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub shape: LayerShape,
    pub bits: LayerBits,
    /// Outer tiles supplied by the user; generated when absent.
    pub tiling: Option<Tiling>,
    /// For backward and update layers: the forward layer they derive from.
    pub source: Option<String>,
}

impl LayerSpec {
    pub fn conv(name: impl Into<String>, shape: ConvShape) -> Self {
        LayerSpec {
            name: name.into(),
            kind: LayerKind::Conv,
            shape: LayerShape::Conv(shape),
            bits: LayerBits::default(),
            tiling: None,
            source: None,
        }
    }

    pub fn simd(name: impl Into<String>, kind: LayerKind, shape: SimdShape) -> Self {
        LayerSpec {
            name: name.into(),
            kind,
            shape: LayerShape::Simd(shape),
            bits: LayerBits::default(),
            tiling: None,
            source: None,
        }
    }

    pub fn with_kind(mut self, kind: LayerKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn conv_shape(&self) -> Option<&ConvShape> {
        match &self.shape {
            LayerShape::Conv(s) => Some(s),
            LayerShape::Simd(_) => None,
        }
    }

    pub fn simd_shape(&self) -> Option<&SimdShape> {
        match &self.shape {
            LayerShape::Simd(s) => Some(s),
            LayerShape::Conv(_) => None,
        }
    }

    /// Checks that the shape variant matches the kind and that the shape is consistent.
    pub fn validate(&self) -> Result<()> {
        let location = format!("layer `{}`", self.name);
        match (&self.shape, self.kind.is_conv_family()) {
            (LayerShape::Conv(s), true) => s.validate(&location)?,
            (LayerShape::Simd(s), false) => {
                s.validate(&location)?;
                if self.kind.is_pool() != s.pool.is_some() {
                    return Err(Error::invalid(
                        &location,
                        format!("{} requires a pool window iff it is a pooling kind", self.kind.name()),
                    ));
                }
            }
            _ => {
                return Err(Error::invalid(
                    &location,
                    format!("shape variant does not match kind {}", self.kind.name()),
                ))
            }
        }
        Ok(())
    }
}
