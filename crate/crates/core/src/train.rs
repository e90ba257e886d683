//! Expansion of an inference network into a training workload.
//!
//! Backward convolutions are rewritten as stride-1 forward convolutions over
//! transformed tensors: the input gradient convolves the dilated, zero-padded
//! output gradient with the flipped, transposed kernel; the weight gradient
//! convolves the ifmap with the dilated output gradient acting as the kernel.
//! Padding and dilation are folded into the ifmap extent and zeros are costed at
//! face value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specs::*;

/// Shapes of the input-gradient and weight-gradient convolutions.
///
/// The ifmap extent used for both is the region the forward window actually
/// covers, `S(OH-1) + K`, which already includes padding.
pub fn backward_conv_shapes(fwd: &ConvShape) -> (ConvShape, ConvShape) {
    let dilated_h = fwd.stride * (fwd.oh - 1) + 1;
    let dilated_w = fwd.stride * (fwd.ow - 1) + 1;
    let dx = ConvShape {
        n: fwd.n,
        ih: dilated_h + 2 * (fwd.kh - 1),
        iw: dilated_w + 2 * (fwd.kw - 1),
        ic: fwd.oc,
        oh: fwd.effective_ih(),
        ow: fwd.effective_iw(),
        oc: fwd.ic,
        kh: fwd.kh,
        kw: fwd.kw,
        stride: 1,
        pad_h: 0,
        pad_w: 0,
        has_bias: false,
    };
    let dw = ConvShape {
        n: fwd.ic,
        ih: fwd.effective_ih(),
        iw: fwd.effective_iw(),
        ic: fwd.n,
        oh: fwd.kh,
        ow: fwd.kw,
        oc: fwd.oc,
        kh: dilated_h,
        kw: dilated_w,
        stride: 1,
        pad_h: 0,
        pad_w: 0,
        has_bias: false,
    };
    (dx, dw)
}

/// Forward, backward and update layers of one training iteration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingGraph {
    pub forward: Vec<LayerSpec>,
    /// In execution order (reverse of the forward pass).
    pub backward: Vec<LayerSpec>,
    pub updates: Vec<LayerSpec>,
}

impl TrainingGraph {
    /// All layers in execution order.
    pub fn layers(&self) -> Vec<LayerSpec> {
        self.forward
            .iter()
            .chain(&self.backward)
            .chain(&self.updates)
            .cloned()
            .collect()
    }
}

fn derived(source: &LayerSpec, suffix: &str, kind: LayerKind, shape: LayerShape) -> LayerSpec {
    LayerSpec {
        name: format!("{}.{suffix}", source.name),
        kind,
        shape,
        bits: source.bits,
        tiling: None,
        source: Some(source.name.clone()),
    }
}

fn update(source: &LayerSpec, suffix: &str, h: u64, w: u64, n: u64, c: u64) -> LayerSpec {
    let shape = SimdShape {
        h,
        w,
        n,
        c,
        pool: None,
    };
    derived(source, suffix, LayerKind::ParamUpdate, LayerShape::Simd(shape))
}

pub fn expand_training(network: &[LayerSpec]) -> Result<TrainingGraph> {
    let mut backward = Vec::new();
    for (i, layer) in network.iter().enumerate().rev() {
        match (&layer.shape, layer.kind) {
            (LayerShape::Conv(s), LayerKind::Conv | LayerKind::FC) => {
                let (dx, dw) = backward_conv_shapes(s);
                if i > 0 {
                    backward.push(derived(layer, "dx", LayerKind::ConvGradIfmap, LayerShape::Conv(dx)));
                }
                backward.push(derived(layer, "dw", LayerKind::ConvGradWeight, LayerShape::Conv(dw)));
            }
            (LayerShape::Simd(s), kind) => {
                let (kind, shape) = match kind {
                    LayerKind::ReLU => (LayerKind::ReluBackward, *s),
                    LayerKind::TensorAdd => (LayerKind::TensorAddBackward, *s),
                    LayerKind::MaxPool | LayerKind::AvgPool | LayerKind::GlobalAvgPool => (LayerKind::PoolBackward, *s),
                    LayerKind::BatchNorm => (LayerKind::BnBackward, *s),
                    other => return Err(not_forward(layer, other)),
                };
                backward.push(derived(layer, "back", kind, LayerShape::Simd(shape)));
            }
            (_, other) => return Err(not_forward(layer, other)),
        }
    }

    let mut updates = Vec::new();
    for layer in network {
        match (&layer.shape, layer.kind) {
            (LayerShape::Conv(s), _) => {
                updates.push(update(layer, "w", s.kh, s.kw, s.ic, s.oc));
                if s.has_bias {
                    updates.push(update(layer, "b", 1, 1, 1, s.oc));
                }
            }
            (LayerShape::Simd(s), LayerKind::BatchNorm) => {
                updates.push(update(layer, "gamma", 1, 1, 1, s.c));
                updates.push(update(layer, "beta", 1, 1, 1, s.c));
            }
            _ => {}
        }
    }

    Ok(TrainingGraph {
        forward: network.to_vec(),
        backward,
        updates,
    })
}

fn not_forward(layer: &LayerSpec, kind: LayerKind) -> Error {
    Error::invalid(
        format!("layer `{}`", layer.name),
        format!("{} is not a forward-pass kind", kind.name()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strided_example() {
        let fwd = ConvShape::new(8, 9, 9, 16, 32, 3, 3, 2, 0, 0, false).unwrap();
        assert_eq!((fwd.oh, fwd.ow), (4, 4));
        let (dx, dw) = backward_conv_shapes(&fwd);
        assert_eq!(
            (dx.kh, dx.ic, dx.oc, dx.stride, dx.oh, dx.ih, dx.n),
            (3, 32, 16, 1, 9, 11, 8)
        );
        assert_eq!(
            (dw.kh, dw.ic, dw.oc, dw.stride, dw.oh, dw.ih, dw.n),
            (7, 8, 32, 1, 3, 9, 16)
        );
        dx.validate("dx").unwrap();
        dw.validate("dw").unwrap();
    }

    #[test]
    fn unit_kernel_needs_no_dilation() {
        let fwd = ConvShape::new(2, 5, 5, 3, 4, 1, 1, 1, 0, 0, false).unwrap();
        let (dx, _) = backward_conv_shapes(&fwd);
        assert_eq!(dx.ih, fwd.oh);
    }

    #[test]
    fn resnet_stem_weight_gradient_kernel() {
        let fwd = ConvShape::new(1, 224, 224, 3, 64, 7, 7, 2, 3, 3, false).unwrap();
        let (_, dw) = backward_conv_shapes(&fwd);
        assert_eq!((dw.kh, dw.kw), (223, 223));
        assert_eq!((dw.oh, dw.ow), (7, 7));
    }

    #[test]
    fn conv_bn_relu_expansion() {
        let conv = ConvShape::new(1, 8, 8, 4, 8, 3, 3, 1, 1, 1, false).unwrap();
        let act = SimdShape::new(8, 8, 1, 8).unwrap();
        let net = vec![
            LayerSpec::conv("c", conv),
            LayerSpec::simd("bn", LayerKind::BatchNorm, act),
            LayerSpec::simd("r", LayerKind::ReLU, act),
        ];
        let g = expand_training(&net).unwrap();
        assert_eq!(g.forward.len(), 3);
        let kinds: Vec<_> = g.backward.iter().map(|l| l.kind).collect();
        assert_eq!(
            kinds,
            [LayerKind::ReluBackward, LayerKind::BnBackward, LayerKind::ConvGradWeight]
        );
        let names: Vec<_> = g.updates.iter().map(|l| l.name.as_str()).collect();
        assert_eq!(names, ["c.w", "bn.gamma", "bn.beta"]);
        assert!(g.backward.iter().all(|l| l.source.is_some()));
        assert_eq!(expand_training(&net).unwrap(), g);
    }

    #[test]
    fn inner_conv_gets_input_gradient() {
        let a = ConvShape::new(1, 8, 8, 4, 8, 3, 3, 1, 1, 1, true).unwrap();
        let b = ConvShape::new(1, 8, 8, 8, 8, 3, 3, 1, 1, 1, false).unwrap();
        let g = expand_training(&[LayerSpec::conv("a", a), LayerSpec::conv("b", b)]).unwrap();
        let names: Vec<_> = g.backward.iter().map(|l| l.name.as_str()).collect();
        assert_eq!(names, ["b.dx", "b.dw", "a.dw"]);
        assert_eq!(g.updates.len(), 3);
    }

    #[test]
    fn backward_kinds_are_rejected() {
        let s = SimdShape::new(1, 1, 1, 4).unwrap();
        assert!(expand_training(&[LayerSpec::simd("x", LayerKind::ReluBackward, s)]).is_err());
    }
}
