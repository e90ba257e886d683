//! Native network-spec file format.
//!
//! The file is a JSON array of layer objects:
//!
//! ```json
//! [
//!   {"name": "conv1", "kind": "Conv", "bias": true,
//!    "dims": {"n": 1, "ih": 8, "iw": 8, "ic": 4, "oc": 8, "kh": 3, "kw": 3, "s": 1, "pad": 0},
//!    "bits": {"w": 16, "i": 16},
//!    "tiling": {"outer": {"oh": 6, "ow": 6, "n": 1, "kh": 3, "kw": 3, "ic": 4, "oc": 4}}},
//!   {"name": "relu1", "kind": "ReLU", "dims": {"h": 6, "w": 6, "n": 1, "c": 8}}
//! ]
//! ```
//!
//! Convolution-family kinds take `n ih iw ic oc kh kw` plus optional `s`, `pad`
//! (or `pad_h`/`pad_w`) and `oh`/`ow`, which are checked against the window.
//! `FC` takes `n ic oc`. SIMD kinds take `h w n c` (`h w n` default to 1);
//! pooling adds `rh rw s pad`, and `PoolBackward` needs `"pool": "max" | "avg"`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layer::*;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTiling {
    outer: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayer {
    name: String,
    kind: LayerKind,
    dims: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    bias: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pool: Option<PoolMode>,
    #[serde(default, skip_serializing_if = "LayerBits::is_empty")]
    bits: LayerBits,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tiling: Option<RawTiling>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<String>,
}

struct Dims<'a> {
    map: &'a BTreeMap<String, u64>,
    location: &'a str,
}

impl Dims<'_> {
    fn req(&self, key: &str) -> Result<u64> {
        self.map
            .get(key)
            .copied()
            .ok_or_else(|| Error::invalid(self.location, format!("missing dimension `{key}`")))
    }

    fn opt(&self, key: &str, default: u64) -> u64 {
        self.map.get(key).copied().unwrap_or(default)
    }

    fn only(&self, allowed: &[&str]) -> Result<()> {
        for key in self.map.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::invalid(self.location, format!("unexpected dimension `{key}`")));
            }
        }
        Ok(())
    }

    fn check(&self, key: &str, derived: u64) -> Result<()> {
        match self.map.get(key) {
            Some(&v) if v != derived => Err(Error::invalid(
                self.location,
                format!("declared {key}={v} inconsistent with derived {key}={derived}"),
            )),
            _ => Ok(()),
        }
    }
}

fn conv_from_dims(d: &Dims, kind: LayerKind, bias: bool) -> Result<ConvShape> {
    let shape = if kind == LayerKind::FC {
        d.only(&["n", "ic", "oc"])?;
        ConvShape::fully_connected(d.opt("n", 1), d.req("ic")?, d.req("oc")?, bias)
    } else {
        d.only(&[
            "n", "ih", "iw", "ic", "oh", "ow", "oc", "kh", "kw", "s", "pad", "pad_h", "pad_w",
        ])?;
        let pad = d.opt("pad", 0);
        ConvShape::new(
            d.opt("n", 1),
            d.req("ih")?,
            d.req("iw")?,
            d.req("ic")?,
            d.req("oc")?,
            d.req("kh")?,
            d.req("kw")?,
            d.opt("s", 1),
            d.opt("pad_h", pad),
            d.opt("pad_w", pad),
            bias,
        )
    }
    .map_err(|e| match e {
        Error::Invalid { message, .. } => Error::invalid(d.location, message),
        other => other,
    })?;
    d.check("oh", shape.oh)?;
    d.check("ow", shape.ow)?;
    Ok(shape)
}

fn simd_from_dims(d: &Dims, kind: LayerKind, pool: Option<PoolMode>) -> Result<SimdShape> {
    let (h, w, n, c) = (d.opt("h", 1), d.opt("w", 1), d.opt("n", 1), d.req("c")?);
    let window = match kind {
        LayerKind::MaxPool | LayerKind::AvgPool | LayerKind::PoolBackward => {
            d.only(&["h", "w", "n", "c", "rh", "rw", "s", "pad", "oh", "ow"])?;
            let mode = match kind {
                LayerKind::MaxPool => PoolMode::Max,
                LayerKind::AvgPool => PoolMode::Avg,
                _ => pool.ok_or_else(|| Error::invalid(d.location, "PoolBackward needs \"pool\": \"max\" | \"avg\""))?,
            };
            Some(PoolWindow {
                mode,
                rh: d.req("rh")?,
                rw: d.req("rw")?,
                stride: d.opt("s", 1),
                pad: d.opt("pad", 0),
            })
        }
        LayerKind::GlobalAvgPool => {
            d.only(&["h", "w", "n", "c", "oh", "ow"])?;
            Some(PoolWindow {
                mode: PoolMode::Avg,
                rh: h,
                rw: w,
                stride: 1,
                pad: 0,
            })
        }
        _ => {
            d.only(&["h", "w", "n", "c"])?;
            None
        }
    };
    let shape = SimdShape {
        h,
        w,
        n,
        c,
        pool: window,
    };
    shape.validate(d.location)?;
    let (oh, ow) = shape.out_hw();
    if shape.pool.is_some() {
        d.check("oh", oh)?;
        d.check("ow", ow)?;
    }
    Ok(shape)
}

fn tiling_from_raw(raw: &RawTiling, shape: &LayerShape, location: &str) -> Result<Tiling> {
    let bad = |k: &str| Error::invalid(location, format!("unexpected tiling dimension `{k}`"));
    match shape {
        LayerShape::Conv(s) => {
            let mut t = ConvTile::full(s);
            for (k, &v) in &raw.outer {
                match k.as_str() {
                    "ih" | "iw" => {}
                    k if ConvTile::DIMS.contains(&k) => t.set(k, v),
                    k => return Err(bad(k)),
                }
            }
            for (k, derived) in [("ih", t.ih(s.stride)), ("iw", t.iw(s.stride))] {
                if let Some(&v) = raw.outer.get(k) {
                    if v != derived {
                        return Err(Error::invalid(
                            location,
                            format!("tiling {k}={v} inconsistent with sliding window ({derived})"),
                        ));
                    }
                }
            }
            // Inner tiles depend on the array size; they are filled in at evaluation.
            Ok(Tiling::Conv(ConvTiling { outer: t, inner: t }))
        }
        LayerShape::Simd(s) => {
            let (oh, ow) = s.out_hw();
            let mut t = SimdTile {
                h: oh,
                w: ow,
                n: s.n,
                c: s.c,
            };
            for (k, &v) in &raw.outer {
                if !SimdTile::DIMS.contains(&k.as_str()) {
                    return Err(bad(k));
                }
                t.set(k, v);
            }
            Ok(Tiling::Simd(SimdTiling { outer: t, inner: t }))
        }
    }
}

fn layer_from_raw(raw: RawLayer) -> Result<LayerSpec> {
    let location = format!("layer `{}`", raw.name);
    let dims = Dims {
        map: &raw.dims,
        location: &location,
    };
    let shape = if raw.kind.is_conv_family() {
        LayerShape::Conv(conv_from_dims(&dims, raw.kind, raw.bias)?)
    } else {
        if raw.bias {
            return Err(Error::invalid(&location, "bias is only meaningful for convolution kinds"));
        }
        LayerShape::Simd(simd_from_dims(&dims, raw.kind, raw.pool)?)
    };
    let tiling = raw
        .tiling
        .as_ref()
        .map(|t| tiling_from_raw(t, &shape, &location))
        .transpose()?;
    let layer = LayerSpec {
        name: raw.name,
        kind: raw.kind,
        shape,
        bits: raw.bits,
        tiling,
        source: raw.source,
    };
    layer.validate()?;
    Ok(layer)
}

fn layer_to_raw(layer: &LayerSpec) -> RawLayer {
    let mut dims = BTreeMap::new();
    let mut bias = false;
    let mut pool = None;
    match &layer.shape {
        LayerShape::Conv(s) if layer.kind == LayerKind::FC => {
            dims.extend([("n", s.n), ("ic", s.ic), ("oc", s.oc)].map(|(k, v)| (k.to_string(), v)));
            bias = s.has_bias;
        }
        LayerShape::Conv(s) => {
            let mut entries = vec![
                ("n", s.n),
                ("ih", s.ih),
                ("iw", s.iw),
                ("ic", s.ic),
                ("oh", s.oh),
                ("ow", s.ow),
                ("oc", s.oc),
                ("kh", s.kh),
                ("kw", s.kw),
                ("s", s.stride),
            ];
            if s.pad_h == s.pad_w {
                entries.push(("pad", s.pad_h));
            } else {
                entries.push(("pad_h", s.pad_h));
                entries.push(("pad_w", s.pad_w));
            }
            dims.extend(entries.into_iter().map(|(k, v)| (k.to_string(), v)));
            bias = s.has_bias;
        }
        LayerShape::Simd(s) => {
            dims.extend([("h", s.h), ("w", s.w), ("n", s.n), ("c", s.c)].map(|(k, v)| (k.to_string(), v)));
            if let (Some(p), false) = (s.pool, layer.kind == LayerKind::GlobalAvgPool) {
                dims.extend([("rh", p.rh), ("rw", p.rw), ("s", p.stride), ("pad", p.pad)].map(|(k, v)| (k.to_string(), v)));
                if layer.kind == LayerKind::PoolBackward {
                    pool = Some(p.mode);
                }
            }
        }
    }
    let tiling = layer.tiling.map(|t| {
        let outer = match t {
            Tiling::Conv(c) => ConvTile::DIMS.iter().map(|&d| (d.to_string(), c.outer.get(d))).collect(),
            Tiling::Simd(s) => SimdTile::DIMS.iter().map(|&d| (d.to_string(), s.outer.get(d))).collect(),
        };
        RawTiling { outer }
    });
    RawLayer {
        name: layer.name.clone(),
        kind: layer.kind,
        dims,
        bias,
        pool,
        bits: layer.bits,
        tiling,
        source: layer.source.clone(),
    }
}

pub fn network_from_json_str(text: &str, location: &str) -> Result<Vec<LayerSpec>> {
    let raw: Vec<RawLayer> = serde_json::from_str(text).map_err(|source| Error::Parse {
        location: location.to_string(),
        source,
    })?;
    raw.into_iter().map(layer_from_raw).collect()
}

pub fn network_to_json_string(layers: &[LayerSpec]) -> String {
    let raw: Vec<RawLayer> = layers.iter().map(layer_to_raw).collect();
    serde_json::to_string_pretty(&raw).expect("network serializes")
}

pub fn load_network_spec(path: impl AsRef<Path>) -> Result<Vec<LayerSpec>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    network_from_json_str(&text, &path.display().to_string())
}

/// Returns a copy of the network with every batch dimension set to `batch`.
///
/// Parameter updates keep their shape since they do not scale with batch.
pub fn with_batch(layers: &[LayerSpec], batch: u64) -> Vec<LayerSpec> {
    layers
        .iter()
        .map(|l| {
            let mut l = l.clone();
            match &mut l.shape {
                LayerShape::Conv(s) => s.n = batch,
                LayerShape::Simd(s) if l.kind != LayerKind::ParamUpdate => s.n = batch,
                LayerShape::Simd(_) => {}
            }
            l.tiling = None;
            l
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMOKE: &str = r#"[
        {"name": "conv1", "kind": "Conv", "bias": true,
         "dims": {"n": 1, "ih": 8, "iw": 8, "ic": 4, "oc": 8, "kh": 3, "kw": 3, "s": 1, "pad": 0}},
        {"name": "relu1", "kind": "ReLU", "dims": {"h": 6, "w": 6, "n": 1, "c": 8}},
        {"name": "pool1", "kind": "MaxPool", "dims": {"h": 6, "w": 6, "n": 1, "c": 8, "rh": 2, "rw": 2, "s": 2}},
        {"name": "gap", "kind": "GlobalAvgPool", "dims": {"h": 3, "w": 3, "n": 1, "c": 8}},
        {"name": "fc", "kind": "FC", "dims": {"n": 1, "ic": 8, "oc": 10}}
    ]"#;

    #[test]
    fn parses_smoke_network() {
        let net = network_from_json_str(SMOKE, "smoke").unwrap();
        assert_eq!(net.len(), 5);
        let c = net[0].conv_shape().unwrap();
        assert_eq!((c.oh, c.ow, c.has_bias), (6, 6, true));
        assert_eq!(net[2].simd_shape().unwrap().out_hw(), (3, 3));
        assert_eq!(net[3].simd_shape().unwrap().out_hw(), (1, 1));
        assert_eq!(net[4].conv_shape().unwrap().ic, 8);
    }

    #[test]
    fn declared_ofmap_must_match() {
        let text = r#"[{"name": "bad", "kind": "Conv",
            "dims": {"n": 1, "ih": 8, "iw": 8, "ic": 4, "oc": 8, "kh": 3, "kw": 3, "oh": 7}}]"#;
        let err = network_from_json_str(text, "f").unwrap_err().to_string();
        assert!(err.contains("layer `bad`") && err.contains("oh=7"), "{err}");
    }

    #[test]
    fn unknown_kind_rejected() {
        let text = r#"[{"name": "x", "kind": "Softmax", "dims": {"c": 1}}]"#;
        let err = network_from_json_str(text, "f").unwrap_err().to_string();
        assert!(err.contains("Softmax"), "{err}");
    }

    #[test]
    fn unknown_dimension_rejected() {
        let text = r#"[{"name": "r", "kind": "ReLU", "dims": {"c": 1, "kh": 3}}]"#;
        assert!(network_from_json_str(text, "f").is_err());
    }

    #[test]
    fn pool_backward_needs_mode() {
        let text = r#"[{"name": "pb", "kind": "PoolBackward", "dims": {"h": 4, "w": 4, "c": 1, "rh": 2, "rw": 2, "s": 2}}]"#;
        assert!(network_from_json_str(text, "f").is_err());
        let text = text.replace("\"dims\"", "\"pool\": \"max\", \"dims\"");
        assert!(network_from_json_str(&text, "f").is_ok());
    }

    #[test]
    fn round_trip_is_identity() {
        let net = network_from_json_str(SMOKE, "smoke").unwrap();
        let again = network_from_json_str(&network_to_json_string(&net), "again").unwrap();
        assert_eq!(net, again);
    }

    #[test]
    fn tiling_is_parsed_per_variant() {
        let text = r#"[{"name": "c", "kind": "Conv",
            "dims": {"n": 1, "ih": 8, "iw": 8, "ic": 4, "oc": 8, "kh": 3, "kw": 3},
            "tiling": {"outer": {"oc": 4, "ih": 8}}}]"#;
        let net = network_from_json_str(text, "f").unwrap();
        match net[0].tiling {
            Some(Tiling::Conv(t)) => assert_eq!((t.outer.oc, t.outer.oh), (4, 6)),
            other => panic!("{other:?}"),
        }
        let text = text.replace("\"ih\": 8}}", "\"ih\": 7}}");
        assert!(network_from_json_str(&text, "f").is_err());
    }
}
