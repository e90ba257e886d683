//! Tile-level discrete-event reference simulators.
//!
//! [`simulate_conv`] walks the weight-stationary loop nest one outer tile at a
//! time, tracks which weight, bias and partial-sum tiles are resident or already
//! in DRAM, and schedules each tile's transfers on the three DRAM interfaces in
//! parallel with compute. It never uses the occurrence-count formulas, so its
//! agreement with [`crate::conv`] is a real check.
//!
//! [`simulate_simd`] replays the single-buffered load, compute, store sequence of
//! a SIMD layer. [`count_simd`] is a scalar interpreter that visits every element
//! of every tile and counts operations and accesses from a hand-written loop nest
//! per layer kind.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ceil_div;
use crate::conv::{conv_tile_cycles, Conventions, StallCase, TileVolumes};
use crate::simd::{profile_for, Scope, SimdOpProfile, VmemAccounting};
use crate::specs::*;

/// Half-open cycle interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: u64,
    pub end: u64,
}

impl Span {
    fn at(start: u64, len: u64) -> Self {
        Span { start, end: start + len }
    }

    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interface {
    /// Shared weight/bias port.
    W,
    I,
    O,
    /// SIMD vector-memory port.
    V,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileEvent {
    pub index: u64,
    /// 1..=8 for convolution tiles, 0 for SIMD tiles.
    pub case: u8,
    /// Includes pipeline setup.
    pub compute: Span,
    pub transfers: Vec<(Interface, Span)>,
    pub end: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileEventTrace {
    pub events: Vec<TileEvent>,
    pub prologue: Option<Span>,
    pub epilogue: Option<Span>,
    pub total_cycles: u64,
    pub compute_cycles: u64,
    pub bits: DramBits,
}

impl TileEventTrace {
    pub fn stall_cycles(&self) -> u64 {
        self.total_cycles - self.compute_cycles
    }

    pub fn case_counts(&self) -> [u64; 9] {
        let mut counts = [0; 9];
        for e in &self.events {
            counts[e.case as usize] += 1;
        }
        counts
    }

    /// Checks that compute spans and per-interface spans never overlap.
    pub fn is_well_formed(&self) -> bool {
        let mut last_compute = 0;
        let mut last = [0u64; 4];
        for e in &self.events {
            if e.compute.start < last_compute {
                return false;
            }
            last_compute = e.compute.end;
            for (iface, span) in &e.transfers {
                let slot = &mut last[*iface as usize];
                if span.start < *slot {
                    return false;
                }
                *slot = span.end;
            }
        }
        true
    }

    /// One line per tile: `index case start end`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        if let Some(p) = self.prologue {
            let _ = writeln!(out, "prologue - {} {}", p.start, p.end);
        }
        for e in &self.events {
            let _ = writeln!(out, "{} {} {} {}", e.index, e.case, e.compute.start, e.end);
        }
        if let Some(p) = self.epilogue {
            let _ = writeln!(out, "epilogue - {} {}", p.start, p.end);
        }
        out
    }
}

/// Replays a convolution's outer tiles in weight-stationary order.
pub fn simulate_conv(shape: &ConvShape, tiling: &ConvTiling, hw: &HardwareConfig, conv: Conventions) -> TileEventTrace {
    let t = &tiling.outer;
    let m = |full: u64, tile: u64| ceil_div(full, tile);
    let (m_oh, m_ow, m_n) = (m(shape.oh, t.oh), m(shape.ow, t.ow), m(shape.n, t.n));
    let (m_kh, m_kw, m_ic, m_oc) = (m(shape.kh, t.kh), m(shape.kw, t.kw), m(shape.ic, t.ic), m(shape.oc, t.oc));

    let vol = TileVolumes::new(shape, t);
    let c_tile = conv_tile_cycles(t, hw);
    let pso = hw.pso_sa();
    let psum_bits = vol.psum * hw.bits_psum;
    let ifmap_bits = vol.ifmap * hw.bits_ifmap;

    let mut now = 0;
    let mut prologue = None;
    if conv.prologue_epilogue {
        let w = ceil_div(vol.weight * hw.bits_weight + vol.bias * hw.bits_bias, hw.bw_w);
        let i = ceil_div(ifmap_bits, hw.bw_i);
        prologue = Some(Span::at(0, w.max(i)));
        now = w.max(i);
    }

    let mut resident_weight = None;
    let mut resident_bias = None;
    let mut stored: HashSet<(u64, u64, u64, u64)> = HashSet::new();
    let mut events = Vec::new();
    let mut bits = DramBits::default();
    let mut compute_cycles = 0;

    for oc in 0..m_oc {
        for kh in 0..m_kh {
            for kw in 0..m_kw {
                for ic in 0..m_ic {
                    for n in 0..m_n {
                        for ow in 0..m_ow {
                            for oh in 0..m_oh {
                                let load_weight = resident_weight != Some((oc, kh, kw, ic));
                                let load_bias = resident_bias != Some(oc);
                                resident_weight = Some((oc, kh, kw, ic));
                                resident_bias = Some(oc);
                                let out_key = (oh, ow, n, oc);
                                let load_psum = stored.contains(&out_key);
                                stored.insert(out_key);

                                let mut w_bits = 0;
                                if load_weight {
                                    w_bits += vol.weight * hw.bits_weight;
                                    bits.weight += vol.weight * hw.bits_weight;
                                }
                                if load_bias {
                                    w_bits += vol.bias * hw.bits_bias;
                                    bits.bias += vol.bias * hw.bits_bias;
                                }
                                let o_bits = if load_psum { 2 * psum_bits } else { psum_bits };
                                bits.ifmap += ifmap_bits;
                                bits.psum_ofmap += o_bits;

                                let case = StallCase::number_from_flags(
                                    load_weight && load_bias,
                                    load_weight && !load_bias,
                                    load_psum,
                                );
                                let start = now;
                                let data = start + pso;
                                let mut transfers = Vec::with_capacity(3);
                                let mut busy = c_tile;
                                for (iface, b, bw) in [
                                    (Interface::W, w_bits, hw.bw_w),
                                    (Interface::I, ifmap_bits, hw.bw_i),
                                    (Interface::O, o_bits, hw.bw_o),
                                ] {
                                    if b > 0 {
                                        let span = Span::at(data, ceil_div(b, bw));
                                        busy = busy.max(span.len());
                                        transfers.push((iface, span));
                                    }
                                }
                                now = data + busy;
                                compute_cycles += pso + c_tile;
                                events.push(TileEvent {
                                    index: events.len() as u64,
                                    case,
                                    compute: Span::at(start, pso + c_tile),
                                    transfers,
                                    end: now,
                                });
                            }
                        }
                    }
                }
            }
        }
    }

    let mut epilogue = None;
    if conv.prologue_epilogue {
        let len = ceil_div(psum_bits, hw.bw_o);
        epilogue = Some(Span::at(now, len));
        now += len;
    }
    TileEventTrace {
        events,
        prologue,
        epilogue,
        total_cycles: now,
        compute_cycles,
        bits,
    }
}

/// Replays a SIMD layer: every step of every tile loads, computes and stores in sequence.
///
/// The VMem port moves a segment's loads and stores as one bit stream, so its
/// occupancy is rounded up once per segment.
pub fn simulate_simd(kind: LayerKind, shape: &SimdShape, tiling: &SimdTiling, hw: &HardwareConfig) -> Option<TileEventTrace> {
    let profile = profile_for(kind, shape)?;
    Some(simulate_profile(&profile, tiling, hw, None))
}

/// As [`simulate_simd`], restricted to one schedule part when `part` is set.
pub fn simulate_profile(profile: &SimdOpProfile, tiling: &SimdTiling, hw: &HardwareConfig, part: Option<u8>) -> TileEventTrace {
    let t = tiling.outer;
    let sp = profile.space;
    let lanes = ceil_div(t.c, hw.simd_lanes());
    let mut now = 0;
    let mut events = Vec::new();
    let mut bits = DramBits::default();
    let mut compute_cycles = 0;

    let mut segment = |step: &crate::simd::Step, now: &mut u64| {
        let load: u64 = step.loads.iter().map(|o| o.extent.volume(&t) * width_bits(o.width, hw)).sum();
        let store: u64 = step.stores.iter().map(|o| o.extent.volume(&t) * width_bits(o.width, hw)).sum();
        bits.simd_in += load;
        bits.simd_out += store;
        let port = ceil_div(load + store, hw.bw_v);
        let load_len = ceil_div(load, hw.bw_v).min(port);
        let latency: u64 = step.ops.iter().map(|&(op, k)| k * hw.op_latency.of(op)).sum();
        let busy = match step.scope {
            Scope::Channel => lanes * latency,
            Scope::Spatial => t.h * t.w * t.n * lanes * latency + hw.pso_simd(),
        };
        let start = *now;
        let compute = Span::at(start + load_len, busy);
        let mut transfers = Vec::new();
        if load > 0 {
            transfers.push((Interface::V, Span::at(start, load_len)));
        }
        if port > load_len {
            transfers.push((Interface::V, Span::at(compute.end, port - load_len)));
        }
        *now = start + port + busy;
        compute_cycles += busy;
        events.push(TileEvent {
            index: events.len() as u64,
            case: 0,
            compute,
            transfers,
            end: *now,
        });
    };

    let steps: Vec<_> = profile.steps.iter().filter(|s| part.is_none_or(|p| s.part == p)).collect();
    for _c in 0..ceil_div(sp.c, t.c) {
        for step in &steps {
            match step.scope {
                Scope::Channel => segment(step, &mut now),
                Scope::Spatial => {
                    for _n in 0..ceil_div(sp.n, t.n) {
                        for _w in 0..ceil_div(sp.w, t.w) {
                            for _h in 0..ceil_div(sp.h, t.h) {
                                segment(step, &mut now);
                            }
                        }
                    }
                }
            }
        }
    }
    TileEventTrace {
        events,
        prologue: None,
        epilogue: None,
        total_cycles: now,
        compute_cycles,
        bits,
    }
}

fn width_bits(w: crate::simd::Width, hw: &HardwareConfig) -> u64 {
    match w {
        crate::simd::Width::In => hw.bits_simd_in,
        crate::simd::Width::Out => hw.bits_simd_out,
    }
}

/// Counts from [`count_simd`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementCounts {
    pub ops: OpCounts,
    pub dram_in_bits: u64,
    pub dram_out_bits: u64,
    pub vmem_bits: u64,
}

struct Counter<'a> {
    hw: &'a HardwareConfig,
    c: ElementCounts,
    per_op_vmem: bool,
}

impl Counter<'_> {
    fn load(&mut self, elems: u64, bits: u64) {
        for _ in 0..elems {
            self.c.dram_in_bits += bits;
            if !self.per_op_vmem {
                self.c.vmem_bits += bits;
            }
        }
    }

    fn store(&mut self, elems: u64, bits: u64) {
        for _ in 0..elems {
            self.c.dram_out_bits += bits;
            if !self.per_op_vmem {
                self.c.vmem_bits += bits;
            }
        }
    }

    fn op(&mut self, op: OpKind) {
        self.c.ops.add_op(op, 1);
        if self.per_op_vmem {
            self.c.vmem_bits += 2 * self.hw.bits_simd_in + self.hw.bits_simd_out;
        }
    }
}

/// Scalar interpreter: visits every element of every (full-size) tile and counts.
///
/// Written per layer kind straight from the operation definitions; it shares no
/// code with the schedule profiles. Only part `part` of batch-norm backward is
/// counted when `part` is set.
pub fn count_simd(kind: LayerKind, shape: &SimdShape, tiling: &SimdTiling, hw: &HardwareConfig, part: Option<u8>) -> ElementCounts {
    use OpKind::*;
    let t = tiling.outer;
    let (oh, ow) = shape.out_hw();
    let pooled_output = matches!(kind, LayerKind::MaxPool | LayerKind::AvgPool | LayerKind::GlobalAvgPool);
    let (sh, sw) = if pooled_output { (oh, ow) } else { (shape.h, shape.w) };
    let tiles_c = ceil_div(shape.c, t.c);
    let tiles_hwn = ceil_div(sh, t.h) * ceil_div(sw, t.w) * ceil_div(shape.n, t.n);
    let (b_in, b_out) = (hw.bits_simd_in, hw.bits_simd_out);
    let mut k = Counter {
        hw,
        c: ElementCounts::default(),
        per_op_vmem: matches!(kind, LayerKind::BatchNorm | LayerKind::BnBackward),
    };
    let tile_elems = t.h * t.w * t.n * t.c;

    for _ in 0..tiles_c {
        match kind {
            LayerKind::BnBackward => {
                let b = b_in;
                if part.is_none_or(|p| p == 1) {
                    k.load(2 * t.c, b); // mu, psi
                    for _ in 0..tiles_hwn {
                        k.load(2 * tile_elems, b); // x, dy
                        for _ in 0..tile_elems {
                            k.op(Sub); // x - mu
                            k.op(Mul); // * psi
                            k.op(Mul); // dy * xhat
                            k.op(Add); // dgamma +=
                            k.op(Add); // dbeta +=
                        }
                        k.store(tile_elems, b); // xhat
                    }
                    k.store(2 * t.c, b); // dgamma, dbeta
                }
                if part.is_none_or(|p| p == 2) {
                    k.load(t.c, b); // gamma
                    for _ in 0..t.c {
                        k.op(Mul); // gamma * psi
                        k.op(Div); // / N_eff
                    }
                    for _ in 0..tiles_hwn {
                        k.load(2 * tile_elems, b); // xhat, dy
                        for _ in 0..tile_elems {
                            k.op(Mul); // N_eff * dy
                            k.op(Sub); // - dbeta
                            k.op(Mul); // xhat * dgamma
                            k.op(Sub);
                            k.op(Mul); // * factor
                        }
                        k.store(tile_elems, b); // dx
                    }
                }
            }
            LayerKind::BatchNorm => {
                k.load(2 * t.c, b_in); // gamma, beta
                for _ in 0..tiles_hwn {
                    k.load(tile_elems, b_in);
                    for _ in 0..tile_elems {
                        k.op(Add);
                    }
                }
                for _ in 0..t.c {
                    k.op(Div); // mean
                }
                for _ in 0..tiles_hwn {
                    k.load(tile_elems, b_in);
                    for _ in 0..tile_elems {
                        k.op(Sub); // x - mu
                        k.op(Mul); // squared
                        k.op(Add); // variance +=
                        k.op(Sub); // normalize
                        k.op(Mul); // scale
                    }
                    k.store(tile_elems, b_out);
                }
                for _ in 0..t.c {
                    k.op(Div); // inverse std
                }
                k.store(2 * t.c, b_out); // mu, psi
            }
            _ => {
                for _ in 0..tiles_hwn {
                    count_elementwise_tile(&mut k, kind, shape, &t, (oh, ow));
                }
            }
        }
    }
    k.c
}

fn count_elementwise_tile(k: &mut Counter, kind: LayerKind, shape: &SimdShape, t: &SimdTile, out_hw: (u64, u64)) {
    use OpKind::*;
    let (b_in, b_out) = (k.hw.bits_simd_in, k.hw.bits_simd_out);
    let elems = t.h * t.w * t.n * t.c;
    match kind {
        LayerKind::ReLU => {
            k.load(elems, b_in);
            (0..elems).for_each(|_| k.op(Max));
            k.store(elems, b_out);
        }
        LayerKind::ReluBackward => {
            k.load(2 * elems, b_in);
            for _ in 0..elems {
                k.op(Max); // x > 0
                k.op(Mul); // dy * mask
            }
            k.store(elems, b_out);
        }
        LayerKind::TensorAdd => {
            k.load(2 * elems, b_in);
            (0..elems).for_each(|_| k.op(Add));
            k.store(elems, b_out);
        }
        LayerKind::TensorAddBackward => {
            k.load(elems, b_in);
            k.store(2 * elems, b_out);
        }
        LayerKind::ParamUpdate => {
            k.load(2 * elems, b_in);
            for _ in 0..elems {
                k.op(Mul); // lr * g
                k.op(Sub);
            }
            k.store(elems, b_out);
        }
        LayerKind::MaxPool | LayerKind::AvgPool | LayerKind::GlobalAvgPool => {
            let p = shape.pool.expect("pool window");
            // contiguous input block covering the tile's windows
            let rows = (0..t.h).map(|r| r * p.stride + p.rh).max().unwrap_or(0);
            let cols = (0..t.w).map(|c| c * p.stride + p.rw).max().unwrap_or(0);
            k.load(rows * cols * t.n * t.c, b_in);
            for _ in 0..elems {
                for _ in 1..p.rh * p.rw {
                    k.op(if p.mode == PoolMode::Max { Max } else { Add });
                }
                if p.mode == PoolMode::Avg {
                    k.op(Mul);
                }
            }
            let outputs = if p.mode == PoolMode::Max { 2 } else { 1 };
            k.store(outputs * elems, b_out);
        }
        LayerKind::PoolBackward => {
            let p = shape.pool.expect("pool window");
            let (fh, fw) = (ceil_div(shape.h, out_hw.0), ceil_div(shape.w, out_hw.1));
            // output gradients whose anchor falls inside the input tile
            let anchors = (0..t.h).filter(|r| r % fh == 0).count() as u64 * (0..t.w).filter(|c| c % fw == 0).count() as u64;
            let grads = anchors * t.n * t.c;
            let streams = if p.mode == PoolMode::Max { 2 } else { 1 };
            k.load(streams * grads, b_in);
            for _ in 0..elems {
                if p.mode == PoolMode::Max {
                    k.op(Max);
                }
                k.op(Mul);
            }
            k.store(elems, b_out);
        }
        _ => unreachable!("{} is not a SIMD kind", kind.name()),
    }
}

impl ElementCounts {
    pub fn dram_bits(&self) -> u64 {
        self.dram_in_bits + self.dram_out_bits
    }

    /// Whether the counts equal a model's statistics.
    pub fn matches(&self, stats: &LayerStats) -> bool {
        self.ops == stats.op_counts
            && self.dram_in_bits == stats.dram_bits.simd_in
            && self.dram_out_bits == stats.dram_bits.simd_out
            && self.vmem_bits == stats.sram_bits.vmem
    }
}

/// VMem accounting used by a profile; exposed for reporting.
pub fn vmem_accounting(kind: LayerKind, shape: &SimdShape) -> Option<VmemAccounting> {
    profile_for(kind, shape).map(|p| p.vmem)
}

/// A random convolution with a random tiling that fits its buffers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvInstance {
    pub shape: ConvShape,
    pub tiling: ConvTiling,
    pub hw: HardwareConfig,
}

/// Draws a convolution with every dimension at most `max_dim`, tiles of at least a
/// quarter of each dimension, bandwidths in `8..=512`, and buffers sized so the
/// tiling fits.
pub fn random_conv_instance<R: Rng>(rng: &mut R, max_dim: u64) -> ConvInstance {
    let max_dim = max_dim.max(1);
    let shape = loop {
        let kh = rng.gen_range(1..=max_dim.min(5));
        let kw = rng.gen_range(1..=max_dim.min(5));
        let stride = rng.gen_range(1..=3);
        let pad = rng.gen_range(0..=kh.min(kw) / 2);
        let ih = rng.gen_range(1..=max_dim);
        let iw = rng.gen_range(1..=max_dim);
        let n = rng.gen_range(1..=max_dim.min(4));
        let ic = rng.gen_range(1..=max_dim);
        let oc = rng.gen_range(1..=max_dim);
        if let Ok(s) = ConvShape::new(n, ih, iw, ic, oc, kh, kw, stride, pad, pad, rng.gen_bool(0.5)) {
            break s;
        }
    };
    let full = ConvTile::full(&shape);
    let mut outer = full;
    for d in ConvTile::DIMS {
        let dim = full.get(d);
        outer.set(d, rng.gen_range(dim.div_ceil(4)..=dim));
    }
    let bits = [8, 16, 32];
    let mut hw = HardwareConfig {
        pe_rows: rng.gen_range(1..=8),
        pe_cols: rng.gen_range(1..=8),
        wbuf_bytes: 1,
        bbuf_bytes: 1,
        ibuf_bytes: 1,
        obuf_bytes: 1,
        vmem_bytes: 1 << 20,
        imem_bytes: 1 << 15,
        bw_w: rng.gen_range(8..=512),
        bw_i: rng.gen_range(8..=512),
        bw_o: rng.gen_range(8..=512),
        bw_v: rng.gen_range(8..=512),
        bits_weight: bits[rng.gen_range(0..3)],
        bits_bias: 32,
        bits_ifmap: bits[rng.gen_range(0..3)],
        bits_psum: 32,
        bits_simd_in: 32,
        bits_simd_out: 32,
        op_latency: OpLatency::default(),
    };
    let v = TileVolumes::new(&shape, &outer);
    let mut room = |bits: u64| (bits * 2).div_ceil(8).max(1) + rng.gen_range(0..64);
    hw.wbuf_bytes = room(v.weight * hw.bits_weight);
    hw.ibuf_bytes = room(v.ifmap * hw.bits_ifmap);
    hw.obuf_bytes = room(v.psum * hw.bits_psum);
    hw.bbuf_bytes = room(outer.oc * hw.bits_bias);
    let tiling = ConvTiling::from_outer(outer, hw.pe_rows, hw.pe_cols);
    ConvInstance { shape, tiling, hw }
}

/// A random SIMD tile for `space` with every dimension at least a quarter of the full extent.
pub fn random_simd_tile<R: Rng>(rng: &mut R, space: &SimdTile) -> SimdTile {
    let mut t = *space;
    for d in SimdTile::DIMS {
        let dim = space.get(d);
        t.set(d, rng.gen_range(dim.div_ceil(4)..=dim));
    }
    t
}
