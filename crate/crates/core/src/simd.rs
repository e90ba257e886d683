//! Models for layers executed on the `1 x K` SIMD array.
//!
//! The SIMD array is single-buffered: for every outer tile it loads operands from
//! DRAM, computes, and stores results, one after the other. Each layer kind is
//! described by a [`SimdOpProfile`], a per-channel-tile schedule of steps. A step
//! runs either once per channel tile (1D tensors such as batch-norm statistics)
//! or once per spatial tile (4D tensors), loads and stores whole tiles, and
//! applies a fixed number of operations per element.
//!
//! Tensor-add and batch-norm backward also have dedicated closed forms
//! ([`tensor_add_eval`], [`bn_backward_eval`]) that the profile engine must agree with.

use serde::{Deserialize, Serialize};

use crate::ceil_div;
use crate::specs::*;

/// Tile volume of an operand relative to the outer tile of the iteration space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extent {
    /// Same shape as the iteration tile.
    Full,
    /// Per-channel vector: `T_c` elements.
    Channel,
    /// Input window feeding a pooled output tile.
    Window { rh: u64, rw: u64, stride: u64 },
    /// Output positions anchored in an input tile (pool backward reading `dY`).
    Strided { fh: u64, fw: u64 },
}

impl Extent {
    pub fn volume(&self, t: &SimdTile) -> u64 {
        match *self {
            Extent::Full => t.volume(),
            Extent::Channel => t.c,
            Extent::Window { rh, rw, stride } => {
                (stride * (t.h - 1) + rh) * (stride * (t.w - 1) + rw) * t.n * t.c
            }
            Extent::Strided { fh, fw } => ceil_div(t.h, fh) * ceil_div(t.w, fw) * t.n * t.c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Width {
    In,
    Out,
}

impl Width {
    fn bits(self, hw: &HardwareConfig) -> u64 {
        match self {
            Width::In => hw.bits_simd_in,
            Width::Out => hw.bits_simd_out,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Operand {
    pub name: &'static str,
    /// VMem region holding the tile; tensors computed in place share a slot.
    pub slot: &'static str,
    pub extent: Extent,
    pub width: Width,
}

const fn operand(name: &'static str, extent: Extent, width: Width) -> Operand {
    Operand {
        name,
        slot: name,
        extent,
        width,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scope {
    /// Once per channel tile.
    Channel,
    /// Once per spatial (h, w, n) tile inside a channel tile.
    Spatial,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Step {
    pub scope: Scope,
    pub loads: Vec<Operand>,
    pub stores: Vec<Operand>,
    /// Operations applied per element of the step's iteration tile.
    pub ops: Vec<(OpKind, u64)>,
    /// Schedule part the step belongs to (batch-norm backward has two).
    pub part: u8,
}

impl Step {
    fn spatial(loads: Vec<Operand>, ops: Vec<(OpKind, u64)>, stores: Vec<Operand>) -> Self {
        Step {
            scope: Scope::Spatial,
            loads,
            stores,
            ops,
            part: 1,
        }
    }

    fn channel(loads: Vec<Operand>, ops: Vec<(OpKind, u64)>, stores: Vec<Operand>) -> Self {
        Step {
            scope: Scope::Channel,
            loads,
            stores,
            ops,
            part: 1,
        }
    }

    fn in_part(mut self, part: u8) -> Self {
        self.part = part;
        self
    }
}

/// How VMem traffic is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VmemAccounting {
    /// Every loaded or stored tile element is one VMem access.
    Operands,
    /// Each operation reads two operands and writes one.
    PerOp,
}

/// Schedule of one SIMD layer over its iteration space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimdOpProfile {
    /// Full extent of the iteration space (output extent for pooling).
    pub space: SimdTile,
    pub steps: Vec<Step>,
    pub vmem: VmemAccounting,
}

impl SimdOpProfile {
    /// Distinct VMem slots and their widths; all must be resident at once.
    pub fn resident(&self) -> Vec<(Extent, Width)> {
        let mut seen: Vec<&'static str> = Vec::new();
        let mut out = Vec::new();
        for step in &self.steps {
            for op in step.loads.iter().chain(&step.stores) {
                if !seen.contains(&op.slot) {
                    seen.push(op.slot);
                    out.push((op.extent, op.width));
                }
            }
        }
        out
    }

    pub fn resident_bits(&self, tile: &SimdTile, hw: &HardwareConfig) -> u64 {
        self.resident()
            .iter()
            .map(|(e, w)| e.volume(tile) * w.bits(hw))
            .sum()
    }
}

use Extent::{Channel as Ch, Full};
use OpKind::*;
use Width::{In, Out};

/// Builds the schedule for a SIMD layer kind. Returns `None` for systolic kinds.
pub fn profile_for(kind: LayerKind, shape: &SimdShape) -> Option<SimdOpProfile> {
    let (oh, ow) = shape.out_hw();
    let input_space = SimdTile {
        h: shape.h,
        w: shape.w,
        n: shape.n,
        c: shape.c,
    };
    let output_space = SimdTile { h: oh, w: ow, ..input_space };
    let window = shape.pool.map(|p| Extent::Window {
        rh: p.rh,
        rw: p.rw,
        stride: p.stride,
    });
    let x = operand("x", Full, In);
    let dy = operand("dy", Full, In);
    let dx = operand("dx", Full, Out);
    let y = operand("y", Full, Out);

    let (space, steps, vmem) = match kind {
        LayerKind::ReLU => (
            input_space,
            vec![Step::spatial(vec![x], vec![(Max, 1)], vec![y])],
            VmemAccounting::Operands,
        ),
        LayerKind::ReluBackward => (
            input_space,
            vec![Step::spatial(vec![x, dy], vec![(Max, 1), (Mul, 1)], vec![dx])],
            VmemAccounting::Operands,
        ),
        LayerKind::TensorAdd => (
            input_space,
            vec![Step::spatial(
                vec![operand("a", Full, In), operand("b", Full, In)],
                vec![(Add, 1)],
                vec![y],
            )],
            VmemAccounting::Operands,
        ),
        LayerKind::TensorAddBackward => (
            input_space,
            vec![Step::spatial(
                vec![dy],
                vec![],
                vec![operand("da", Full, Out), operand("db", Full, Out)],
            )],
            VmemAccounting::Operands,
        ),
        LayerKind::MaxPool | LayerKind::AvgPool | LayerKind::GlobalAvgPool => {
            let p = shape.pool?;
            let window_ops = p.rh * p.rw - 1;
            let pooled_in = Operand {
                extent: window?,
                ..x
            };
            let step = match p.mode {
                PoolMode::Max => Step::spatial(
                    vec![pooled_in],
                    vec![(Max, window_ops)],
                    vec![y, operand("mask", Full, Out)],
                ),
                PoolMode::Avg => Step::spatial(vec![pooled_in], vec![(Add, window_ops), (Mul, 1)], vec![y]),
            };
            (output_space, vec![step], VmemAccounting::Operands)
        }
        LayerKind::PoolBackward => {
            let p = shape.pool?;
            let strided = Extent::Strided {
                fh: ceil_div(shape.h, oh),
                fw: ceil_div(shape.w, ow),
            };
            let dy = Operand { extent: strided, ..dy };
            let step = match p.mode {
                PoolMode::Max => Step::spatial(
                    vec![dy, operand("mask", strided, In)],
                    vec![(Max, 1), (Mul, 1)],
                    vec![dx],
                ),
                PoolMode::Avg => Step::spatial(vec![dy], vec![(Mul, 1)], vec![dx]),
            };
            (input_space, vec![step], VmemAccounting::Operands)
        }
        LayerKind::BatchNorm => {
            let (mu, psi) = (operand("mu", Ch, Out), operand("psi", Ch, Out));
            (
                input_space,
                vec![
                    Step::channel(vec![operand("gamma", Ch, In), operand("beta", Ch, In)], vec![], vec![]),
                    // mean
                    Step::spatial(vec![x], vec![(Add, 1)], vec![]),
                    Step::channel(vec![], vec![(Div, 1)], vec![]),
                    // variance and normalization
                    Step::spatial(vec![x], vec![(Sub, 2), (Mul, 2), (Add, 1)], vec![y]),
                    // inverse square root, costed as a divide
                    Step::channel(vec![], vec![(Div, 1)], vec![mu, psi]),
                ],
                VmemAccounting::PerOp,
            )
        }
        LayerKind::BnBackward => (input_space, bn_backward_steps(), VmemAccounting::PerOp),
        LayerKind::ParamUpdate => (
            input_space,
            vec![Step::spatial(
                vec![operand("p", Full, In), operand("g", Full, In)],
                vec![(Mul, 1), (Sub, 1)],
                vec![operand("p", Full, Out)],
            )],
            VmemAccounting::Operands,
        ),
        _ => return None,
    };
    Some(SimdOpProfile { space, steps, vmem })
}

/// Batch-norm backward: part 1 computes the scale/shift gradients, part 2 the
/// input gradient. All tensors use the SIMD input width.
fn bn_backward_steps() -> Vec<Step> {
    let x = operand("x", Full, In);
    let dy = operand("dy", Full, In);
    // x-hat overwrites x in VMem
    let xhat = Operand {
        name: "xhat",
        slot: "x",
        extent: Full,
        width: In,
    };
    vec![
        Step::channel(vec![operand("mu", Ch, In), operand("psi", Ch, In)], vec![], vec![]),
        Step::spatial(vec![x, dy], vec![(Sub, 1), (Mul, 2), (Add, 2)], vec![xhat]),
        Step::channel(vec![operand("gamma", Ch, In)], vec![(Mul, 1), (Div, 1)], vec![]).in_part(2),
        Step::spatial(vec![xhat, dy], vec![(Mul, 3), (Sub, 2)], vec![operand("dx", Full, In)]).in_part(2),
        Step::channel(vec![], vec![], vec![operand("dgamma", Ch, In), operand("dbeta", Ch, In)]),
    ]
}

/// Accumulated statistics of a set of SIMD steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimdPartStats {
    pub compute_cycles: u64,
    pub stall_cycles: u64,
    pub dram_in_bits: u64,
    pub dram_out_bits: u64,
    pub vmem_bits: u64,
    pub op_counts: OpCounts,
}

impl SimdPartStats {
    pub fn dram_bits(&self) -> u64 {
        self.dram_in_bits + self.dram_out_bits
    }

    pub fn op_total(&self) -> u64 {
        self.op_counts.simd_total()
    }

    fn combine(a: Self, b: Self) -> Self {
        let mut ops = a.op_counts;
        ops += b.op_counts;
        SimdPartStats {
            compute_cycles: a.compute_cycles + b.compute_cycles,
            stall_cycles: a.stall_cycles + b.stall_cycles,
            dram_in_bits: a.dram_in_bits + b.dram_in_bits,
            dram_out_bits: a.dram_out_bits + b.dram_out_bits,
            vmem_bits: a.vmem_bits + b.vmem_bits,
            op_counts: ops,
        }
    }

    pub fn into_layer_stats(self) -> LayerStats {
        LayerStats::new(
            ExecUnit::SIMD,
            self.compute_cycles,
            self.stall_cycles,
            DramBits {
                simd_in: self.dram_in_bits,
                simd_out: self.dram_out_bits,
                ..DramBits::default()
            },
            SramBits {
                vmem: self.vmem_bits,
                ..SramBits::default()
            },
            self.op_counts,
        )
    }
}

fn eval_steps(profile: &SimdOpProfile, tiling: &SimdTiling, hw: &HardwareConfig, part: Option<u8>) -> SimdPartStats {
    let t = tiling.outer;
    let sp = profile.space;
    let m_c = ceil_div(sp.c, t.c);
    let m_hwn = ceil_div(sp.h, t.h) * ceil_div(sp.w, t.w) * ceil_div(sp.n, t.n);
    let lane_iters = ceil_div(t.c, hw.simd_lanes());
    let per_op_vmem = 2 * hw.bits_simd_in + hw.bits_simd_out;

    let mut acc = SimdPartStats::default();
    for step in profile.steps.iter().filter(|s| part.is_none_or(|p| s.part == p)) {
        let (execs, elems) = match step.scope {
            Scope::Channel => (m_c, t.c),
            Scope::Spatial => (m_c * m_hwn, t.volume()),
        };
        let latency: u64 = step.ops.iter().map(|&(op, k)| k * hw.op_latency.of(op)).sum();
        let cycles = match step.scope {
            Scope::Channel => lane_iters * latency,
            Scope::Spatial => t.h * t.w * t.n * lane_iters * latency + hw.pso_simd(),
        };
        let bits = |ops: &[Operand]| -> u64 { ops.iter().map(|o| o.extent.volume(&t) * o.width.bits(hw)).sum() };
        let (load, store) = (bits(&step.loads), bits(&step.stores));
        acc.compute_cycles += cycles * execs;
        acc.stall_cycles += ceil_div(load + store, hw.bw_v) * execs;
        acc.dram_in_bits += load * execs;
        acc.dram_out_bits += store * execs;
        for &(op, k) in &step.ops {
            acc.op_counts.add_op(op, k * elems * execs);
            if profile.vmem == VmemAccounting::PerOp {
                acc.vmem_bits += k * elems * execs * per_op_vmem;
            }
        }
    }
    if profile.vmem == VmemAccounting::Operands {
        acc.vmem_bits = acc.dram_bits();
    }
    acc
}

/// Evaluates any SIMD layer from its profile.
pub fn simd_generic_eval(profile: &SimdOpProfile, tiling: &SimdTiling, hw: &HardwareConfig) -> LayerStats {
    eval_steps(profile, tiling, hw, None).into_layer_stats()
}

/// Profile-engine statistics restricted to one schedule part.
pub fn simd_part_eval(profile: &SimdOpProfile, tiling: &SimdTiling, hw: &HardwareConfig, part: u8) -> SimdPartStats {
    eval_steps(profile, tiling, hw, Some(part))
}

/// Tensor-add closed form.
pub fn tensor_add_eval(shape: &SimdShape, tiling: &SimdTiling, hw: &HardwareConfig) -> LayerStats {
    let t = tiling.outer;
    let iters = ceil_div(shape.h, t.h) * ceil_div(shape.w, t.w) * ceil_div(shape.n, t.n) * ceil_div(shape.c, t.c);
    let v_tile = t.volume();
    let tile_bits = v_tile * (2 * hw.bits_simd_in + hw.bits_simd_out);
    let dram = tile_bits * iters;
    let c_tile = t.h * t.w * t.n * ceil_div(t.c, hw.simd_lanes()) * hw.op_latency.add;
    let compute = (c_tile + hw.pso_simd()) * iters;
    let stall = ceil_div(tile_bits, hw.bw_v) * iters;
    LayerStats::new(
        ExecUnit::SIMD,
        compute,
        stall,
        DramBits {
            simd_in: v_tile * iters * 2 * hw.bits_simd_in,
            simd_out: v_tile * iters * hw.bits_simd_out,
            ..DramBits::default()
        },
        SramBits {
            vmem: dram,
            ..SramBits::default()
        },
        OpCounts {
            add: v_tile * iters,
            ..OpCounts::default()
        },
    )
}

/// Batch-norm backward statistics, split by schedule part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BnBackwardStats {
    pub part1: SimdPartStats,
    pub part2: SimdPartStats,
    pub total: LayerStats,
}

/// Batch-norm backward closed form, with a single width `b_io = bits_simd_in`.
///
/// Part 2 (input gradient) per channel tile: load `gamma`, compute the per-channel
/// factor (mul + div), then per spatial tile load `x_hat`, `dY`, apply 3 mul + 2 sub
/// per element and store `dX`.
///
/// Part 1 (scale/shift gradients) per channel tile: load `mu`, `psi`; per spatial
/// tile load `x`, `dY`, compute `x_hat` (sub + mul) and the partial sums
/// (mul + 2 add), store `x_hat`; finally store `dgamma`, `dbeta`. The gradients stay
/// in VMem for part 2 and are written once.
pub fn bn_backward_eval(shape: &SimdShape, tiling: &SimdTiling, hw: &HardwareConfig) -> BnBackwardStats {
    let t = tiling.outer;
    let b = hw.bits_simd_in;
    let bw = hw.bw_v;
    let lanes = ceil_div(t.c, hw.simd_lanes());
    let lat = &hw.op_latency;
    let m_c = ceil_div(shape.c, t.c);
    let m_hwn = ceil_div(shape.h, t.h) * ceil_div(shape.w, t.w) * ceil_div(shape.n, t.n);
    let v1 = t.c;
    let v4 = t.volume();
    let pso = hw.pso_simd();

    let part2 = {
        let c_1d = lanes * (lat.mul + lat.div);
        let c_4d = t.h * t.w * t.n * lanes * (3 * lat.mul + 2 * lat.sub);
        let ops = OpCounts {
            mul: (v1 + 3 * v4 * m_hwn) * m_c,
            div: v1 * m_c,
            sub: 2 * v4 * m_hwn * m_c,
            ..OpCounts::default()
        };
        let op_total = (2 * v1 + 5 * v4 * m_hwn) * m_c;
        debug_assert_eq!(op_total, ops.simd_total());
        SimdPartStats {
            compute_cycles: ((c_4d + pso) * m_hwn + c_1d) * m_c,
            stall_cycles: (ceil_div(v1 * b, bw) + ceil_div(3 * v4 * b, bw) * m_hwn) * m_c,
            dram_in_bits: (v1 + 2 * v4 * m_hwn) * m_c * b,
            dram_out_bits: v4 * m_hwn * m_c * b,
            vmem_bits: op_total * 3 * b,
            op_counts: ops,
        }
    };

    let part1 = {
        let c_4d = t.h * t.w * t.n * lanes * (lat.sub + 2 * lat.mul + 2 * lat.add);
        let ops = OpCounts {
            sub: v4 * m_hwn * m_c,
            mul: 2 * v4 * m_hwn * m_c,
            add: 2 * v4 * m_hwn * m_c,
            ..OpCounts::default()
        };
        SimdPartStats {
            compute_cycles: (c_4d + pso) * m_hwn * m_c,
            stall_cycles: (2 * ceil_div(2 * v1 * b, bw) + ceil_div(3 * v4 * b, bw) * m_hwn) * m_c,
            dram_in_bits: (2 * v1 + 2 * v4 * m_hwn) * m_c * b,
            dram_out_bits: (2 * v1 + v4 * m_hwn) * m_c * b,
            vmem_bits: ops.simd_total() * 3 * b,
            op_counts: ops,
        }
    };

    BnBackwardStats {
        part1,
        part2,
        total: SimdPartStats::combine(part1, part2).into_layer_stats(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specs::test_hw;

    fn full_tiling(space: SimdTile, lanes: u64) -> SimdTiling {
        SimdTiling::from_outer(space, lanes)
    }

    #[test]
    fn tensor_add_worked_example() {
        let hw = test_hw(4, 4);
        let shape = SimdShape::new(4, 4, 1, 8).unwrap();
        let t = full_tiling(SimdTile { h: 4, w: 4, n: 1, c: 8 }, 4);
        let s = tensor_add_eval(&shape, &t, &hw);
        assert_eq!(s.dram_bits.total(), 12288);
        assert_eq!(s.sram_bits.vmem, 12288);
        assert_eq!(s.compute_cycles, 40);
        assert_eq!(s.stall_cycles, 96);
        assert_eq!(s.total_cycles, 136);
        assert_eq!(s.op_counts.add, 128);
    }

    #[test]
    fn tensor_add_degenerate() {
        let hw = test_hw(4, 4);
        let shape = SimdShape::new(1, 1, 1, 1).unwrap();
        let t = full_tiling(SimdTile::ones(), 4);
        let s = tensor_add_eval(&shape, &t, &hw);
        assert_eq!(s.compute_cycles, hw.op_latency.add + hw.pso_simd());
        assert_eq!(s.dram_bits.total(), 3 * 32);
    }

    #[test]
    fn tensor_add_scales_with_channel_tiles() {
        let hw = test_hw(4, 4);
        let t = full_tiling(SimdTile { h: 4, w: 4, n: 1, c: 8 }, 4);
        let a = tensor_add_eval(&SimdShape::new(4, 4, 1, 8).unwrap(), &t, &hw);
        let b = tensor_add_eval(&SimdShape::new(4, 4, 1, 16).unwrap(), &t, &hw);
        assert_eq!(b.dram_bits.total(), 2 * a.dram_bits.total());
        assert_eq!(b.compute_cycles, 2 * a.compute_cycles);
    }

    #[test]
    fn generic_tensor_add_matches_closed_form() {
        let hw = test_hw(4, 4);
        for (shape, tile) in [
            (SimdShape::new(4, 4, 1, 8).unwrap(), SimdTile { h: 4, w: 4, n: 1, c: 8 }),
            (SimdShape::new(5, 3, 2, 9).unwrap(), SimdTile { h: 2, w: 3, n: 1, c: 4 }),
        ] {
            let t = full_tiling(tile, 4);
            let p = profile_for(LayerKind::TensorAdd, &shape).unwrap();
            assert_eq!(simd_generic_eval(&p, &t, &hw), tensor_add_eval(&shape, &t, &hw));
        }
    }

    #[test]
    fn bn_backward_part2_worked_example() {
        let mut hw = test_hw(4, 4);
        hw.op_latency = OpLatency {
            add: 1,
            sub: 1,
            mul: 1,
            div: 4,
            max: 1,
        };
        let shape = SimdShape::new(2, 2, 2, 8).unwrap();
        let t = full_tiling(SimdTile { h: 2, w: 2, n: 2, c: 8 }, 4);
        let s = bn_backward_eval(&shape, &t, &hw);
        assert_eq!(s.part2.dram_bits(), 6400);
        assert_eq!(s.part2.op_total(), 336);
        assert_eq!(s.part2.vmem_bits, 32256);
        assert_eq!(s.part2.compute_cycles, 98);
        assert_eq!(s.part2.stall_cycles, 50);
        // part 1: 5 ops per element over 64 elements
        assert_eq!(s.part1.op_total(), 320);
        assert_eq!(s.part1.dram_bits(), (4 * 8 + 3 * 64) * 32);
    }

    #[test]
    fn bn_backward_profile_matches_closed_form() {
        let hw = test_hw(4, 4);
        let shape = SimdShape::new(3, 5, 2, 11).unwrap();
        let t = full_tiling(SimdTile { h: 2, w: 5, n: 1, c: 4 }, 4);
        let p = profile_for(LayerKind::BnBackward, &shape).unwrap();
        let closed = bn_backward_eval(&shape, &t, &hw);
        assert_eq!(simd_part_eval(&p, &t, &hw, 1), closed.part1);
        assert_eq!(simd_part_eval(&p, &t, &hw, 2), closed.part2);
        assert_eq!(simd_generic_eval(&p, &t, &hw), closed.total);
    }

    #[test]
    fn relu_forward_example() {
        let hw = test_hw(4, 4);
        let shape = SimdShape::new(2, 2, 1, 4).unwrap();
        let p = profile_for(LayerKind::ReLU, &shape).unwrap();
        let s = simd_generic_eval(&p, &full_tiling(p.space, 4), &hw);
        assert_eq!(s.op_counts.max, 16);
        assert_eq!(s.dram_bits.total(), 16 * 64);
        assert_eq!(s.compute_cycles, 4 + hw.pso_simd());
    }

    #[test]
    fn maxpool_counts_compares_and_mask() {
        let hw = test_hw(4, 4);
        let window = PoolWindow {
            mode: PoolMode::Max,
            rh: 2,
            rw: 2,
            stride: 2,
            pad: 0,
        };
        let shape = SimdShape::pooled(4, 4, 1, 4, window).unwrap();
        let p = profile_for(LayerKind::MaxPool, &shape).unwrap();
        assert_eq!(p.space, SimdTile { h: 2, w: 2, n: 1, c: 4 });
        let s = simd_generic_eval(&p, &full_tiling(p.space, 4), &hw);
        assert_eq!(s.op_counts.max, 48);
        // y and mask, 16 elements each
        assert_eq!(s.dram_bits.simd_out, 2 * 16 * 32);
        assert_eq!(s.dram_bits.simd_in, 64 * 32);
    }

    #[test]
    fn param_update_is_mul_sub() {
        let hw = test_hw(4, 4);
        let shape = SimdShape::new(1, 1, 1, 10).unwrap();
        let p = profile_for(LayerKind::ParamUpdate, &shape).unwrap();
        let s = simd_generic_eval(&p, &full_tiling(p.space, 4), &hw);
        assert_eq!((s.op_counts.mul, s.op_counts.sub), (10, 10));
        assert_eq!(s.dram_bits.simd_in, 2 * 10 * 32);
        assert_eq!(s.dram_bits.simd_out, 10 * 32);
        // p is loaded and stored through one slot
        assert_eq!(p.resident().len(), 2);
    }

    #[test]
    fn bn_backward_resident_set_has_eight_tensors() {
        let shape = SimdShape::new(2, 2, 2, 8).unwrap();
        let p = profile_for(LayerKind::BnBackward, &shape).unwrap();
        assert_eq!(p.resident().len(), 8);
    }

    #[test]
    fn conv_kinds_have_no_profile() {
        let shape = SimdShape::new(1, 1, 1, 1).unwrap();
        assert!(profile_for(LayerKind::Conv, &shape).is_none());
    }
}
