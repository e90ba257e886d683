//! Closed-form models for convolution and FC layers on the systolic array.
//!
//! Loop order is weight-stationary: `oc` outermost, then `kh, kw, ic`, with
//! `oh, ow, n` innermost. Weights are loaded once, ifmap tiles are reloaded for
//! every outer tile, and partial sums make a DRAM round trip for every
//! accumulation step along `kh, kw, ic` after the first.

use serde::{Deserialize, Serialize};

use crate::ceil_div;
use crate::specs::*;

/// Outer (`m`) and inner (`r`) multipliers with their products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvMultipliers {
    pub outer: ConvTile,
    pub inner: ConvTile,
    /// Outer tiles that load a new weight tile: `m_kh m_kw m_ic m_oc`.
    pub m_w_tile: u64,
    /// All outer tiles; also the ifmap tile multiplier.
    pub m_outer: u64,
    /// Psum tile transfers: `m_oh m_ow m_n m_oc (2 m_kh m_kw m_ic - 1)`.
    pub m_p_tile: u64,
    pub m_inner: u64,
}

impl ConvMultipliers {
    pub fn new(shape: &ConvShape, tiling: &ConvTiling) -> Self {
        let full = ConvTile::full(shape);
        let (mut outer, mut inner) = (ConvTile::ones(), ConvTile::ones());
        for d in ConvTile::DIMS {
            outer.set(d, ceil_div(full.get(d), tiling.outer.get(d)));
            inner.set(d, ceil_div(tiling.outer.get(d), tiling.inner.get(d)));
        }
        let prod = |t: &ConvTile| ConvTile::DIMS.iter().map(|&d| t.get(d)).product::<u64>();
        let m = &outer;
        ConvMultipliers {
            outer,
            inner,
            m_w_tile: m.kh * m.kw * m.ic * m.oc,
            m_outer: prod(&outer),
            m_p_tile: m.oh * m.ow * m.n * m.oc * (2 * m.kh * m.kw * m.ic - 1),
            m_inner: prod(&inner),
        }
    }

    /// Outer tiles that produce a distinct ofmap region: `m_oh m_ow m_n m_oc`.
    pub fn output_tiles(&self) -> u64 {
        let m = &self.outer;
        m.oh * m.ow * m.n * m.oc
    }
}

/// Outer tile volumes in elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileVolumes {
    pub weight: u64,
    pub ifmap: u64,
    pub psum: u64,
    pub bias: u64,
}

impl TileVolumes {
    pub fn new(shape: &ConvShape, t: &ConvTile) -> Self {
        TileVolumes {
            weight: t.kh * t.kw * t.ic * t.oc,
            ifmap: t.ih(shape.stride) * t.iw(shape.stride) * t.n * t.ic,
            psum: t.oh * t.ow * t.n * t.oc,
            bias: if shape.has_bias { t.oc } else { 0 },
        }
    }
}

pub fn conv_dram_accesses(shape: &ConvShape, tiling: &ConvTiling, hw: &HardwareConfig) -> DramBits {
    let m = ConvMultipliers::new(shape, tiling);
    let v = TileVolumes::new(shape, &tiling.outer);
    DramBits {
        weight: v.weight * m.m_w_tile * hw.bits_weight,
        ifmap: v.ifmap * m.m_outer * hw.bits_ifmap,
        psum_ofmap: v.psum * m.m_p_tile * hw.bits_psum,
        bias: v.bias * m.outer.oc * hw.bits_bias,
        ..DramBits::default()
    }
}

pub fn conv_sram_accesses(shape: &ConvShape, tiling: &ConvTiling, hw: &HardwareConfig) -> SramBits {
    let m = ConvMultipliers::new(shape, tiling);
    let i = &tiling.inner;
    let steps = m.m_inner * m.m_outer;
    let ofmap = shape.ofmap_elems();
    SramBits {
        wbuf: i.kh * i.kw * i.ic * i.oc * steps * hw.bits_weight,
        ibuf: i.ih(shape.stride) * i.iw(shape.stride) * i.n * i.ic * steps * hw.bits_ifmap,
        obuf: (i.oh * i.ow * i.n * i.oc * 2 * steps - ofmap) * hw.bits_psum,
        bbuf: if shape.has_bias { ofmap * hw.bits_bias } else { 0 },
        vmem: 0,
    }
}

/// Compute cycles of one outer tile, excluding pipeline setup.
pub fn conv_tile_cycles(tile: &ConvTile, hw: &HardwareConfig) -> u64 {
    tile.oh * tile.ow * tile.n * tile.kh * tile.kw * ceil_div(tile.ic, hw.pe_rows) * ceil_div(tile.oc, hw.pe_cols)
}

pub fn conv_compute_cycles(shape: &ConvShape, tiling: &ConvTiling, hw: &HardwareConfig) -> u64 {
    let m = ConvMultipliers::new(shape, tiling);
    (conv_tile_cycles(&tiling.outer, hw) + hw.pso_sa()) * m.m_outer
}

/// Load/store pattern of a tile segment, indexed by (weight+bias, weight, psum load).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StallCase {
    Case1,
    Case2,
    Case4,
    Case5,
}

impl StallCase {
    pub const ALL: [StallCase; 4] = [StallCase::Case1, StallCase::Case2, StallCase::Case4, StallCase::Case5];

    pub fn number(self) -> u8 {
        match self {
            StallCase::Case1 => 1,
            StallCase::Case2 => 2,
            StallCase::Case4 => 4,
            StallCase::Case5 => 5,
        }
    }

    /// Case number for an arbitrary flag combination; only 1, 2, 4, 5 can occur.
    pub fn number_from_flags(weight_bias: bool, weight: bool, psum_load: bool) -> u8 {
        1 + 4 * weight_bias as u8 + 2 * weight as u8 + psum_load as u8
    }

    pub fn from_number(n: u8) -> Option<StallCase> {
        StallCase::ALL.into_iter().find(|c| c.number() == n)
    }

    pub fn loads_weight(self) -> bool {
        matches!(self, StallCase::Case4 | StallCase::Case5)
    }

    pub fn loads_bias(self) -> bool {
        self == StallCase::Case5
    }

    pub fn loads_psum(self) -> bool {
        matches!(self, StallCase::Case2 | StallCase::Case4)
    }
}

/// Bits crossing each DRAM interface during one tile segment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentBits {
    /// Shared weight/bias interface.
    pub w: u64,
    pub i: u64,
    /// Psum store, plus the psum load when accumulating.
    pub o: u64,
}

impl SegmentBits {
    pub fn for_case(case: StallCase, shape: &ConvShape, tile: &ConvTile, hw: &HardwareConfig) -> Self {
        let v = TileVolumes::new(shape, tile);
        let mut w = 0;
        if case.loads_weight() {
            w += v.weight * hw.bits_weight;
        }
        if case.loads_bias() {
            w += v.bias * hw.bits_bias;
        }
        let psum = v.psum * hw.bits_psum;
        SegmentBits {
            w,
            i: v.ifmap * hw.bits_ifmap,
            o: if case.loads_psum() { 2 * psum } else { psum },
        }
    }

    pub fn transfer_cycles(&self, hw: &HardwareConfig) -> [u64; 3] {
        [
            ceil_div(self.w, hw.bw_w),
            ceil_div(self.i, hw.bw_i),
            ceil_div(self.o, hw.bw_o),
        ]
    }
}

/// Modelling conventions shared by the closed forms and the oracle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conventions {
    /// Charge the first tile's loads before any compute and the last tile's
    /// store after it.
    pub prologue_epilogue: bool,
}

/// Cycles before the first tile can start: its weight/bias and ifmap loads.
pub fn conv_prologue(shape: &ConvShape, tile: &ConvTile, hw: &HardwareConfig) -> u64 {
    let b = SegmentBits::for_case(StallCase::Case5, shape, tile, hw);
    let [w, i, _] = b.transfer_cycles(hw);
    w.max(i)
}

/// Cycles after the last tile for its psum store.
pub fn conv_epilogue(shape: &ConvShape, tile: &ConvTile, hw: &HardwareConfig) -> u64 {
    ceil_div(TileVolumes::new(shape, tile).psum * hw.bits_psum, hw.bw_o)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseStall {
    pub case: StallCase,
    pub occurrences: u64,
    /// Segment length without pipeline setup: max of compute and the three transfers.
    pub busy_per_tile: u64,
    pub stall_per_tile: u64,
    pub subtotal: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StallCaseBreakdown {
    pub cases: Vec<CaseStall>,
    pub prologue: u64,
    pub epilogue: u64,
    pub total: u64,
}

impl StallCaseBreakdown {
    pub fn occurrences(&self, case: StallCase) -> u64 {
        self.cases.iter().find(|c| c.case == case).map_or(0, |c| c.occurrences)
    }
}

/// Occurrence count of each case. Signed so callers can check non-negativity.
pub fn case_occurrences(m: &ConvMultipliers) -> [(StallCase, i128); 4] {
    let m_outer = m.m_outer as i128;
    let o5 = m.outer.oc as i128;
    let o4 = m.m_w_tile as i128 - o5;
    let psum_loads = m_outer - m.output_tiles() as i128;
    let o2 = psum_loads - o4;
    let o1 = m_outer - o2 - o4 - o5;
    [
        (StallCase::Case1, o1),
        (StallCase::Case2, o2),
        (StallCase::Case4, o4),
        (StallCase::Case5, o5),
    ]
}

pub fn conv_stall_cycles(
    shape: &ConvShape,
    tiling: &ConvTiling,
    hw: &HardwareConfig,
    conv: Conventions,
) -> StallCaseBreakdown {
    let m = ConvMultipliers::new(shape, tiling);
    let c_tile = conv_tile_cycles(&tiling.outer, hw);
    let cases: Vec<CaseStall> = case_occurrences(&m)
        .into_iter()
        .map(|(case, o)| {
            let occurrences = u64::try_from(o).expect("occurrence counts are non-negative");
            let transfers = SegmentBits::for_case(case, shape, &tiling.outer, hw).transfer_cycles(hw);
            let busy = transfers.into_iter().fold(c_tile, u64::max);
            CaseStall {
                case,
                occurrences,
                busy_per_tile: busy,
                stall_per_tile: busy - c_tile,
                subtotal: (busy - c_tile) * occurrences,
            }
        })
        .collect();
    let (prologue, epilogue) = if conv.prologue_epilogue {
        (
            conv_prologue(shape, &tiling.outer, hw),
            conv_epilogue(shape, &tiling.outer, hw),
        )
    } else {
        (0, 0)
    };
    let total = cases.iter().map(|c| c.subtotal).sum::<u64>() + prologue + epilogue;
    StallCaseBreakdown {
        cases,
        prologue,
        epilogue,
        total,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Tile-level stall model.
    #[default]
    Full,
    /// Compute cycles only.
    NoStall,
    /// Whole-layer maximum of compute and per-interface transfer time.
    Simplified,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoStall => "nostall",
            Variant::Simplified => "simplified",
        }
    }
}

pub fn conv_op_counts(shape: &ConvShape) -> OpCounts {
    OpCounts {
        mac: shape.macs(),
        add: if shape.has_bias { shape.ofmap_elems() } else { 0 },
        ..OpCounts::default()
    }
}

pub fn conv_eval(
    shape: &ConvShape,
    tiling: &ConvTiling,
    hw: &HardwareConfig,
    variant: Variant,
    conv: Conventions,
) -> LayerStats {
    let dram = conv_dram_accesses(shape, tiling, hw);
    let sram = conv_sram_accesses(shape, tiling, hw);
    let compute = conv_compute_cycles(shape, tiling, hw);
    let stall = match variant {
        Variant::Full => conv_stall_cycles(shape, tiling, hw, conv).total,
        Variant::NoStall => 0,
        Variant::Simplified => {
            let total = compute
                .max(ceil_div(dram.weight + dram.bias, hw.bw_w))
                .max(ceil_div(dram.ifmap, hw.bw_i))
                .max(ceil_div(dram.psum_ofmap, hw.bw_o));
            total - compute
        }
    };
    LayerStats::new(ExecUnit::SA, compute, stall, dram, sram, conv_op_counts(shape))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specs::test_hw;

    fn example() -> (ConvShape, ConvTiling, HardwareConfig) {
        let shape = ConvShape::new(1, 8, 8, 4, 8, 3, 3, 1, 0, 0, true).unwrap();
        let outer = ConvTile {
            oh: 6,
            ow: 6,
            n: 1,
            kh: 3,
            kw: 3,
            ic: 4,
            oc: 4,
        };
        (shape, ConvTiling::from_outer(outer, 4, 4), test_hw(4, 4))
    }

    #[test]
    fn example_dram_bits() {
        let (s, t, hw) = example();
        let d = conv_dram_accesses(&s, &t, &hw);
        assert_eq!((d.weight, d.ifmap, d.psum_ofmap, d.bias), (4608, 8192, 9216, 256));
    }

    #[test]
    fn example_sram_bits() {
        let (s, t, hw) = example();
        let m = ConvMultipliers::new(&s, &t);
        assert_eq!((m.m_inner, m.m_outer), (324, 2));
        let b = conv_sram_accesses(&s, &t, &hw);
        assert_eq!((b.wbuf, b.ibuf, b.obuf, b.bbuf), (165888, 41472, 156672, 9216));
    }

    #[test]
    fn example_cycles() {
        let (s, t, mut hw) = example();
        assert_eq!(conv_tile_cycles(&t.outer, &hw), 324);
        assert_eq!(conv_compute_cycles(&s, &t, &hw), 660);
        let b = conv_stall_cycles(&s, &t, &hw, Conventions::default());
        assert_eq!(b.occurrences(StallCase::Case5), 2);
        assert_eq!(b.total, 0);
        let case5 = b.cases.iter().find(|c| c.case == StallCase::Case5).unwrap();
        let bits = SegmentBits::for_case(StallCase::Case5, &s, &t.outer, &hw);
        assert_eq!(bits.transfer_cycles(&hw), [19, 32, 36]);
        assert_eq!(case5.busy_per_tile, 324);

        hw.bw_i = 8;
        let b = conv_stall_cycles(&s, &t, &hw, Conventions::default());
        assert_eq!(b.cases.iter().find(|c| c.case == StallCase::Case5).unwrap().stall_per_tile, 188);
        assert_eq!(b.total, 376);
        let total = |v| conv_eval(&s, &t, &hw, v, Conventions::default()).total_cycles;
        assert_eq!(total(Variant::NoStall), 660);
        assert_eq!(total(Variant::Simplified), 1024);
        assert_eq!(total(Variant::Full), 1036);
    }

    #[test]
    fn example_macs() {
        let (s, t, hw) = example();
        let st = conv_eval(&s, &t, &hw, Variant::Full, Conventions::default());
        assert_eq!(st.op_counts.mac, 10368);
        assert_eq!(st.op_counts.add, 288);
        assert_eq!(st.executed_on, ExecUnit::SA);
    }

    #[test]
    fn single_pass_accumulation_stores_psum_once() {
        let (s, _, hw) = example();
        let t = ConvTiling::from_outer(ConvTile { oh: 2, ow: 3, oc: 2, ..ConvTile::full(&s) }, 4, 4);
        let d = conv_dram_accesses(&s, &t, &hw);
        assert_eq!(d.psum_ofmap, s.ofmap_elems() * hw.bits_psum);
    }

    #[test]
    fn single_tile_reads_ifmap_once() {
        let (s, _, hw) = example();
        let t = ConvTiling::from_outer(ConvTile::full(&s), 4, 4);
        assert_eq!(conv_dram_accesses(&s, &t, &hw).ifmap, 8 * 8 * 4 * 16);
    }

    #[test]
    fn degenerate_unit_conv() {
        let hw = test_hw(4, 4);
        let s = ConvShape::new(1, 1, 1, 1, 1, 1, 1, 1, 0, 0, false).unwrap();
        let t = ConvTiling::from_outer(ConvTile::ones(), 4, 4);
        let b = conv_sram_accesses(&s, &t, &hw);
        assert_eq!((b.wbuf, b.obuf), (16, 32));
    }

    #[test]
    fn kernel_split_produces_every_case() {
        let mut hw = test_hw(4, 4);
        hw.bw_o = 16;
        let s = ConvShape::new(2, 8, 8, 4, 8, 3, 3, 1, 0, 0, true).unwrap();
        let t = ConvTiling::from_outer(
            ConvTile {
                oh: 3,
                ow: 6,
                n: 1,
                kh: 2,
                kw: 3,
                ic: 2,
                oc: 4,
            },
            4,
            4,
        );
        let m = ConvMultipliers::new(&s, &t);
        let occ = case_occurrences(&m);
        assert!(occ.iter().all(|&(_, o)| o > 0), "{occ:?}");
        assert_eq!(occ.iter().map(|&(_, o)| o).sum::<i128>(), m.m_outer as i128);
        let full = conv_eval(&s, &t, &hw, Variant::Full, Conventions::default()).total_cycles;
        let simple = conv_eval(&s, &t, &hw, Variant::Simplified, Conventions::default()).total_cycles;
        assert!(simple <= full);
    }

    #[test]
    fn prologue_and_epilogue_add_to_stall() {
        let (s, t, hw) = example();
        let with = conv_stall_cycles(&s, &t, &hw, Conventions { prologue_epilogue: true });
        assert_eq!((with.prologue, with.epilogue), (32, 36));
        assert_eq!(with.total, 68);
    }

    #[test]
    fn invalid_case_numbers() {
        assert_eq!(StallCase::number_from_flags(false, true, false), 3);
        assert_eq!(StallCase::number_from_flags(true, false, true), 6);
        assert_eq!(StallCase::number_from_flags(true, true, true), 8);
        assert_eq!(StallCase::from_number(3), None);
        assert_eq!(StallCase::from_number(4), Some(StallCase::Case4));
    }
}
