use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use super::hardware::{Buffer, OpKind};

/// Off-chip traffic in bits, by datatype.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DramBits {
    pub weight: u64,
    pub ifmap: u64,
    pub psum_ofmap: u64,
    pub bias: u64,
    pub simd_in: u64,
    pub simd_out: u64,
}

impl DramBits {
    pub fn total(&self) -> u64 {
        self.weight + self.ifmap + self.psum_ofmap + self.bias + self.simd_in + self.simd_out
    }
}

impl AddAssign for DramBits {
    fn add_assign(&mut self, o: Self) {
        self.weight += o.weight;
        self.ifmap += o.ifmap;
        self.psum_ofmap += o.psum_ofmap;
        self.bias += o.bias;
        self.simd_in += o.simd_in;
        self.simd_out += o.simd_out;
    }
}

/// On-chip traffic in bits, by buffer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SramBits {
    pub wbuf: u64,
    pub ibuf: u64,
    pub obuf: u64,
    pub bbuf: u64,
    pub vmem: u64,
}

impl SramBits {
    pub fn get(&self, buffer: Buffer) -> u64 {
        match buffer {
            Buffer::WBuf => self.wbuf,
            Buffer::IBuf => self.ibuf,
            Buffer::OBuf => self.obuf,
            Buffer::BBuf => self.bbuf,
            Buffer::VMem => self.vmem,
        }
    }

    pub fn total(&self) -> u64 {
        self.wbuf + self.ibuf + self.obuf + self.bbuf + self.vmem
    }
}

impl AddAssign for SramBits {
    fn add_assign(&mut self, o: Self) {
        self.wbuf += o.wbuf;
        self.ibuf += o.ibuf;
        self.obuf += o.obuf;
        self.bbuf += o.bbuf;
        self.vmem += o.vmem;
    }
}

/// Arithmetic operation counts. `mac` counts systolic-array MACs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub mac: u64,
    pub add: u64,
    pub sub: u64,
    pub mul: u64,
    pub div: u64,
    pub max: u64,
}

impl OpCounts {
    pub fn get(&self, op: OpKind) -> u64 {
        match op {
            OpKind::Add => self.add,
            OpKind::Sub => self.sub,
            OpKind::Mul => self.mul,
            OpKind::Div => self.div,
            OpKind::Max => self.max,
        }
    }

    pub fn add_op(&mut self, op: OpKind, count: u64) {
        match op {
            OpKind::Add => self.add += count,
            OpKind::Sub => self.sub += count,
            OpKind::Mul => self.mul += count,
            OpKind::Div => self.div += count,
            OpKind::Max => self.max += count,
        }
    }

    /// Element-wise SIMD operations (excludes MACs).
    pub fn simd_total(&self) -> u64 {
        self.add + self.sub + self.mul + self.div + self.max
    }
}

impl AddAssign for OpCounts {
    fn add_assign(&mut self, o: Self) {
        self.mac += o.mac;
        self.add += o.add;
        self.sub += o.sub;
        self.mul += o.mul;
        self.div += o.div;
        self.max += o.max;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExecUnit {
    SA,
    SIMD,
}

/// Performance statistics of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerStats {
    pub compute_cycles: u64,
    pub stall_cycles: u64,
    pub total_cycles: u64,
    pub dram_bits: DramBits,
    pub sram_bits: SramBits,
    pub op_counts: OpCounts,
    pub executed_on: ExecUnit,
}

impl LayerStats {
    pub fn new(
        executed_on: ExecUnit,
        compute_cycles: u64,
        stall_cycles: u64,
        dram_bits: DramBits,
        sram_bits: SramBits,
        op_counts: OpCounts,
    ) -> Self {
        LayerStats {
            compute_cycles,
            stall_cycles,
            total_cycles: compute_cycles + stall_cycles,
            dram_bits,
            sram_bits,
            op_counts,
            executed_on,
        }
    }
}

/// A layer's statistics together with its identity in the network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub name: String,
    pub kind: super::LayerKind,
    pub stats: LayerStats,
}

/// Per-layer results plus network aggregates; layers run strictly one after another.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkStats {
    pub layers: Vec<LayerRecord>,
    /// Cycles the systolic array spends computing.
    pub c_sa: u64,
    /// Cycles the SIMD array spends computing.
    pub c_simd: u64,
    /// End-to-end cycles (compute + stall, all layers).
    pub l_total: u64,
    /// Total cycles (compute + stall) of layers run on each unit.
    pub sa_cycles: u64,
    pub simd_cycles: u64,
    pub a_d_total: u64,
    pub dram_bits: DramBits,
    pub sram_bits: SramBits,
    pub op_counts: OpCounts,
}

impl NetworkStats {
    pub fn from_layers(layers: Vec<LayerRecord>) -> Self {
        let mut s = NetworkStats::default();
        for rec in &layers {
            let st = &rec.stats;
            match st.executed_on {
                ExecUnit::SA => {
                    s.c_sa += st.compute_cycles;
                    s.sa_cycles += st.total_cycles;
                }
                ExecUnit::SIMD => {
                    s.c_simd += st.compute_cycles;
                    s.simd_cycles += st.total_cycles;
                }
            }
            s.l_total += st.total_cycles;
            s.dram_bits += st.dram_bits;
            s.sram_bits += st.sram_bits;
            s.op_counts += st.op_counts;
        }
        s.a_d_total = s.dram_bits.total();
        s.layers = layers;
        s
    }

    /// Fraction of end-to-end cycles spent in SIMD (non-convolution) layers.
    pub fn non_conv_runtime_share(&self) -> f64 {
        if self.l_total == 0 {
            0.0
        } else {
            self.simd_cycles as f64 / self.l_total as f64
        }
    }
}
