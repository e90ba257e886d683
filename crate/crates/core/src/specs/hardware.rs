use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Arithmetic operation classes with distinct ALU latencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Div,
    /// Max and compare share one ALU path.
    Max,
}

impl OpKind {
    pub const ALL: [OpKind; 5] = [OpKind::Add, OpKind::Sub, OpKind::Mul, OpKind::Div, OpKind::Max];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::Max => "max",
        }
    }
}

/// Cycles one SIMD ALU needs per operation, by kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpLatency {
    pub add: u64,
    pub sub: u64,
    pub mul: u64,
    pub div: u64,
    pub max: u64,
}

impl OpLatency {
    pub fn of(&self, op: OpKind) -> u64 {
        match op {
            OpKind::Add => self.add,
            OpKind::Sub => self.sub,
            OpKind::Mul => self.mul,
            OpKind::Div => self.div,
            OpKind::Max => self.max,
        }
    }

    pub fn min(&self) -> u64 {
        OpKind::ALL.iter().map(|&op| self.of(op)).min().unwrap_or(1)
    }
}

impl Default for OpLatency {
    fn default() -> Self {
        OpLatency {
            add: 1,
            sub: 1,
            mul: 1,
            div: 4,
            max: 1,
        }
    }
}

/// On-chip SRAMs that are costed by the models.
///
/// The instruction memory is parsed but has no access model, so it is not listed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Buffer {
    WBuf,
    IBuf,
    OBuf,
    BBuf,
    VMem,
}

impl Buffer {
    pub const ALL: [Buffer; 5] = [Buffer::WBuf, Buffer::IBuf, Buffer::OBuf, Buffer::BBuf, Buffer::VMem];
}

impl fmt::Display for Buffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Buffer::WBuf => "WBuf",
            Buffer::IBuf => "IBuf",
            Buffer::OBuf => "OBuf",
            Buffer::BBuf => "BBuf",
            Buffer::VMem => "VMem",
        };
        f.write_str(s)
    }
}

/// Every parameter of the systolic array + SIMD platform.
///
/// Sizes are in bytes, bandwidths in bits per cycle, widths in bits per element.
/// The SIMD unit has `pe_cols` ALUs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareConfig {
    pub pe_rows: u64,
    pub pe_cols: u64,
    pub wbuf_bytes: u64,
    pub bbuf_bytes: u64,
    pub ibuf_bytes: u64,
    pub obuf_bytes: u64,
    pub vmem_bytes: u64,
    /// Stored for completeness; no model consumes it.
    pub imem_bytes: u64,
    pub bw_w: u64,
    pub bw_i: u64,
    pub bw_o: u64,
    pub bw_v: u64,
    pub bits_weight: u64,
    pub bits_bias: u64,
    pub bits_ifmap: u64,
    pub bits_psum: u64,
    pub bits_simd_in: u64,
    pub bits_simd_out: u64,
    pub op_latency: OpLatency,
}

impl HardwareConfig {
    pub fn from_json_str(text: &str, location: &str) -> Result<Self> {
        let hw: HardwareConfig = serde_json::from_str(text).map_err(|source| Error::Parse {
            location: location.to_string(),
            source,
        })?;
        hw.validate(location)?;
        Ok(hw)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("hardware config serializes")
    }

    pub fn validate(&self, location: &str) -> Result<()> {
        let fields = [
            ("pe_rows", self.pe_rows),
            ("pe_cols", self.pe_cols),
            ("wbuf_bytes", self.wbuf_bytes),
            ("bbuf_bytes", self.bbuf_bytes),
            ("ibuf_bytes", self.ibuf_bytes),
            ("obuf_bytes", self.obuf_bytes),
            ("vmem_bytes", self.vmem_bytes),
            ("imem_bytes", self.imem_bytes),
            ("bw_w", self.bw_w),
            ("bw_i", self.bw_i),
            ("bw_o", self.bw_o),
            ("bw_v", self.bw_v),
            ("bits_weight", self.bits_weight),
            ("bits_bias", self.bits_bias),
            ("bits_ifmap", self.bits_ifmap),
            ("bits_psum", self.bits_psum),
            ("bits_simd_in", self.bits_simd_in),
            ("bits_simd_out", self.bits_simd_out),
            ("op_latency.add", self.op_latency.add),
            ("op_latency.sub", self.op_latency.sub),
            ("op_latency.mul", self.op_latency.mul),
            ("op_latency.div", self.op_latency.div),
            ("op_latency.max", self.op_latency.max),
        ];
        for (name, value) in fields {
            if value == 0 {
                return Err(Error::invalid(location, format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Applies a layer's bit-width overrides.
    pub fn with_layer_bits(&self, bits: &crate::specs::LayerBits) -> HardwareConfig {
        let mut hw = self.clone();
        hw.bits_weight = bits.w.unwrap_or(hw.bits_weight);
        hw.bits_bias = bits.b.unwrap_or(hw.bits_bias);
        hw.bits_ifmap = bits.i.unwrap_or(hw.bits_ifmap);
        hw.bits_psum = bits.p.unwrap_or(hw.bits_psum);
        hw.bits_simd_in = bits.simd_in.unwrap_or(hw.bits_simd_in);
        hw.bits_simd_out = bits.simd_out.unwrap_or(hw.bits_simd_out);
        hw
    }

    /// SIMD ALU count.
    pub fn simd_lanes(&self) -> u64 {
        self.pe_cols
    }

    /// Capacity in bits usable by one outer tile.
    ///
    /// The systolic-array buffers are double-buffered, so a tile gets half of
    /// the SRAM; VMem is single-buffered.
    pub fn usable_bits(&self, buffer: Buffer) -> u64 {
        match buffer {
            Buffer::WBuf => self.wbuf_bytes * 8 / 2,
            Buffer::IBuf => self.ibuf_bytes * 8 / 2,
            Buffer::OBuf => self.obuf_bytes * 8 / 2,
            Buffer::BBuf => self.bbuf_bytes * 8 / 2,
            Buffer::VMem => self.vmem_bytes * 8,
        }
    }

    pub fn buffer_bytes(&self, buffer: Buffer) -> u64 {
        match buffer {
            Buffer::WBuf => self.wbuf_bytes,
            Buffer::IBuf => self.ibuf_bytes,
            Buffer::OBuf => self.obuf_bytes,
            Buffer::BBuf => self.bbuf_bytes,
            Buffer::VMem => self.vmem_bytes,
        }
    }

    /// Pipeline setup overhead of the systolic array per outer tile.
    pub fn pso_sa(&self) -> u64 {
        (self.pe_rows - 1) + (self.pe_cols - 1)
    }

    /// Pipeline setup overhead of the 6-stage SIMD pipeline per outer tile.
    pub fn pso_simd(&self) -> u64 {
        (6 - 1) + (self.pe_cols - 1)
    }
}

pub fn load_hardware_spec(path: impl AsRef<Path>) -> Result<HardwareConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    HardwareConfig::from_json_str(&text, &path.display().to_string())
}

#[cfg(test)]
pub(crate) fn test_hw(rows: u64, cols: u64) -> HardwareConfig {
    HardwareConfig {
        pe_rows: rows,
        pe_cols: cols,
        wbuf_bytes: 1 << 20,
        bbuf_bytes: 1 << 16,
        ibuf_bytes: 1 << 20,
        obuf_bytes: 1 << 20,
        vmem_bytes: 1 << 20,
        imem_bytes: 1 << 15,
        bw_w: 128,
        bw_i: 128,
        bw_o: 128,
        bw_v: 128,
        bits_weight: 16,
        bits_bias: 32,
        bits_ifmap: 16,
        bits_psum: 32,
        bits_simd_in: 32,
        bits_simd_out: 32,
        op_latency: OpLatency::default(),
    }
}
