//! Energy, average power and runtime from network statistics and a backend
//! power characterization.
//!
//! Leakage of both cores accrues over the whole run; dynamic power only while a
//! core computes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specs::*;

/// Per-bit access energy of each on-chip buffer, in joules.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferEnergy {
    pub wbuf: f64,
    pub ibuf: f64,
    pub obuf: f64,
    pub bbuf: f64,
    pub vmem: f64,
}

impl BufferEnergy {
    pub fn get(&self, buffer: Buffer) -> f64 {
        match buffer {
            Buffer::WBuf => self.wbuf,
            Buffer::IBuf => self.ibuf,
            Buffer::OBuf => self.obuf,
            Buffer::BBuf => self.bbuf,
            Buffer::VMem => self.vmem,
        }
    }
}

/// Backend power numbers in SI units: watts, joules per bit, seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendCharacterization {
    pub p_sa_dyn: f64,
    pub p_sa_leak: f64,
    pub p_simd_dyn: f64,
    pub p_simd_leak: f64,
    pub e_buff: BufferEnergy,
    pub e_dram: f64,
    pub t_clk: f64,
    /// Free-form provenance note.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl BackendCharacterization {
    pub fn validate(&self, location: &str) -> Result<()> {
        let fields = [
            ("p_sa_dyn", self.p_sa_dyn),
            ("p_sa_leak", self.p_sa_leak),
            ("p_simd_dyn", self.p_simd_dyn),
            ("p_simd_leak", self.p_simd_leak),
            ("e_buff.wbuf", self.e_buff.wbuf),
            ("e_buff.ibuf", self.e_buff.ibuf),
            ("e_buff.obuf", self.e_buff.obuf),
            ("e_buff.bbuf", self.e_buff.bbuf),
            ("e_buff.vmem", self.e_buff.vmem),
            ("e_dram", self.e_dram),
            ("t_clk", self.t_clk),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(location, format!("{name} must be a non-negative number")));
            }
        }
        if self.t_clk <= 0.0 {
            return Err(Error::invalid(location, "t_clk must be positive"));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str, location: &str) -> Result<Self> {
        let bc: BackendCharacterization = serde_json::from_str(text).map_err(|source| Error::Parse {
            location: location.to_string(),
            source,
        })?;
        bc.validate(location)?;
        Ok(bc)
    }
}

pub fn load_backend(path: impl AsRef<Path>) -> Result<BackendCharacterization> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    BackendCharacterization::from_json_str(&text, &path.display().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub e_sa: f64,
    pub e_simd: f64,
    /// Per-buffer SRAM energy.
    pub e_sram_buffers: BufferEnergy,
    pub e_sram: f64,
    pub e_dram: f64,
    pub e_total: f64,
    pub p_avg: f64,
    pub runtime: f64,
}

pub fn compute_energy(stats: &NetworkStats, bc: &BackendCharacterization) -> EnergyReport {
    let l = stats.l_total as f64;
    let e_sa = (stats.c_sa as f64 * bc.p_sa_dyn + l * bc.p_sa_leak) * bc.t_clk;
    let e_simd = (stats.c_simd as f64 * bc.p_simd_dyn + l * bc.p_simd_leak) * bc.t_clk;
    let buf = |b: Buffer| stats.sram_bits.get(b) as f64 * bc.e_buff.get(b);
    let e_sram_buffers = BufferEnergy {
        wbuf: buf(Buffer::WBuf),
        ibuf: buf(Buffer::IBuf),
        obuf: buf(Buffer::OBuf),
        bbuf: buf(Buffer::BBuf),
        vmem: buf(Buffer::VMem),
    };
    let e_sram = Buffer::ALL.iter().map(|&b| e_sram_buffers.get(b)).sum::<f64>();
    let e_dram = stats.a_d_total as f64 * bc.e_dram;
    let e_total = e_sa + e_simd + e_sram + e_dram;
    let runtime = l * bc.t_clk;
    EnergyReport {
        e_sa,
        e_simd,
        e_sram_buffers,
        e_sram,
        e_dram,
        e_total,
        p_avg: if runtime > 0.0 { e_total / runtime } else { 0.0 },
        runtime,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero() -> BackendCharacterization {
        BackendCharacterization {
            p_sa_dyn: 0.0,
            p_sa_leak: 0.0,
            p_simd_dyn: 0.0,
            p_simd_leak: 0.0,
            e_buff: BufferEnergy::default(),
            e_dram: 0.0,
            t_clk: 1e-9,
            note: None,
        }
    }

    fn stats() -> NetworkStats {
        NetworkStats {
            c_sa: 660,
            l_total: 1000,
            ..NetworkStats::default()
        }
    }

    #[test]
    fn single_term() {
        let bc = BackendCharacterization { p_sa_dyn: 1.0, ..zero() };
        let r = compute_energy(&stats(), &bc);
        assert!((r.e_total - 660e-9).abs() < 1e-18);
        assert!((r.p_avg - r.e_total / (1000.0 * 1e-9)).abs() < 1e-12);
    }

    #[test]
    fn all_zero() {
        let r = compute_energy(&NetworkStats::default(), &zero());
        assert_eq!((r.e_total, r.p_avg), (0.0, 0.0));
    }

    #[test]
    fn dram_energy_is_linear() {
        let mut s = stats();
        s.a_d_total = 1 << 20;
        let a = compute_energy(&s, &BackendCharacterization { e_dram: 1e-12, p_sa_dyn: 0.5, ..zero() });
        let b = compute_energy(&s, &BackendCharacterization { e_dram: 2e-12, p_sa_dyn: 0.5, ..zero() });
        assert_eq!(b.e_dram, 2.0 * a.e_dram);
        assert_eq!((a.e_sa, a.e_simd, a.e_sram), (b.e_sa, b.e_simd, b.e_sram));
    }

    #[test]
    fn rejects_negative_and_zero_clock() {
        let text = serde_json::to_string(&BackendCharacterization { e_dram: -1.0, ..zero() }).unwrap();
        let err = BackendCharacterization::from_json_str(&text, "bc").unwrap_err();
        assert!(err.to_string().contains("e_dram"));
        let text = serde_json::to_string(&BackendCharacterization { t_clk: 0.0, ..zero() }).unwrap();
        assert!(BackendCharacterization::from_json_str(&text, "bc").is_err());
    }
}
