//! Report files: `report.json`, `layers.csv` and the DSE/sensitivity tables.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use accelsim_core::conv::{Conventions, Variant};
use accelsim_core::energy::EnergyReport;
use accelsim_core::explorer::{DsePoint, Param, SensitivityRow};
use accelsim_core::network::Mode;
use accelsim_core::{LayerRecord, NetworkStats};
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

impl InputFile {
    pub fn hash(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("failed to read {}", path.display()))?;
        Ok(InputFile {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub mode: Mode,
    pub variant: Variant,
    pub conventions: Conventions,
    /// Batch override applied to every layer, if any.
    pub batch: Option<u64>,
    /// Keyed by role: `hw`, `net`, `energy`.
    pub inputs: BTreeMap<String, InputFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub metadata: Metadata,
    /// Per-layer statistics in execution order plus network totals.
    pub stats: NetworkStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergyReport>,
}

impl RunReport {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("failed to read {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("{}: not a run report", path.display()))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("failed to write {}", path.display()))
}

pub const LAYER_COLUMNS: [&str; 23] = [
    "layer",
    "kind",
    "executed_on",
    "compute_cycles",
    "stall_cycles",
    "total_cycles",
    "dram_weight_bits",
    "dram_bias_bits",
    "dram_ifmap_bits",
    "dram_psum_ofmap_bits",
    "dram_simd_in_bits",
    "dram_simd_out_bits",
    "sram_wbuf_bits",
    "sram_ibuf_bits",
    "sram_obuf_bits",
    "sram_bbuf_bits",
    "sram_vmem_bits",
    "op_mac",
    "op_add",
    "op_sub",
    "op_mul",
    "op_div",
    "op_max",
];

fn layer_row(rec: &LayerRecord) -> Vec<String> {
    let s = &rec.stats;
    let (d, m, o) = (&s.dram_bits, &s.sram_bits, &s.op_counts);
    let mut row = vec![
        rec.name.clone(),
        rec.kind.name().to_string(),
        format!("{:?}", s.executed_on),
    ];
    row.extend(
        [
            s.compute_cycles,
            s.stall_cycles,
            s.total_cycles,
            d.weight,
            d.bias,
            d.ifmap,
            d.psum_ofmap,
            d.simd_in,
            d.simd_out,
            m.wbuf,
            m.ibuf,
            m.obuf,
            m.bbuf,
            m.vmem,
            o.mac,
            o.add,
            o.sub,
            o.mul,
            o.div,
            o.max,
        ]
        .map(|v| v.to_string()),
    );
    row
}

pub fn write_layers_csv(path: &Path, stats: &NetworkStats) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("failed to write {}", path.display()))?;
    w.write_record(LAYER_COLUMNS)?;
    for rec in &stats.layers {
        w.write_record(layer_row(rec))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dse_csv(path: &Path, points: &[DsePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("failed to write {}", path.display()))?;
    let mut header: Vec<&str> = Param::ALL.iter().map(|p| p.name()).collect();
    header.extend(["sram_bytes", "bandwidth", "metric", "feasible", "status"]);
    w.write_record(&header)?;
    for p in points {
        let mut row: Vec<String> = p.params.iter().map(u64::to_string).collect();
        row.push(p.sram_bytes().to_string());
        row.push(p.bandwidth().to_string());
        row.push(p.metric.map_or(String::new(), |m| m.to_string()));
        row.push(p.feasible().to_string());
        row.push(format!("{:?}", p.status));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sensitivity_csv(path: &Path, param: Param, rows: &[SensitivityRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("failed to write {}", path.display()))?;
    w.write_record([param.name(), "metric", "normalized"])?;
    for r in rows {
        w.write_record([r.value.to_string(), r.metric.to_string(), format!("{:.6}", r.normalized)])?;
    }
    w.flush()?;
    Ok(())
}
