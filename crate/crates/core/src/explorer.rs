//! Exhaustive design-space exploration over buffer sizes and DRAM bandwidths.
//!
//! Eight parameters are swept on fixed grids: the WBuf, IBuf, OBuf and VMem sizes
//! and the four interface bandwidths. A point is admissible when the sum of the
//! four sizes and the sum of the four bandwidths each lie within
//! `budget * (1 ± deviation)`, and feasible when in addition every layer can be
//! tiled. Layers run back to back, so the network cycle count splits exactly into
//! a systolic-array part that depends only on the SA buffers and interfaces and a
//! SIMD part that depends only on VMem and its interface; the SIMD part is
//! computed once per (VMem, BW_v) pair.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{evaluate_layers, SimOptions};
use crate::specs::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    WbufBytes,
    IbufBytes,
    ObufBytes,
    VmemBytes,
    BwW,
    BwI,
    BwO,
    BwV,
}

impl Param {
    pub const ALL: [Param; 8] = [
        Param::WbufBytes,
        Param::IbufBytes,
        Param::ObufBytes,
        Param::VmemBytes,
        Param::BwW,
        Param::BwI,
        Param::BwO,
        Param::BwV,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::WbufBytes => "wbuf_bytes",
            Param::IbufBytes => "ibuf_bytes",
            Param::ObufBytes => "obuf_bytes",
            Param::VmemBytes => "vmem_bytes",
            Param::BwW => "bw_w",
            Param::BwI => "bw_i",
            Param::BwO => "bw_o",
            Param::BwV => "bw_v",
        }
    }

    pub fn from_name(name: &str) -> Option<Param> {
        Param::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn is_size(self) -> bool {
        (self as usize) < 4
    }

    pub fn get(self, hw: &HardwareConfig) -> u64 {
        match self {
            Param::WbufBytes => hw.wbuf_bytes,
            Param::IbufBytes => hw.ibuf_bytes,
            Param::ObufBytes => hw.obuf_bytes,
            Param::VmemBytes => hw.vmem_bytes,
            Param::BwW => hw.bw_w,
            Param::BwI => hw.bw_i,
            Param::BwO => hw.bw_o,
            Param::BwV => hw.bw_v,
        }
    }

    pub fn set(self, hw: &mut HardwareConfig, v: u64) {
        match self {
            Param::WbufBytes => hw.wbuf_bytes = v,
            Param::IbufBytes => hw.ibuf_bytes = v,
            Param::ObufBytes => hw.obuf_bytes = v,
            Param::VmemBytes => hw.vmem_bytes = v,
            Param::BwW => hw.bw_w = v,
            Param::BwI => hw.bw_i = v,
            Param::BwO => hw.bw_o = v,
            Param::BwV => hw.bw_v = v,
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DseConfig {
    pub sram_budget_bytes: u64,
    pub bw_budget: u64,
    pub deviation: f64,
    /// Candidate values per parameter, in [`Param::ALL`] order. Sizes in bytes.
    pub grids: [Vec<u64>; 8],
}

impl DseConfig {
    /// Power-of-two grids: 32 kB to 2048 kB and 32 to 2048 bits per cycle.
    pub fn with_budgets(sram_budget_bytes: u64, bw_budget: u64) -> Self {
        let sizes: Vec<u64> = (5..=11).map(|e| (1u64 << e) * 1024).collect();
        let bws: Vec<u64> = (5..=11).map(|e| 1u64 << e).collect();
        DseConfig {
            sram_budget_bytes,
            bw_budget,
            deviation: 0.15,
            grids: std::array::from_fn(|i| if i < 4 { sizes.clone() } else { bws.clone() }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.deviation) {
            return Err(Error::invalid("dse config", "deviation must lie in [0, 1)"));
        }
        for (p, g) in Param::ALL.iter().zip(&self.grids) {
            if g.is_empty() || g.contains(&0) {
                return Err(Error::invalid("dse config", format!("grid for {p} must be non-empty and positive")));
            }
        }
        Ok(())
    }

    pub fn point_count(&self) -> usize {
        self.grids.iter().map(Vec::len).product()
    }

    fn in_window(&self, total: u64, budget: u64) -> bool {
        let (t, b) = (total as f64, budget as f64);
        t >= b * (1.0 - self.deviation) && t <= b * (1.0 + self.deviation)
    }

    pub fn sram_ok(&self, params: &[u64; 8]) -> bool {
        self.in_window(params[..4].iter().sum(), self.sram_budget_bytes)
    }

    pub fn bw_ok(&self, params: &[u64; 8]) -> bool {
        self.in_window(params[4..].iter().sum(), self.bw_budget)
    }

    /// All grid points in lexicographic order.
    pub fn points(&self) -> Vec<[u64; 8]> {
        let mut out = vec![[0u64; 8]];
        for (i, grid) in self.grids.iter().enumerate() {
            out = out
                .into_iter()
                .flat_map(|p| {
                    grid.iter().map(move |&v| {
                        let mut q = p;
                        q[i] = v;
                        q
                    })
                })
                .collect();
        }
        out.sort_unstable();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointStatus {
    Feasible,
    OutsideSramBudget,
    OutsideBwBudget,
    TilingInfeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DsePoint {
    /// Values in [`Param::ALL`] order.
    pub params: [u64; 8],
    /// Total network cycles; `None` unless feasible.
    pub metric: Option<u64>,
    pub status: PointStatus,
}

impl DsePoint {
    pub fn feasible(&self) -> bool {
        self.status == PointStatus::Feasible
    }

    pub fn sram_bytes(&self) -> u64 {
        self.params[..4].iter().sum()
    }

    pub fn bandwidth(&self) -> u64 {
        self.params[4..].iter().sum()
    }

    pub fn apply(&self, base: &HardwareConfig) -> HardwareConfig {
        apply(base, &self.params)
    }
}

fn apply(base: &HardwareConfig, params: &[u64; 8]) -> HardwareConfig {
    let mut hw = base.clone();
    for (p, &v) in Param::ALL.iter().zip(params) {
        p.set(&mut hw, v);
    }
    hw
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DseResult {
    pub optimal: DsePoint,
    pub worst: DsePoint,
    /// Worst metric over optimal metric.
    pub improvement: f64,
    pub all: Vec<DsePoint>,
}

impl DseResult {
    pub fn feasible_count(&self) -> usize {
        self.all.iter().filter(|p| p.feasible()).count()
    }
}

/// Total cycles of `layers`, or `None` if some layer cannot be tiled.
pub fn network_cycles(layers: &[LayerSpec], hw: &HardwareConfig, opts: SimOptions) -> Result<Option<u64>> {
    match evaluate_layers(layers, hw, opts) {
        Ok(s) => Ok(Some(s.l_total)),
        Err(e) if e.is_infeasible() => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn run_dse(layers: &[LayerSpec], base: &HardwareConfig, cfg: &DseConfig, opts: SimOptions, parallel: bool) -> Result<DseResult> {
    cfg.validate()?;
    let (sa_layers, simd_layers): (Vec<LayerSpec>, Vec<LayerSpec>) =
        layers.iter().cloned().partition(|l| l.kind.is_conv_family());

    let mut simd_keys: Vec<(u64, u64)> = cfg.grids[3]
        .iter()
        .flat_map(|&v| cfg.grids[7].iter().map(move |&b| (v, b)))
        .collect();
    simd_keys.sort_unstable();
    simd_keys.dedup();
    let simd_eval = |&(vmem, bw_v): &(u64, u64)| -> Result<((u64, u64), Option<u64>)> {
        let mut hw = base.clone();
        hw.vmem_bytes = vmem;
        hw.bw_v = bw_v;
        Ok(((vmem, bw_v), network_cycles(&simd_layers, &hw, opts)?))
    };
    let simd_part: HashMap<(u64, u64), Option<u64>> = if parallel {
        simd_keys.par_iter().map(simd_eval).collect::<Result<_>>()?
    } else {
        simd_keys.iter().map(simd_eval).collect::<Result<_>>()?
    };

    let eval = |params: [u64; 8]| -> Result<DsePoint> {
        let status_only = |status| DsePoint {
            params,
            metric: None,
            status,
        };
        if !cfg.sram_ok(&params) {
            return Ok(status_only(PointStatus::OutsideSramBudget));
        }
        if !cfg.bw_ok(&params) {
            return Ok(status_only(PointStatus::OutsideBwBudget));
        }
        let Some(simd) = simd_part[&(params[3], params[7])] else {
            return Ok(status_only(PointStatus::TilingInfeasible));
        };
        match network_cycles(&sa_layers, &apply(base, &params), opts)? {
            Some(sa) => Ok(DsePoint {
                params,
                metric: Some(sa + simd),
                status: PointStatus::Feasible,
            }),
            None => Ok(status_only(PointStatus::TilingInfeasible)),
        }
    };
    let points = cfg.points();
    let all: Vec<DsePoint> = if parallel {
        points.into_par_iter().map(eval).collect::<Result<_>>()?
    } else {
        points.into_iter().map(eval).collect::<Result<_>>()?
    };

    let feasible = || all.iter().filter_map(|p| p.metric.map(|m| (m, p)));
    let optimal = feasible().min_by_key(|&(m, p)| (m, p.params)).map(|(_, p)| *p);
    let worst = feasible()
        .min_by_key(|&(m, p)| (std::cmp::Reverse(m), p.params))
        .map(|(_, p)| *p);
    let (Some(optimal), Some(worst)) = (optimal, worst) else {
        return Err(Error::NoFeasiblePoint {
            reason: tightest_constraint(&all),
        });
    };
    let improvement = worst.metric.unwrap_or(0) as f64 / optimal.metric.unwrap_or(1).max(1) as f64;
    Ok(DseResult {
        optimal,
        worst,
        improvement,
        all,
    })
}

fn tightest_constraint(all: &[DsePoint]) -> String {
    let count = |s| all.iter().filter(|p| p.status == s).count();
    let (sram, bw, tiling) = (
        count(PointStatus::OutsideSramBudget),
        count(PointStatus::OutsideBwBudget),
        count(PointStatus::TilingInfeasible),
    );
    if sram == all.len() {
        "no grid point lies within the SRAM budget window".to_string()
    } else if sram + bw == all.len() {
        "no grid point lies within both the SRAM and the bandwidth budget windows".to_string()
    } else {
        format!("{tiling} in-budget points, none of which can tile every layer")
    }
}

/// Near-optimal points plus the smallest-SRAM and smallest-bandwidth picks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    /// Sorted by total SRAM, then total bandwidth, then parameters.
    pub points: Vec<DsePoint>,
    pub min_sram: Option<DsePoint>,
    pub min_bandwidth: Option<DsePoint>,
}

pub fn extract_landscape(all: &[DsePoint], optimal: &DsePoint, within: f64) -> Landscape {
    let Some(best) = optimal.metric else {
        return Landscape {
            points: Vec::new(),
            min_sram: None,
            min_bandwidth: None,
        };
    };
    let limit = (1.0 + within) * best as f64;
    let mut points: Vec<DsePoint> = all
        .iter()
        .filter(|p| p.metric.is_some_and(|m| m as f64 <= limit))
        .copied()
        .collect();
    points.sort_by_key(|p| (p.sram_bytes(), p.bandwidth(), p.params));
    let min_bandwidth = points.iter().min_by_key(|p| (p.bandwidth(), p.sram_bytes(), p.params)).copied();
    Landscape {
        min_sram: points.first().copied(),
        min_bandwidth,
        points,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub value: u64,
    pub metric: u64,
    pub normalized: f64,
}

/// Sweeps `param` over `grid` with all other parameters held at `optimal_hw`.
/// Values that make some layer untileable are skipped.
pub fn sensitivity_sweep(
    layers: &[LayerSpec],
    optimal_hw: &HardwareConfig,
    param: Param,
    grid: &[u64],
    opts: SimOptions,
) -> Result<Vec<SensitivityRow>> {
    let reference = network_cycles(layers, optimal_hw, opts)?.ok_or_else(|| Error::NoFeasiblePoint {
        reason: "the reference configuration cannot tile every layer".to_string(),
    })?;
    let mut rows = Vec::new();
    for &value in grid {
        let mut hw = optimal_hw.clone();
        param.set(&mut hw, value);
        if let Some(metric) = network_cycles(layers, &hw, opts)? {
            rows.push(SensitivityRow {
                value,
                metric,
                normalized: metric as f64 / reference as f64,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specs::test_hw;

    fn toy() -> Vec<LayerSpec> {
        let c1 = ConvShape::new(1, 16, 16, 8, 16, 3, 3, 1, 1, 1, true).unwrap();
        let c2 = ConvShape::new(1, 16, 16, 16, 16, 3, 3, 1, 1, 1, false).unwrap();
        let act = SimdShape::new(16, 16, 1, 16).unwrap();
        vec![
            LayerSpec::conv("c1", c1),
            LayerSpec::simd("r1", LayerKind::ReLU, act),
            LayerSpec::conv("c2", c2),
            LayerSpec::simd("add", LayerKind::TensorAdd, act),
        ]
    }

    fn cfg() -> DseConfig {
        let mut c = DseConfig::with_budgets(4 * 3 * 1024, 4 * 96);
        c.deviation = 0.5;
        c.grids = std::array::from_fn(|i| if i < 4 { vec![2048, 4096] } else { vec![64, 128] });
        c
    }

    #[test]
    fn optimal_is_minimum_and_parallel_matches_sequential() {
        let hw = test_hw(4, 4);
        let par = run_dse(&toy(), &hw, &cfg(), SimOptions::default(), true).unwrap();
        let seq = run_dse(&toy(), &hw, &cfg(), SimOptions::default(), false).unwrap();
        assert_eq!(par, seq);
        assert_eq!(par.all.len(), 256);
        let best = par.optimal.metric.unwrap();
        assert!(par.all.iter().filter_map(|p| p.metric).all(|m| m >= best));
        assert!(par.improvement >= 1.0);
    }

    #[test]
    fn landscape_filters() {
        let hw = test_hw(4, 4);
        let r = run_dse(&toy(), &hw, &cfg(), SimOptions::default(), true).unwrap();
        let exact = extract_landscape(&r.all, &r.optimal, 0.0);
        assert!(exact.points.iter().all(|p| p.metric == r.optimal.metric));
        let wide = extract_landscape(&r.all, &r.optimal, 0.15);
        let narrow = extract_landscape(&r.all, &r.optimal, 0.10);
        assert!(narrow.points.iter().all(|p| wide.points.contains(p)));
        let min = wide.min_sram.unwrap();
        assert!(wide.points.iter().all(|p| p.sram_bytes() >= min.sram_bytes()));
    }

    #[test]
    fn budget_window_with_no_points_is_an_error() {
        let hw = test_hw(4, 4);
        let mut c = cfg();
        c.sram_budget_bytes = 1;
        c.deviation = 0.0;
        let err = run_dse(&toy(), &hw, &c, SimOptions::default(), false).unwrap_err();
        assert!(err.to_string().contains("SRAM budget"), "{err}");
    }

    #[test]
    fn bandwidth_sweep_is_monotone() {
        let hw = test_hw(4, 4);
        let grid = [16, 32, 64, 128, 256];
        let rows = sensitivity_sweep(&toy(), &hw, Param::BwI, &grid, SimOptions::default()).unwrap();
        assert_eq!(rows.len(), grid.len());
        assert!(rows.windows(2).all(|w| w[0].metric >= w[1].metric));
        assert_eq!(rows[3].normalized, 1.0);
    }

    #[test]
    fn ifmap_bandwidth_matters_more_than_ifmap_buffer() {
        let opts = SimOptions::default();
        let hw = run_dse(&toy(), &test_hw(4, 4), &cfg(), opts, false).unwrap().optimal.apply(&test_hw(4, 4));
        let bw = sensitivity_sweep(&toy(), &hw, Param::BwI, &[hw.bw_i / 16], opts).unwrap();
        let buf = sensitivity_sweep(&toy(), &hw, Param::IbufBytes, &[hw.ibuf_bytes / 16], opts).unwrap();
        assert!(bw[0].normalized > buf[0].normalized, "{bw:?} {buf:?}");
    }

    #[test]
    fn param_names_round_trip() {
        for p in Param::ALL {
            assert_eq!(Param::from_name(p.name()), Some(p));
        }
    }
}
