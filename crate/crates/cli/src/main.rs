use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use accelsim_core::conv::{conv_eval, Conventions, Variant};
use accelsim_core::energy::{compute_energy, load_backend};
use accelsim_core::explorer::{extract_landscape, run_dse, sensitivity_sweep, DseConfig, Param};
use accelsim_core::network::{simulate_network, workload, Mode, SimOptions};
use accelsim_core::oracle::{random_conv_instance, simulate_conv};
use accelsim_core::train::expand_training;
use accelsim_core::{load_hardware_spec, load_network_spec, network_to_json_string, with_batch, Error, HardwareConfig, LayerSpec};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

mod report;

use report::{write_dse_csv, write_json, write_layers_csv, write_sensitivity_csv, InputFile, Metadata, RunReport};

#[derive(Parser)]
#[command(name = "accelsim", version, about = "Analytical performance and energy models for systolic-array + SIMD accelerators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a network and write report.json and layers.csv.
    Simulate(SimulateArgs),
    /// Expand a network into its training workload.
    TrainExpand(TrainExpandArgs),
    /// Compute energy and power from an existing report.
    Energy(EnergyArgs),
    /// Evaluate every layer under all three stall models.
    Compare(CompareArgs),
    /// Exhaustive search over buffer sizes and bandwidths.
    Dse(DseArgs),
    /// One-at-a-time parameter sweeps around a configuration.
    Sensitivity(SensitivityArgs),
    /// Check the closed-form convolution model against the event replay.
    OracleCheck(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Inference,
    Training,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Inference => Mode::Inference,
            ModeArg::Training => Mode::Training,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Full,
    Nostall,
    Simplified,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Variant {
        match v {
            VariantArg::Full => Variant::Full,
            VariantArg::Nostall => Variant::NoStall,
            VariantArg::Simplified => Variant::Simplified,
        }
    }
}

#[derive(Args)]
struct Workload {
    /// Hardware spec (JSON).
    #[arg(long)]
    hw: PathBuf,
    /// Network spec (JSON).
    #[arg(long)]
    net: PathBuf,
    #[arg(long, value_enum, default_value = "inference")]
    mode: ModeArg,
    /// Override the batch size of every layer.
    #[arg(long)]
    batch: Option<u64>,
    /// Charge the first tile's loads and the last tile's store.
    #[arg(long)]
    prologue_epilogue: bool,
}

impl Workload {
    fn load(&self) -> Result<(HardwareConfig, Vec<LayerSpec>)> {
        let hw = load_hardware_spec(&self.hw)?;
        let mut net = load_network_spec(&self.net)?;
        if let Some(b) = self.batch {
            if b == 0 {
                bail!(Error::Invalid {
                    location: "--batch".into(),
                    message: "batch must be at least 1".into(),
                });
            }
            net = with_batch(&net, b);
        }
        Ok((hw, net))
    }

    fn options(&self, variant: Variant) -> SimOptions {
        SimOptions {
            variant,
            conventions: Conventions {
                prologue_epilogue: self.prologue_epilogue,
            },
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    workload: Workload,
    #[arg(long, value_enum, default_value = "full")]
    variant: VariantArg,
    /// Backend power characterization (JSON).
    #[arg(long)]
    energy: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainExpandArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    batch: Option<u64>,
    /// Write the expanded network here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EnergyArgs {
    /// report.json produced by `simulate`.
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    backend: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    workload: Workload,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct DseArgs {
    #[command(flatten)]
    workload: Workload,
    /// Total SRAM budget over WBuf, IBuf, OBuf and VMem, in kB.
    #[arg(long)]
    sram_budget_kb: u64,
    /// Total DRAM bandwidth budget over the four interfaces, in bits per cycle.
    #[arg(long)]
    bw_budget: u64,
    #[arg(long, default_value_t = 0.15)]
    deviation: f64,
    /// Candidate buffer sizes in kB.
    #[arg(long, value_delimiter = ',', default_values_t = [32, 64, 128, 256, 512, 1024, 2048])]
    sizes_kb: Vec<u64>,
    /// Candidate bandwidths in bits per cycle.
    #[arg(long, value_delimiter = ',', default_values_t = [32, 64, 128, 256, 512, 1024, 2048])]
    bandwidths: Vec<u64>,
    /// Landscape cut-off relative to the optimum.
    #[arg(long, default_value_t = 0.15)]
    within: f64,
    #[arg(long)]
    sequential: bool,
    /// Write only feasible points to dse.csv.
    #[arg(long)]
    feasible_only: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SensitivityArgs {
    /// Reference configuration, typically `optimal_hw.json` from `dse`.
    #[command(flatten)]
    workload: Workload,
    /// Parameters to sweep (default: all eight).
    #[arg(long, value_delimiter = ',')]
    param: Vec<String>,
    /// Buffer-size grid in kB.
    #[arg(long, value_delimiter = ',', default_values_t = [32, 64, 128, 256, 512, 1024, 2048])]
    sizes_kb: Vec<u64>,
    /// Bandwidth grid in bits per cycle.
    #[arg(long, value_delimiter = ',', default_values_t = [32, 64, 128, 256, 512, 1024, 2048])]
    bandwidths: Vec<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 200)]
    seeds: u64,
    #[arg(long, default_value_t = 16)]
    max_dim: u64,
    #[arg(long)]
    prologue_epilogue: bool,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("failed to create {}", dir.display()))
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let w = &args.workload;
    let (hw, net) = w.load()?;
    let backend = args.energy.as_deref().map(load_backend).transpose()?;
    let opts = w.options(args.variant.into());
    let mode = w.mode.into();
    let stats = simulate_network(&net, &hw, mode, opts)?;
    let energy = backend.as_ref().map(|bc| compute_energy(&stats, bc));

    let mut inputs = BTreeMap::new();
    inputs.insert("hw".to_string(), InputFile::hash(&w.hw)?);
    inputs.insert("net".to_string(), InputFile::hash(&w.net)?);
    if let Some(p) = &args.energy {
        inputs.insert("energy".to_string(), InputFile::hash(p)?);
    }
    let report = RunReport {
        metadata: Metadata {
            tool: "accelsim".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            mode,
            variant: opts.variant,
            conventions: opts.conventions,
            batch: w.batch,
            inputs,
        },
        stats,
        energy,
    };
    create_dir(&args.out)?;
    write_json(&args.out.join("report.json"), &report)?;
    write_layers_csv(&args.out.join("layers.csv"), &report.stats)?;

    let s = &report.stats;
    println!("layers            {}", s.layers.len());
    println!("total cycles      {}", s.l_total);
    println!("  systolic array  {} ({} compute)", s.sa_cycles, s.c_sa);
    println!("  simd            {} ({} compute)", s.simd_cycles, s.c_simd);
    println!("non-conv share    {:.1}%", 100.0 * s.non_conv_runtime_share());
    println!("dram bits         {}", s.a_d_total);
    if let Some(e) = &report.energy {
        print_energy(e);
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn print_energy(e: &accelsim_core::energy::EnergyReport) {
    println!("energy            {:.6e} J", e.e_total);
    println!("  sa / simd       {:.6e} / {:.6e} J", e.e_sa, e.e_simd);
    println!("  sram / dram     {:.6e} / {:.6e} J", e.e_sram, e.e_dram);
    println!("runtime           {:.6e} s", e.runtime);
    println!("average power     {:.6} W", e.p_avg);
}

fn train_expand(args: &TrainExpandArgs) -> Result<()> {
    let mut net = load_network_spec(&args.net)?;
    if let Some(b) = args.batch {
        net = with_batch(&net, b.max(1));
    }
    let g = expand_training(&net)?;
    let text = network_to_json_string(&g.layers());
    match &args.out {
        Some(p) => {
            fs::write(p, text).with_context(|| format!("failed to write {}", p.display()))?;
            eprintln!(
                "{} forward, {} backward, {} update layers -> {}",
                g.forward.len(),
                g.backward.len(),
                g.updates.len(),
                p.display()
            );
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn energy(args: &EnergyArgs) -> Result<()> {
    let report = RunReport::load(&args.report)?;
    let bc = load_backend(&args.backend)?;
    let e = compute_energy(&report.stats, &bc);
    print_energy(&e);
    println!("{}", serde_json::to_string_pretty(&e)?);
    Ok(())
}

fn compare(args: &CompareArgs) -> Result<()> {
    let w = &args.workload;
    let (hw, net) = w.load()?;
    let variants = [Variant::NoStall, Variant::Simplified, Variant::Full];
    let runs = variants
        .iter()
        .map(|&v| simulate_network(&net, &hw, w.mode.into(), w.options(v)))
        .collect::<accelsim_core::Result<Vec<_>>>()?;
    create_dir(&args.out)?;
    let path = args.out.join("compare.csv");
    let mut csv = csv::Writer::from_path(&path).with_context(|| format!("failed to write {}", path.display()))?;
    csv.write_record(["layer", "kind", "nostall", "simplified", "full"])?;
    for (i, rec) in runs[0].layers.iter().enumerate() {
        let mut row = vec![rec.name.clone(), rec.kind.name().to_string()];
        row.extend(runs.iter().map(|r| r.layers[i].stats.total_cycles.to_string()));
        csv.write_record(&row)?;
    }
    csv.flush()?;
    for (v, r) in variants.iter().zip(&runs) {
        println!("{:<11} {}", v.name(), r.l_total);
    }
    let full = runs[2].l_total as f64;
    if full > 0.0 {
        println!("nostall underestimates by {:.1}%", 100.0 * (1.0 - runs[0].l_total as f64 / full));
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn kb(v: &[u64]) -> Vec<u64> {
    v.iter().map(|x| x * 1024).collect()
}

fn dse(args: &DseArgs) -> Result<()> {
    let w = &args.workload;
    let (hw, net) = w.load()?;
    let layers = workload(&net, w.mode.into())?;
    let sizes = kb(&args.sizes_kb);
    let cfg = DseConfig {
        sram_budget_bytes: args.sram_budget_kb * 1024,
        bw_budget: args.bw_budget,
        deviation: args.deviation,
        grids: std::array::from_fn(|i| if i < 4 { sizes.clone() } else { args.bandwidths.clone() }),
    };
    let opts = w.options(Variant::Full);
    let res = run_dse(&layers, &hw, &cfg, opts, !args.sequential)?;
    let land = extract_landscape(&res.all, &res.optimal, args.within);

    create_dir(&args.out)?;
    let rows: Vec<_> = res.all.iter().filter(|p| !args.feasible_only || p.feasible()).copied().collect();
    write_dse_csv(&args.out.join("dse.csv"), &rows)?;
    write_json(&args.out.join("optimal_hw.json"), &res.optimal.apply(&hw))?;
    let named = |p: &accelsim_core::explorer::DsePoint| {
        let params: BTreeMap<&str, u64> = Param::ALL.iter().map(|q| q.name()).zip(p.params).collect();
        json!({ "params": params, "metric": p.metric, "sram_bytes": p.sram_bytes(), "bandwidth": p.bandwidth() })
    };
    let summary = json!({
        "points": res.all.len(),
        "feasible": res.feasible_count(),
        "optimal": named(&res.optimal),
        "worst": named(&res.worst),
        "improvement": res.improvement,
        "landscape": {
            "within": args.within,
            "points": land.points.len(),
            "min_sram": land.min_sram.as_ref().map(named),
            "min_bandwidth": land.min_bandwidth.as_ref().map(named),
        },
        "config": cfg,
    });
    write_json(&args.out.join("dse_summary.json"), &summary)?;

    println!("points        {} ({} feasible)", res.all.len(), res.feasible_count());
    println!("optimal       {} cycles {:?}", res.optimal.metric.unwrap_or(0), res.optimal.params);
    println!("worst         {} cycles {:?}", res.worst.metric.unwrap_or(0), res.worst.params);
    println!("worst/optimal {:.2}x", res.improvement);
    println!("wrote {}", args.out.display());
    Ok(())
}

fn sensitivity(args: &SensitivityArgs) -> Result<()> {
    let w = &args.workload;
    let (hw, net) = w.load()?;
    let layers = workload(&net, w.mode.into())?;
    let params = if args.param.is_empty() {
        Param::ALL.to_vec()
    } else {
        args.param
            .iter()
            .map(|name| {
                Param::from_name(name).ok_or_else(|| {
                    anyhow::Error::new(Error::Invalid {
                        location: "--param".into(),
                        message: format!("unknown parameter `{name}`"),
                    })
                })
            })
            .collect::<Result<Vec<_>>>()?
    };
    let sizes = kb(&args.sizes_kb);
    create_dir(&args.out)?;
    for p in params {
        let mut grid = if p.is_size() { sizes.clone() } else { args.bandwidths.clone() };
        let current = p.get(&hw);
        if !grid.contains(&current) {
            grid.push(current);
            grid.sort_unstable();
        }
        let rows = sensitivity_sweep(&layers, &hw, p, &grid, w.options(Variant::Full))?;
        let path = args.out.join(format!("sensitivity_{}.csv", p.name()));
        write_sensitivity_csv(&path, p, &rows)?;
        let span = rows.iter().map(|r| r.normalized).fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)));
        println!("{:<11} {} values, normalized {:.3} .. {:.3}", p.name(), rows.len(), span.0, span.1);
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn oracle_check(args: &OracleArgs) -> Result<bool> {
    let conv = Conventions {
        prologue_epilogue: args.prologue_epilogue,
    };
    for seed in 0..args.seeds {
        let inst = random_conv_instance(&mut ChaCha8Rng::seed_from_u64(seed), args.max_dim);
        let st = conv_eval(&inst.shape, &inst.tiling, &inst.hw, Variant::Full, conv);
        let tr = simulate_conv(&inst.shape, &inst.tiling, &inst.hw, conv);
        if st.total_cycles != tr.total_cycles || st.dram_bits != tr.bits {
            println!("seed {seed}: model {} cycles, oracle {} cycles", st.total_cycles, tr.total_cycles);
            println!("model dram  {:?}", st.dram_bits);
            println!("oracle dram {:?}", tr.bits);
            println!("{}", serde_json::to_string_pretty(&inst)?);
            println!("{}/{} exact matches", seed, args.seeds);
            return Ok(false);
        }
    }
    println!("{}/{} exact matches", args.seeds, args.seeds);
    Ok(true)
}

/// The error chain, skipping causes already quoted by the message above them.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

/// 1 for spec errors, 2 for infeasible tilings.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(e) if e.is_infeasible() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::TrainExpand(a) => train_expand(a).map(|_| true),
        Command::Energy(a) => energy(a).map(|_| true),
        Command::Compare(a) => compare(a).map(|_| true),
        Command::Dse(a) => dse(a).map(|_| true),
        Command::Sensitivity(a) => sensitivity(a).map(|_| true),
        Command::OracleCheck(a) => oracle_check(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
