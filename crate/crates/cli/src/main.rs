use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use lstm_sharp_core::explore::{default_specs, BASELINE_K};
use lstm_sharp_core::formats::{parse_hardware, parse_model, read_weights, stages_csv, steps_csv};
use lstm_sharp_core::lstm::random_inputs;
use lstm_sharp_core::sim::trace_csv;
use lstm_sharp_core::{
    build_config_table, build_program, check_capacity, compare_schedules, derive_tiles,
    estimate_energy, functional_shadow, simulate_with, sweep_grid, CostModel, HardwareConfig,
    LstmModelSpec, LstmState, LstmWeights, NumericPolicy, Result, RunManifest, ScheduleKind,
    ScheduleSetup, SharpError, SimOptions, TileConfig, BUDGETS,
};

#[derive(Parser)]
#[command(
    name = "lstm-sharp",
    version,
    about = "LSTM accelerator scheduling simulator"
)]
struct Cli {
    /// Directory searched for config files given as relative paths.
    #[arg(long, env = "LSTM_SHARP_CONFIG_DIR", global = true)]
    config_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one model on one hardware configuration.
    Simulate(SimulateArgs),
    /// Sweep every admissible tile width over models and budgets.
    SweepK(SweepArgs),
    /// Compare all schedules over models and budgets.
    CompareSchedules(CompareArgs),
    /// Build the per-(model, budget) tile lookup table.
    BuildTable(TableArgs),
    /// Check the tiled datapath against the dense reference.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct HardwareArgs {
    /// Hardware TOML file; built-in defaults when omitted.
    #[arg(long)]
    hardware: Option<PathBuf>,
    /// Overrides the file's total_macs.
    #[arg(long)]
    macs: Option<usize>,
}

#[derive(Args)]
struct GridArgs {
    /// Model TOML files; the four default square models when omitted.
    #[arg(long = "model")]
    models: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = BUDGETS)]
    budgets: Vec<usize>,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    hw: HardwareArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    hw: HardwareArgs,
    #[arg(long, value_parser = parse_schedule)]
    schedule: ScheduleKind,
    #[arg(long, default_value_t = BASELINE_K)]
    k: usize,
    #[arg(long)]
    reconfig: bool,
    /// Also write a per-cycle stage event trace.
    #[arg(long)]
    trace: bool,
    /// Cost model TOML; adds an energy report.
    #[arg(long)]
    costs: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_parser = parse_schedule)]
    schedule: ScheduleKind,
    #[arg(long)]
    reconfig: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    grid: GridArgs,
    /// Run every schedule at this width without reconfiguration. When
    /// omitted, reconfigurable schedules use their best width.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args)]
struct TableArgs {
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_parser = parse_schedule, default_value = "unfolded")]
    schedule: ScheduleKind,
    #[arg(long)]
    reconfig: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    Full,
    Half,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    model: PathBuf,
    /// Weights container; random weights from --seed when omitted.
    #[arg(long, conflicts_with = "seed")]
    weights: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = PrecisionArg::Full)]
    precision: PrecisionArg,
    #[command(flatten)]
    hw: HardwareArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_schedule(s: &str) -> std::result::Result<ScheduleKind, String> {
    s.parse().map_err(|e: SharpError| e.to_string())
}

struct Ctx {
    config_dir: Option<PathBuf>,
}

impl Ctx {
    /// Relative paths that do not exist are looked up in the config dir.
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_relative() && !p.exists() {
            if let Some(d) = &self.config_dir {
                let c = d.join(p);
                if c.exists() {
                    return c;
                }
            }
        }
        p.to_path_buf()
    }

    fn read(&self, p: &Path, manifest: &mut RunManifest) -> Result<String> {
        let path = self.resolve(p);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| SharpError::Config(format!("{}: {e}", path.display())))?;
        manifest.add_input(&path)?;
        Ok(text)
    }

    fn model(&self, p: &Path, m: &mut RunManifest) -> Result<LstmModelSpec> {
        parse_model(&self.read(p, m)?)
    }

    fn hardware(&self, a: &HardwareArgs, m: &mut RunManifest) -> Result<HardwareConfig> {
        let mut hw = match &a.hardware {
            Some(p) => parse_hardware(&self.read(p, m)?)?,
            None => HardwareConfig::default(),
        };
        if let Some(macs) = a.macs {
            hw.total_macs = macs;
        }
        hw.validate()?;
        Ok(hw)
    }

    fn models(&self, paths: &[PathBuf], m: &mut RunManifest) -> Result<Vec<LstmModelSpec>> {
        if paths.is_empty() {
            return Ok(default_specs());
        }
        paths.iter().map(|p| self.model(p, m)).collect()
    }
}

fn jobs(j: Option<usize>) -> usize {
    j.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json serializes");
    s.push('\n');
    s
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("json serializes")
}

fn finish_manifest(mut m: RunManifest, config: Value) -> Value {
    m.config = config;
    to_value(&m)
}

fn cmd_simulate(ctx: &Ctx, a: &SimulateArgs) -> Result<()> {
    let mut m = RunManifest::new("simulate", Value::Null);
    let spec = ctx.model(&a.model, &mut m)?;
    let hw = ctx.hardware(&a.hw, &mut m)?;
    let costs = match &a.costs {
        Some(p) => Some(CostModel::from_toml_str(&ctx.read(p, &mut m)?)?),
        None => None,
    };
    let tile = TileConfig::new(&hw, a.k)?;
    let program = build_program(a.schedule, &spec, &hw, &tile, a.reconfig)?;
    let (report, trace) = simulate_with(&program, &hw, &SimOptions { trace: a.trace })?;
    let energy = costs
        .as_ref()
        .map(|c| estimate_energy(&report, &hw, c))
        .transpose()?;
    let manifest = finish_manifest(
        m,
        json!({
            "model": spec,
            "hardware": hw,
            "schedule": a.schedule,
            "k_eff": a.k,
            "reconfig": a.reconfig,
            "cost_model": costs,
        }),
    );
    let doc = json!({
        "manifest": manifest,
        "capacity": check_capacity(&spec, &hw),
        "report": report,
        "energy": energy,
    });
    write(&a.out, "report.json", &pretty(&doc))?;
    write(&a.out, "stages.csv", &stages_csv(&report))?;
    write(&a.out, "steps.csv", &steps_csv(&report))?;
    if let Some(e) = &energy {
        write(&a.out, "energy.csv", &e.csv())?;
    }
    if let Some(t) = &trace {
        write(&a.out, "trace.csv", &trace_csv(t))?;
    }
    println!(
        "{} H={} D={} T={} M={} k={}{}: {} cycles, utilization {:.4}",
        a.schedule,
        spec.hidden_dim,
        spec.input_dim,
        spec.seq_len,
        hw.total_macs,
        a.k,
        if a.reconfig { " reconfig" } else { "" },
        report.total_cycles,
        report.utilization
    );
    Ok(())
}

fn grid_config(g: &GridArgs, specs: &[LstmModelSpec], hw: &HardwareConfig) -> Value {
    json!({
        "models": specs,
        "budgets": g.budgets,
        "hardware": hw,
    })
}

fn cmd_sweep(ctx: &Ctx, a: &SweepArgs) -> Result<()> {
    let g = &a.grid;
    let mut m = RunManifest::new("sweep-k", Value::Null);
    let specs = ctx.models(&g.models, &mut m)?;
    let hw = ctx.hardware(&g.hw, &mut m)?;
    let r = sweep_grid(
        &specs,
        &hw,
        &g.budgets,
        a.schedule,
        a.reconfig,
        jobs(g.jobs),
    )?;
    let mut config = grid_config(g, &specs, &hw);
    config["schedule"] = to_value(&a.schedule);
    config["reconfig"] = json!(a.reconfig);
    write(&g.out, "sweep.csv", &r.csv())?;
    write(
        &g.out,
        "manifest.json",
        &pretty(&finish_manifest(m, config)),
    )?;
    for s in &specs {
        for &b in &g.budgets {
            let best = r
                .cells
                .iter()
                .filter(|c| {
                    c.hidden_dim == s.hidden_dim && c.input_dim == s.input_dim && c.budget == b
                })
                .min_by_key(|c| (c.cycles, c.k_eff))
                .expect("swept cell");
            println!(
                "H={} D={} M={}: k_opt={} cycles={} speedup={:.3}",
                s.hidden_dim, s.input_dim, b, best.k_eff, best.cycles, best.speedup
            );
        }
    }
    Ok(())
}

fn cmd_compare(ctx: &Ctx, a: &CompareArgs) -> Result<()> {
    let g = &a.grid;
    let mut m = RunManifest::new("compare-schedules", Value::Null);
    let specs = ctx.models(&g.models, &mut m)?;
    let hw = ctx.hardware(&g.hw, &mut m)?;
    let setups = match a.k {
        Some(k) => ScheduleSetup::fixed(k),
        None => ScheduleSetup::reconfigured(),
    };
    let t = compare_schedules(&specs, &hw, &g.budgets, &setups, jobs(g.jobs))?;
    let mut config = grid_config(g, &specs, &hw);
    config["setups"] = to_value(&setups);
    write(&g.out, "compare.csv", &t.csv())?;
    write(
        &g.out,
        "manifest.json",
        &pretty(&finish_manifest(m, config)),
    )?;
    for r in &t.rows {
        let cells: Vec<String> = r
            .entries
            .iter()
            .map(|e| format!("{}={}", e.kind, e.cycles))
            .collect();
        println!(
            "H={} D={} M={}: {}",
            r.hidden_dim,
            r.input_dim,
            r.budget,
            cells.join(" ")
        );
    }
    Ok(())
}

fn cmd_build_table(ctx: &Ctx, a: &TableArgs) -> Result<()> {
    let g = &a.grid;
    let mut m = RunManifest::new("build-table", Value::Null);
    let specs = ctx.models(&g.models, &mut m)?;
    let hw = ctx.hardware(&g.hw, &mut m)?;
    let t = build_config_table(
        &specs,
        &hw,
        &g.budgets,
        a.schedule,
        a.reconfig,
        jobs(g.jobs),
    )?;
    let mut config = grid_config(g, &specs, &hw);
    config["schedule"] = to_value(&a.schedule);
    config["reconfig"] = json!(a.reconfig);
    write(&g.out, "config_table.json", &t.to_json())?;
    write(
        &g.out,
        "manifest.json",
        &pretty(&finish_manifest(m, config)),
    )?;
    println!("{} entries", t.entries.len());
    Ok(())
}

fn cmd_verify(ctx: &Ctx, a: &VerifyArgs) -> Result<()> {
    let mut m = RunManifest::new("verify", Value::Null);
    let spec = ctx.model(&a.model, &mut m)?;
    let hw = ctx.hardware(&a.hw, &mut m)?;
    let seed = a.seed.unwrap_or(0);
    let weights = match &a.weights {
        Some(p) => {
            let path = ctx.resolve(p);
            let w = read_weights(&path, Some(&spec))?;
            m.add_input(&path)?;
            w
        }
        None => {
            m.seed = Some(seed);
            LstmWeights::random(&spec, seed)
        }
    };
    let inputs = random_inputs(&spec, seed.wrapping_add(1));
    let policy = match a.precision {
        PrecisionArg::Full => NumericPolicy::full(),
        PrecisionArg::Half => NumericPolicy::half(),
    };
    let init = LstmState::zeros(spec.hidden_dim);
    let mut runs = Vec::new();
    for kind in ScheduleKind::ALL {
        for tile in derive_tiles(&hw) {
            for reconfig in [false, true] {
                let program = build_program(kind, &spec, &hw, &tile, reconfig)?;
                functional_shadow(&program, &weights, &inputs, &init, &policy)?;
                runs.push(json!({"schedule": kind, "k_eff": tile.k_eff, "reconfig": reconfig}));
            }
        }
    }
    println!("verified {} configurations", runs.len());
    if let Some(out) = &a.out {
        let config = json!({
            "model": spec,
            "hardware": hw,
            "policy": policy,
            "input_seed": seed.wrapping_add(1),
        });
        let doc = json!({"manifest": finish_manifest(m, config), "passed": runs});
        write(out, "verify.json", &pretty(&doc))?;
    }
    Ok(())
}

fn exit_code(e: &SharpError) -> u8 {
    match e {
        SharpError::Deadlock { .. }
        | SharpError::Program(_)
        | SharpError::Mismatch { .. }
        | SharpError::NumericOverflow { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Ctx {
        config_dir: cli.config_dir,
    };
    let r = match &cli.command {
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::SweepK(a) => cmd_sweep(&ctx, a),
        Command::CompareSchedules(a) => cmd_compare(&ctx, a),
        Command::BuildTable(a) => cmd_build_table(&ctx, a),
        Command::Verify(a) => cmd_verify(&ctx, a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
