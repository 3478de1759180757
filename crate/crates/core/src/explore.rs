//! Design-space exploration over tile widths, MAC budgets and schedules.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::{derive_tiles, HardwareConfig, TileConfig, BUDGETS};
use crate::error::{Result, SharpError};
use crate::lstm::LstmModelSpec;
use crate::schedule::{build_program, ScheduleKind};
use crate::sim::simulate;

pub const DEFAULT_HIDDEN_DIMS: [usize; 4] = [200, 340, 512, 1500];
pub const DEFAULT_SEQ_LEN: usize = 25;
/// Speedups in a [`SweepResult`] are relative to this budget at `BASELINE_K`.
pub const BASELINE_BUDGET: usize = 1024;
pub const BASELINE_K: usize = 32;

pub fn default_specs() -> Vec<LstmModelSpec> {
    DEFAULT_HIDDEN_DIMS
        .iter()
        .map(|&h| LstmModelSpec::square(h, DEFAULT_SEQ_LEN).expect("default model is valid"))
        .collect()
}

pub fn default_budgets() -> Vec<usize> {
    BUDGETS.to_vec()
}

/// Maps `f` over `items` on at most `jobs` threads, keeping input order.
pub fn par_map<T, R, F>(jobs: usize, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| SharpError::Config(format!("thread pool: {e}")))?;
    let out: Vec<Result<R>> = pool.install(|| items.par_iter().map(&f).collect());
    out.into_iter().collect()
}

/// Cycles and utilization of one simulated configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub cycles: u64,
    pub utilization: f64,
}

pub fn run_cell(
    spec: &LstmModelSpec,
    hw: &HardwareConfig,
    k: usize,
    kind: ScheduleKind,
    reconfig: bool,
) -> Result<CellOutcome> {
    let tile = TileConfig::new(hw, k)?;
    let program = build_program(kind, spec, hw, &tile, reconfig)?;
    let r = simulate(&program, hw)?;
    Ok(CellOutcome {
        cycles: r.total_cycles,
        utilization: r.utilization,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KPoint {
    pub k_eff: usize,
    pub cycles: u64,
    pub utilization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweep {
    pub budget: usize,
    pub schedule: ScheduleKind,
    pub reconfig: bool,
    pub points: Vec<KPoint>,
    pub k_opt: usize,
    /// Only one tile width was admissible.
    pub degenerate: bool,
}

impl KSweep {
    pub fn best(&self) -> &KPoint {
        self.points
            .iter()
            .find(|p| p.k_eff == self.k_opt)
            .expect("k_opt is a point")
    }
}

/// Argmin of cycles with ties going to the smaller width.
fn argmin(points: &[KPoint]) -> usize {
    points
        .iter()
        .min_by_key(|p| (p.cycles, p.k_eff))
        .map(|p| p.k_eff)
        .expect("at least one tile")
}

/// One simulation per admissible tile width at `hw.total_macs`.
pub fn sweep_k(
    spec: &LstmModelSpec,
    hw: &HardwareConfig,
    kind: ScheduleKind,
    reconfig: bool,
    jobs: usize,
) -> Result<KSweep> {
    hw.validate()?;
    let ks: Vec<usize> = derive_tiles(hw).iter().map(|t| t.k_eff).collect();
    let points = par_map(jobs, &ks, |&k| {
        run_cell(spec, hw, k, kind, reconfig).map(|o| KPoint {
            k_eff: k,
            cycles: o.cycles,
            utilization: o.utilization,
        })
    })?;
    Ok(KSweep {
        budget: hw.total_macs,
        schedule: kind,
        reconfig,
        k_opt: argmin(&points),
        degenerate: points.len() == 1,
        points,
    })
}

/// cycles(reconfiguration off) / cycles(on), both at the reconfigurable
/// design's best width.
pub fn padding_gain(
    spec: &LstmModelSpec,
    hw: &HardwareConfig,
    kind: ScheduleKind,
    jobs: usize,
) -> Result<f64> {
    let on = sweep_k(spec, hw, kind, true, jobs)?;
    let off = run_cell(spec, hw, on.k_opt, kind, false)?;
    Ok(off.cycles as f64 / on.best().cycles as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub hidden_dim: usize,
    pub input_dim: usize,
    pub seq_len: usize,
    pub budget: usize,
    pub k_eff: usize,
    pub schedule: ScheduleKind,
    pub reconfig: bool,
    pub cycles: u64,
    pub utilization: f64,
    /// Baseline cycles / these cycles.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub baseline_budget: usize,
    pub baseline_k: usize,
    pub cells: Vec<SweepCell>,
}

pub const SWEEP_CSV_HEADER: &str =
    "hidden_dim,input_dim,seq_len,budget,k_eff,schedule,reconfig,cycles,utilization,speedup";

impl SweepResult {
    pub fn csv(&self) -> String {
        let mut out = format!("{SWEEP_CSV_HEADER}\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{:.6},{:.6}\n",
                c.hidden_dim,
                c.input_dim,
                c.seq_len,
                c.budget,
                c.k_eff,
                c.schedule,
                c.reconfig,
                c.cycles,
                c.utilization,
                c.speedup
            ));
        }
        out
    }

    pub fn from_csv(s: &str) -> Result<Self> {
        let mut lines = s.lines();
        if lines.next() != Some(SWEEP_CSV_HEADER) {
            return Err(SharpError::Format("sweep CSV header mismatch".into()));
        }
        let bad = |l: &str| SharpError::Format(format!("bad sweep CSV row '{l}'"));
        let mut cells = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return Err(bad(line));
            }
            let u = |i: usize| f[i].parse::<usize>().map_err(|_| bad(line));
            cells.push(SweepCell {
                hidden_dim: u(0)?,
                input_dim: u(1)?,
                seq_len: u(2)?,
                budget: u(3)?,
                k_eff: u(4)?,
                schedule: f[5].parse()?,
                reconfig: f[6].parse().map_err(|_| bad(line))?,
                cycles: f[7].parse().map_err(|_| bad(line))?,
                utilization: f[8].parse().map_err(|_| bad(line))?,
                speedup: f[9].parse().map_err(|_| bad(line))?,
            });
        }
        Ok(Self {
            baseline_budget: BASELINE_BUDGET,
            baseline_k: BASELINE_K,
            cells,
        })
    }
}

/// Full grid: every model x budget x admissible k for one schedule and
/// reconfiguration setting, with speedups over (1K MACs, k = 32).
pub fn sweep_grid(
    specs: &[LstmModelSpec],
    template: &HardwareConfig,
    budgets: &[usize],
    kind: ScheduleKind,
    reconfig: bool,
    jobs: usize,
) -> Result<SweepResult> {
    let mut tasks = Vec::new();
    for (si, _) in specs.iter().enumerate() {
        for &m in budgets {
            let hw = template.with_budget(m);
            hw.validate()?;
            for t in derive_tiles(&hw) {
                tasks.push((si, m, t.k_eff));
            }
        }
    }
    let outcomes = par_map(jobs, &tasks, |&(si, m, k)| {
        run_cell(&specs[si], &template.with_budget(m), k, kind, reconfig)
    })?;
    let baselines = par_map(jobs, specs, |s| {
        run_cell(
            s,
            &template.with_budget(BASELINE_BUDGET),
            BASELINE_K,
            kind,
            reconfig,
        )
    })?;
    let cells = tasks
        .iter()
        .zip(outcomes)
        .map(|(&(si, m, k), o)| {
            let s = &specs[si];
            SweepCell {
                hidden_dim: s.hidden_dim,
                input_dim: s.input_dim,
                seq_len: s.seq_len,
                budget: m,
                k_eff: k,
                schedule: kind,
                reconfig,
                cycles: o.cycles,
                utilization: o.utilization,
                speedup: baselines[si].cycles as f64 / o.cycles as f64,
            }
        })
        .collect();
    Ok(SweepResult {
        baseline_budget: BASELINE_BUDGET,
        baseline_k: BASELINE_K,
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TileChoice {
    Fixed(usize),
    /// Best admissible width for the cell.
    Optimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleSetup {
    pub kind: ScheduleKind,
    pub tile: TileChoice,
    pub reconfig: bool,
}

impl ScheduleSetup {
    /// Every schedule at one fixed width, no reconfiguration.
    pub fn fixed(k: usize) -> Vec<ScheduleSetup> {
        ScheduleKind::ALL
            .iter()
            .map(|&kind| ScheduleSetup {
                kind,
                tile: TileChoice::Fixed(k),
                reconfig: false,
            })
            .collect()
    }

    /// Reconfigurable schedules at their best width; Sequential and the
    /// fixed-function baseline stay at k = 32 without reconfiguration.
    pub fn reconfigured() -> Vec<ScheduleSetup> {
        ScheduleKind::ALL
            .iter()
            .map(|&kind| {
                let fixed = matches!(kind, ScheduleKind::Sequential | ScheduleKind::EPurStyle);
                ScheduleSetup {
                    kind,
                    tile: if fixed {
                        TileChoice::Fixed(BASELINE_K)
                    } else {
                        TileChoice::Optimal
                    },
                    reconfig: !fixed,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub kind: ScheduleKind,
    pub k_eff: usize,
    pub reconfig: bool,
    pub cycles: u64,
    pub utilization: f64,
    /// Sequential cycles / these cycles.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub hidden_dim: usize,
    pub input_dim: usize,
    pub seq_len: usize,
    pub budget: usize,
    pub entries: Vec<ScheduleEntry>,
}

impl ScheduleRow {
    pub fn get(&self, kind: ScheduleKind) -> &ScheduleEntry {
        self.entries
            .iter()
            .find(|e| e.kind == kind)
            .expect("schedule present")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleTable {
    pub rows: Vec<ScheduleRow>,
}

pub const COMPARE_CSV_HEADER: &str =
    "hidden_dim,input_dim,seq_len,budget,schedule,k_eff,reconfig,cycles,utilization,speedup_vs_sequential";

impl ScheduleTable {
    pub fn csv(&self) -> String {
        let mut out = format!("{COMPARE_CSV_HEADER}\n");
        for r in &self.rows {
            for e in &r.entries {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{:.6},{:.6}\n",
                    r.hidden_dim,
                    r.input_dim,
                    r.seq_len,
                    r.budget,
                    e.kind,
                    e.k_eff,
                    e.reconfig,
                    e.cycles,
                    e.utilization,
                    e.speedup
                ));
            }
        }
        out
    }
}

fn resolve(spec: &LstmModelSpec, hw: &HardwareConfig, s: &ScheduleSetup) -> Result<ScheduleEntry> {
    let (k, o) = match s.tile {
        TileChoice::Fixed(k) => (k, run_cell(spec, hw, k, s.kind, s.reconfig)?),
        TileChoice::Optimal => {
            let sw = sweep_k(spec, hw, s.kind, s.reconfig, 1)?;
            let b = sw.best();
            (
                b.k_eff,
                CellOutcome {
                    cycles: b.cycles,
                    utilization: b.utilization,
                },
            )
        }
    };
    Ok(ScheduleEntry {
        kind: s.kind,
        k_eff: k,
        reconfig: s.reconfig,
        cycles: o.cycles,
        utilization: o.utilization,
        speedup: 0.0,
    })
}

/// Cycles of every setup on every (model, budget), normalized to the
/// Sequential setup (which must be present).
pub fn compare_schedules(
    specs: &[LstmModelSpec],
    template: &HardwareConfig,
    budgets: &[usize],
    setups: &[ScheduleSetup],
    jobs: usize,
) -> Result<ScheduleTable> {
    if !setups.iter().any(|s| s.kind == ScheduleKind::Sequential) {
        return Err(SharpError::Config(
            "schedule comparison needs a sequential setup".into(),
        ));
    }
    let mut tasks = Vec::new();
    for (si, _) in specs.iter().enumerate() {
        for &m in budgets {
            template.with_budget(m).validate()?;
            for s in setups {
                tasks.push((si, m, *s));
            }
        }
    }
    let entries = par_map(jobs, &tasks, |(si, m, s)| {
        resolve(&specs[*si], &template.with_budget(*m), s)
    })?;
    let mut rows = Vec::new();
    for (chunk, group) in entries.chunks(setups.len()).zip(tasks.chunks(setups.len())) {
        let (si, m, _) = group[0];
        let seq = chunk
            .iter()
            .find(|e| e.kind == ScheduleKind::Sequential)
            .expect("sequential")
            .cycles as f64;
        let s = &specs[si];
        rows.push(ScheduleRow {
            hidden_dim: s.hidden_dim,
            input_dim: s.input_dim,
            seq_len: s.seq_len,
            budget: m,
            entries: chunk
                .iter()
                .map(|e| ScheduleEntry {
                    speedup: seq / e.cycles as f64,
                    ..e.clone()
                })
                .collect(),
        });
    }
    Ok(ScheduleTable { rows })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigEntry {
    pub hidden_dim: usize,
    pub input_dim: usize,
    pub budget: usize,
    pub k_opt: usize,
    /// Add Reduce tree level whose outputs feed the accumulators.
    pub tap_level: u32,
    pub layout_id: String,
    pub cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigTable {
    pub version: u32,
    pub schedule: ScheduleKind,
    pub reconfig: bool,
    pub seq_len: usize,
    pub entries: Vec<ConfigEntry>,
}

impl ConfigTable {
    pub const VERSION: u32 = 1;

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("table serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(s)
            .map_err(|e| SharpError::Format(format!("config table: {e}")))?;
        if t.version != Self::VERSION {
            return Err(SharpError::Format(format!(
                "config table version {} unsupported",
                t.version
            )));
        }
        Ok(t)
    }

    pub fn lookup(
        &self,
        hidden_dim: usize,
        input_dim: usize,
        budget: usize,
    ) -> Option<&ConfigEntry> {
        self.entries
            .iter()
            .find(|e| e.hidden_dim == hidden_dim && e.input_dim == input_dim && e.budget == budget)
    }
}

/// Per-(model, budget) optimal tile for `kind`, sorted by key.
pub fn build_config_table(
    specs: &[LstmModelSpec],
    template: &HardwareConfig,
    budgets: &[usize],
    kind: ScheduleKind,
    reconfig: bool,
    jobs: usize,
) -> Result<ConfigTable> {
    let mut keys: Vec<(usize, usize)> = Vec::new();
    for (si, _) in specs.iter().enumerate() {
        for &m in budgets {
            keys.push((si, m));
        }
    }
    let sweeps = par_map(jobs, &keys, |&(si, m)| {
        sweep_k(&specs[si], &template.with_budget(m), kind, reconfig, 1)
    })?;
    let mut entries: Vec<ConfigEntry> = keys
        .iter()
        .zip(sweeps)
        .map(|(&(si, m), sw)| {
            let hw = template.with_budget(m);
            let tile = TileConfig::new(&hw, sw.k_opt).expect("swept tile is admissible");
            ConfigEntry {
                hidden_dim: specs[si].hidden_dim,
                input_dim: specs[si].input_dim,
                budget: m,
                k_opt: sw.k_opt,
                tap_level: tile.tap_level(&hw),
                layout_id: format!(
                    "k{}-g{}-c{}{}",
                    tile.k_eff,
                    tile.row_groups,
                    tile.cols_per_cycle,
                    if reconfig { "-r" } else { "" }
                ),
                cycles: sw.best().cycles,
            }
        })
        .collect();
    entries.sort_by_key(|e| (e.hidden_dim, e.input_dim, e.budget));
    entries.dedup_by_key(|e| (e.hidden_dim, e.input_dim, e.budget));
    Ok(ConfigTable {
        version: ConfigTable::VERSION,
        schedule: kind,
        reconfig,
        seq_len: specs.first().map_or(DEFAULT_SEQ_LEN, |s| s.seq_len),
        entries,
    })
}
