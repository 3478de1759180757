//! Step programs for the five scheduling schemes, and the analytic
//! critical-path model used to cross-check the cycle simulator.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::arch::{HardwareConfig, TileConfig};
use crate::error::{Result, SharpError};
use crate::lstm::{Gate, LstmModelSpec};
use crate::tiling::{plan_mvm, DispatchPlan, RowBlock};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Sequential,
    Batch,
    Intergate,
    Unfolded,
    EPurStyle,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 5] = [
        ScheduleKind::Sequential,
        ScheduleKind::Batch,
        ScheduleKind::Intergate,
        ScheduleKind::Unfolded,
        ScheduleKind::EPurStyle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Sequential => "sequential",
            ScheduleKind::Batch => "batch",
            ScheduleKind::Intergate => "intergate",
            ScheduleKind::Unfolded => "unfolded",
            ScheduleKind::EPurStyle => "epur-style",
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScheduleKind {
    type Err = SharpError;

    fn from_str(s: &str) -> Result<Self> {
        ScheduleKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                let names: Vec<&str> = ScheduleKind::ALL.iter().map(|k| k.name()).collect();
                SharpError::Config(format!(
                    "unknown schedule '{s}' (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseKind {
    MvmDispatch,
    Activation,
    CellUpdate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Operand {
    Input,
    Hidden,
    Fused,
}

/// Which dispatch plan an MVM phase walks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanId {
    /// One gate, H rows x (D + H) columns.
    Gate,
    /// Gate-interleaved 4H rows x (D + H) columns.
    Fused,
    /// Gate-interleaved 4H rows x D columns.
    Input,
    /// Gate-interleaved 4H rows x H columns.
    Hidden,
}

/// Half-open range of hidden-unit indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowRange {
    pub start: usize,
    pub len: usize,
}

impl RowRange {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn contains(&self, r: usize) -> bool {
        r >= self.start && r < self.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub id: usize,
    pub step: usize,
    pub kind: PhaseKind,
    pub gates: Vec<Gate>,
    pub operand: Option<Operand>,
    pub plan: Option<PlanId>,
    /// Row block within `plan` (MVM phases only).
    pub block: usize,
    pub rows: RowRange,
    pub k_used: usize,
    /// Column passes (MVM phases only).
    pub passes: u64,
    /// Lower issues first when several MVM phases are ready.
    pub priority: u8,
    /// MVM result goes to the intermediate buffer rather than the MFU.
    pub to_buffer: bool,
    pub depends_on: Vec<usize>,
}

impl Phase {
    /// Elements the phase hands to the MFU or Cell Updater.
    pub fn elements(&self) -> usize {
        match self.kind {
            PhaseKind::CellUpdate => self.rows.len,
            _ => self.rows.len * self.gates.len(),
        }
    }

    pub fn label(&self) -> String {
        let gates: String = self.gates.iter().map(|g| g.name()).collect();
        format!(
            "#{} t{} {:?} {} rows {}..{}",
            self.id,
            self.step,
            self.kind,
            gates,
            self.rows.start,
            self.rows.end()
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProgramPlans {
    pub gate: Option<DispatchPlan>,
    pub fused: Option<DispatchPlan>,
    pub input: Option<DispatchPlan>,
    pub hidden: Option<DispatchPlan>,
}

impl ProgramPlans {
    pub fn get(&self, id: PlanId) -> Option<&DispatchPlan> {
        match id {
            PlanId::Gate => self.gate.as_ref(),
            PlanId::Fused => self.fused.as_ref(),
            PlanId::Input => self.input.as_ref(),
            PlanId::Hidden => self.hidden.as_ref(),
        }
    }
}

/// Dependency-annotated phase list; phase ids are indices and every
/// dependency points to a smaller id, so program order is topological.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepProgram {
    pub kind: ScheduleKind,
    pub spec: LstmModelSpec,
    pub total_macs: usize,
    pub tile: TileConfig,
    pub padding_reconfig: bool,
    pub plans: ProgramPlans,
    pub phases: Vec<Phase>,
    /// Buffers that overflow but were allowed to run anyway.
    pub capacity_violations: Vec<String>,
}

struct Builder {
    phases: Vec<Phase>,
    /// Configured tile width; sets the Cell Updater's rows per cycle.
    k_eff: usize,
}

impl Builder {
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        step: usize,
        kind: PhaseKind,
        gates: Vec<Gate>,
        operand: Option<Operand>,
        plan: Option<PlanId>,
        block: usize,
        rows: RowRange,
        k_used: usize,
        passes: u64,
        priority: u8,
        to_buffer: bool,
        depends_on: Vec<usize>,
    ) -> usize {
        let id = self.phases.len();
        self.phases.push(Phase {
            id,
            step,
            kind,
            gates,
            operand,
            plan,
            block,
            rows,
            k_used,
            passes,
            priority,
            to_buffer,
            depends_on,
        });
        id
    }

    fn mvm(
        &mut self,
        step: usize,
        gates: Vec<Gate>,
        operand: Operand,
        plan: PlanId,
        block: usize,
        blk: &RowBlock,
        fused: bool,
        priority: u8,
        to_buffer: bool,
        deps: Vec<usize>,
    ) -> usize {
        let rows = if fused {
            RowRange {
                start: blk.row_start / 4,
                len: blk.rows_covered / 4,
            }
        } else {
            RowRange {
                start: blk.row_start,
                len: blk.rows_covered,
            }
        };
        self.push(
            step,
            PhaseKind::MvmDispatch,
            gates,
            Some(operand),
            Some(plan),
            block,
            rows,
            blk.k_used,
            blk.col_passes as u64,
            priority,
            to_buffer,
            deps,
        )
    }

    fn activation(&mut self, src: usize) -> usize {
        let p = &self.phases[src];
        let (step, gates, rows, k) = (p.step, p.gates.clone(), p.rows, p.k_used);
        self.push(
            step,
            PhaseKind::Activation,
            gates,
            None,
            None,
            0,
            rows,
            k,
            0,
            0,
            false,
            vec![src],
        )
    }

    fn cell_update(&mut self, step: usize, rows: RowRange, deps: Vec<usize>) -> usize {
        let k_used = self.k_eff;
        self.push(
            step,
            PhaseKind::CellUpdate,
            Gate::ALL.to_vec(),
            None,
            None,
            0,
            rows,
            k_used,
            0,
            0,
            false,
            deps,
        )
    }

    /// Fused blocks, each followed by its activation and a pipelined cell
    /// update. Returns (mvm ids, cell-update ids).
    fn fused_step(
        &mut self,
        step: usize,
        plan: &DispatchPlan,
        plan_id: PlanId,
        operand: Operand,
        block_deps: impl Fn(usize) -> Vec<usize>,
    ) -> (Vec<usize>, Vec<usize>) {
        let mut mvms = Vec::with_capacity(plan.blocks.len());
        let mut cells = Vec::with_capacity(plan.blocks.len());
        for (b, blk) in plan.blocks.iter().enumerate() {
            let m = self.mvm(
                step,
                Gate::ALL.to_vec(),
                operand,
                plan_id,
                b,
                blk,
                true,
                0,
                false,
                block_deps(b),
            );
            mvms.push(m);
        }
        for &m in &mvms {
            let a = self.activation(m);
            let rows = self.phases[a].rows;
            cells.push(self.cell_update(step, rows, vec![a]));
        }
        (mvms, cells)
    }
}

/// Whether splitting each step into hidden MVMs plus next-step input filler
/// beats dispatching fused blocks. Splitting costs extra column passes when
/// the columns of D and H each fit in fewer passes together than apart.
fn unfolding_pays(
    hw: &HardwareConfig,
    tile: &TileConfig,
    fused: &DispatchPlan,
    input: &DispatchPlan,
    hidden: &DispatchPlan,
) -> bool {
    let st = StageTiming::new(hw);
    let (_, fused_end) = fused_step_end(&st, fused, tile.k_eff);
    let (h_mvm, h_end) = fused_step_end(&st, hidden, tile.k_eff);
    h_mvm + (h_end - h_mvm).max(input.dispatch_cycles) < fused_end
}

fn intermediate_requirement(spec: &LstmModelSpec, hw: &HardwareConfig, steps: u64) -> u64 {
    steps * 4 * spec.hidden_dim as u64 * hw.accumulator_bytes_per_element
}

pub fn build_program(
    kind: ScheduleKind,
    spec: &LstmModelSpec,
    hw: &HardwareConfig,
    tile: &TileConfig,
    padding_reconfig: bool,
) -> Result<StepProgram> {
    spec.validate()?;
    hw.validate()?;
    let tile = TileConfig::new(hw, tile.k_eff)?;
    let (d, h, t_len) = (spec.input_dim, spec.hidden_dim, spec.seq_len);
    let mut plans = ProgramPlans::default();
    let mut capacity_violations = Vec::new();
    let mut b = Builder {
        phases: Vec::new(),
        k_eff: tile.k_eff,
    };

    match kind {
        ScheduleKind::Sequential | ScheduleKind::Batch => {
            let plan = plan_mvm(h, d + h, hw, &tile, padding_reconfig);
            let mut prev_cells: Vec<usize> = Vec::new();
            for t in 0..t_len {
                let mut cells = Vec::new();
                if kind == ScheduleKind::Sequential {
                    let mut acts = vec![Vec::with_capacity(4); plan.blocks.len()];
                    for gate in Gate::ALL {
                        for (bi, blk) in plan.blocks.iter().enumerate() {
                            let m = b.mvm(
                                t,
                                vec![gate],
                                Operand::Fused,
                                PlanId::Gate,
                                bi,
                                blk,
                                false,
                                0,
                                false,
                                prev_cells.clone(),
                            );
                            acts[bi].push(b.activation(m));
                        }
                    }
                    // the cell-update chain trails gate O block by block
                    for (blk, deps) in plan.blocks.iter().zip(acts) {
                        let rows = RowRange {
                            start: blk.row_start,
                            len: blk.rows_covered,
                        };
                        cells.push(b.cell_update(t, rows, deps));
                    }
                } else {
                    for (bi, blk) in plan.blocks.iter().enumerate() {
                        let mut acts = Vec::with_capacity(4);
                        for gate in Gate::ALL {
                            let m = b.mvm(
                                t,
                                vec![gate],
                                Operand::Fused,
                                PlanId::Gate,
                                bi,
                                blk,
                                false,
                                0,
                                false,
                                prev_cells.clone(),
                            );
                            acts.push(b.activation(m));
                        }
                        let rows = RowRange {
                            start: blk.row_start,
                            len: blk.rows_covered,
                        };
                        cells.push(b.cell_update(t, rows, acts));
                    }
                }
                prev_cells = cells;
            }
            plans.gate = Some(plan);
        }
        ScheduleKind::Intergate => {
            let plan = plan_mvm(4 * h, d + h, hw, &tile, padding_reconfig);
            let mut prev_cells: Vec<usize> = Vec::new();
            for t in 0..t_len {
                let deps = prev_cells.clone();
                prev_cells = b
                    .fused_step(t, &plan, PlanId::Fused, Operand::Fused, |_| deps.clone())
                    .1;
            }
            plans.fused = Some(plan);
        }
        ScheduleKind::Unfolded => {
            let required = intermediate_requirement(spec, hw, 1);
            if required > hw.intermediate_buffer_bytes {
                return Err(SharpError::Capacity {
                    buffer: "intermediate",
                    required,
                    available: hw.intermediate_buffer_bytes,
                });
            }
            let fused = plan_mvm(4 * h, d + h, hw, &tile, padding_reconfig);
            let input = plan_mvm(4 * h, d, hw, &tile, padding_reconfig);
            let hidden = plan_mvm(4 * h, h, hw, &tile, padding_reconfig);
            let split = unfolding_pays(hw, &tile, &fused, &input, &hidden);
            // step 0 has both operands available up front
            let (_, mut prev_cells) =
                b.fused_step(0, &fused, PlanId::Fused, Operand::Fused, |_| Vec::new());
            let mut prev_hidden: Vec<usize> = Vec::new();
            for t in 1..t_len {
                if !split {
                    let deps = prev_cells.clone();
                    prev_cells = b
                        .fused_step(t, &fused, PlanId::Fused, Operand::Fused, |_| deps.clone())
                        .1;
                    continue;
                }
                let inputs: Vec<usize> = input
                    .blocks
                    .iter()
                    .enumerate()
                    .map(|(bi, blk)| {
                        // buffer slot bi is free once the previous step's hidden block consumed it
                        let deps = prev_hidden.get(bi).map(|&p| vec![p]).unwrap_or_default();
                        b.mvm(
                            t,
                            Gate::ALL.to_vec(),
                            Operand::Input,
                            PlanId::Input,
                            bi,
                            blk,
                            true,
                            1,
                            true,
                            deps,
                        )
                    })
                    .collect();
                let pc = prev_cells.clone();
                let (hid, cells) =
                    b.fused_step(t, &hidden, PlanId::Hidden, Operand::Hidden, |bi| {
                        let mut deps = pc.clone();
                        deps.push(inputs[bi]);
                        deps
                    });
                prev_hidden = hid;
                prev_cells = cells;
            }
            plans.fused = Some(fused);
            plans.input = Some(input);
            plans.hidden = Some(hidden);
        }
        ScheduleKind::EPurStyle => {
            let required = intermediate_requirement(spec, hw, t_len as u64);
            if required > hw.intermediate_buffer_bytes {
                capacity_violations.push(format!(
                    "intermediate: {required} bytes required, {} available",
                    hw.intermediate_buffer_bytes
                ));
            }
            let input = plan_mvm(4 * h, d, hw, &tile, padding_reconfig);
            let hidden = plan_mvm(4 * h, h, hw, &tile, padding_reconfig);
            let all_inputs: Vec<Vec<usize>> = (0..t_len)
                .map(|t| {
                    input
                        .blocks
                        .iter()
                        .enumerate()
                        .map(|(bi, blk)| {
                            b.mvm(
                                t,
                                Gate::ALL.to_vec(),
                                Operand::Input,
                                PlanId::Input,
                                bi,
                                blk,
                                true,
                                0,
                                true,
                                Vec::new(),
                            )
                        })
                        .collect()
                })
                .collect();
            let mut prev_cells: Vec<usize> = Vec::new();
            for (t, inputs) in all_inputs.iter().enumerate() {
                let pc = prev_cells.clone();
                prev_cells = b
                    .fused_step(t, &hidden, PlanId::Hidden, Operand::Hidden, |bi| {
                        let mut deps = pc.clone();
                        deps.push(inputs[bi]);
                        deps
                    })
                    .1;
            }
            plans.input = Some(input);
            plans.hidden = Some(hidden);
        }
    }

    let program = StepProgram {
        kind,
        spec: spec.clone(),
        total_macs: hw.total_macs,
        tile,
        padding_reconfig,
        plans,
        phases: b.phases,
        capacity_violations,
    };
    debug_assert!(program.validate().is_ok());
    Ok(program)
}

impl StepProgram {
    pub fn steps(&self) -> usize {
        self.spec.seq_len
    }

    /// True when some MVM phase works on a separate input or hidden operand.
    pub fn is_split(&self) -> bool {
        self.phases
            .iter()
            .any(|p| matches!(p.operand, Some(Operand::Input | Operand::Hidden)))
    }

    /// Checks the structural invariants: acyclic dependencies, each
    /// (step, gate, row) activated exactly once, every cell update preceded
    /// by all four gates' activations, and every activation preceded by both
    /// operand contributions.
    pub fn validate(&self) -> Result<()> {
        self.check_dag()?;
        let err = |m: String| Err(SharpError::Program(m));
        let h = self.spec.hidden_dim;
        let mut activated = vec![0u8; self.steps() * 4 * h];
        let mut updated = vec![0u8; self.steps() * h];
        for p in &self.phases {
            match p.kind {
                PhaseKind::MvmDispatch => {}
                PhaseKind::Activation => {
                    let mut input = vec![false; p.rows.len];
                    let mut hidden = vec![false; p.rows.len];
                    let mut mark = |q: &Phase| {
                        for r in p.rows.start..p.rows.end() {
                            if q.rows.contains(r) && q.gates.iter().all(|g| p.gates.contains(g)) {
                                let idx = r - p.rows.start;
                                match q.operand {
                                    Some(Operand::Fused) => {
                                        input[idx] = true;
                                        hidden[idx] = true;
                                    }
                                    Some(Operand::Input) => input[idx] = true,
                                    Some(Operand::Hidden) => hidden[idx] = true,
                                    None => {}
                                }
                            }
                        }
                    };
                    for &d in &p.depends_on {
                        let q = &self.phases[d];
                        if q.kind == PhaseKind::MvmDispatch {
                            mark(q);
                            for &dd in &q.depends_on {
                                let qq = &self.phases[dd];
                                if qq.kind == PhaseKind::MvmDispatch && qq.step == p.step {
                                    mark(qq);
                                }
                            }
                        }
                    }
                    if !(input.iter().all(|&v| v) && hidden.iter().all(|&v| v)) {
                        return err(format!("{} lacks an operand contribution", p.label()));
                    }
                    for g in &p.gates {
                        for r in p.rows.start..p.rows.end() {
                            activated[(p.step * 4 + g.index()) * h + r] += 1;
                        }
                    }
                }
                PhaseKind::CellUpdate => {
                    for r in p.rows.start..p.rows.end() {
                        for g in Gate::ALL {
                            let covered = p.depends_on.iter().any(|&d| {
                                let q = &self.phases[d];
                                q.kind == PhaseKind::Activation
                                    && q.step == p.step
                                    && q.gates.contains(&g)
                                    && q.rows.contains(r)
                            });
                            if !covered {
                                return err(format!(
                                    "{} runs before gate {} of row {r}",
                                    p.label(),
                                    g.name()
                                ));
                            }
                        }
                        updated[p.step * h + r] += 1;
                    }
                }
            }
        }
        if let Some(i) = activated.iter().position(|&c| c != 1) {
            let (step, gate, row) = (i / (4 * h), (i / h) % 4, i % h);
            return err(format!(
                "step {step} gate {} row {row} activated {} times",
                Gate::from_index(gate).name(),
                activated[i]
            ));
        }
        if let Some(i) = updated.iter().position(|&c| c != 1) {
            return err(format!(
                "step {} row {} cell-updated {} times",
                i / h,
                i % h,
                updated[i]
            ));
        }
        Ok(())
    }

    /// Well-formedness needed for execution: ids are indices, dependencies
    /// point backwards, steps are in range and MVM phases reference a block
    /// of a present plan.
    pub fn check_dag(&self) -> Result<()> {
        let err = |m: String| Err(SharpError::Program(m));
        for (i, p) in self.phases.iter().enumerate() {
            if p.id != i {
                return err(format!("phase {i} has id {}", p.id));
            }
            if let Some(&bad) = p.depends_on.iter().find(|&&d| d >= i) {
                return err(format!("{} depends on later phase {bad}", p.label()));
            }
            if p.step >= self.steps() || p.rows.end() > self.spec.hidden_dim || p.rows.len == 0 {
                return err(format!("{} is out of range", p.label()));
            }
            if p.kind == PhaseKind::MvmDispatch {
                let plan = p.plan.and_then(|id| self.plans.get(id));
                let ok = p.operand.is_some()
                    && p.passes > 0
                    && plan.is_some_and(|pl| p.block < pl.blocks.len());
                if !ok {
                    return err(format!("{} is missing dispatch data", p.label()));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("program serializes")
    }
}

/// Analytic per-step cycle breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPathEstimate {
    /// Compute Unit cycles of one steady-state step.
    pub mvm_cycles: u64,
    /// Cycles from the last pass of a step until the next step may issue.
    pub serial_tail_cycles: u64,
    /// Part of the tail hidden by next-step filler work.
    pub overlap_cycles: u64,
    /// Steady-state cycles per step: mvm + tail - overlap.
    pub cycles_per_step: u64,
    pub total_cycles: u64,
}

/// Latency parameters of the stages behind the Compute Unit.
struct StageTiming {
    add_reduce: u64,
    mfu_depth: u64,
    mfu_count: usize,
    updater_depth: u64,
}

impl StageTiming {
    fn new(hw: &HardwareConfig) -> Self {
        Self {
            add_reduce: hw.add_reduce_depth(),
            mfu_depth: hw.mfu_pipeline_depth,
            mfu_count: hw.mfu_count,
            updater_depth: hw.cell_updater_pipeline_depth,
        }
    }

    fn mfu_issue(&self, elements: usize, k_used: usize) -> u64 {
        elements.div_ceil(self.mfu_count.min(k_used)) as u64
    }
}

/// One activation-bound block of a step: its last pass (relative to the
/// step's first pass), MFU issue cycles and owning cell-update group.
struct TailBlock {
    last_pass: u64,
    mfu_issue: u64,
    group: usize,
}

/// Cycle (relative to the step's first pass) at which the next step may
/// issue: a max-plus recurrence through the MFU and Cell Updater, each with
/// one-block-at-a-time issue, ignoring back-pressure.
fn step_end(st: &StageTiming, blocks: &[TailBlock], groups: &[(u64, usize)]) -> u64 {
    let mut group_ready = vec![0u64; groups.len()];
    let mut mfu_free = 0u64;
    for blk in blocks {
        let start = (blk.last_pass + st.add_reduce + 1).max(mfu_free);
        mfu_free = start + blk.mfu_issue;
        let done = mfu_free - 1 + st.mfu_depth;
        group_ready[blk.group] = group_ready[blk.group].max(done);
    }
    let mut upd_free = 0u64;
    let mut end = 0u64;
    for (g, &(issue, _)) in groups.iter().enumerate() {
        let start = group_ready[g].max(upd_free);
        upd_free = start + issue;
        end = end.max(upd_free - 1 + st.updater_depth);
    }
    end
}

fn updater_issue(rows: usize, k_used: usize) -> u64 {
    rows.div_ceil((k_used / 4).max(1)) as u64
}

/// Step end for fused (gate-interleaved) blocks with per-block cell updates.
fn fused_step_end(st: &StageTiming, plan: &DispatchPlan, k_eff: usize) -> (u64, u64) {
    let mut cursor = 0u64;
    let mut blocks = Vec::new();
    let mut groups = Vec::new();
    for (g, blk) in plan.blocks.iter().enumerate() {
        cursor += blk.col_passes as u64;
        blocks.push(TailBlock {
            last_pass: cursor - 1,
            mfu_issue: st.mfu_issue(blk.rows_covered, blk.k_used),
            group: g,
        });
        groups.push((updater_issue(blk.rows_covered / 4, k_eff), g));
    }
    (cursor, step_end(st, &blocks, &groups))
}

pub fn critical_path(
    kind: ScheduleKind,
    spec: &LstmModelSpec,
    hw: &HardwareConfig,
    tile: &TileConfig,
    padding_reconfig: bool,
) -> Result<CriticalPathEstimate> {
    let program = build_program(kind, spec, hw, tile, padding_reconfig)?;
    let st = StageTiming::new(hw);
    let steps = spec.seq_len as u64;
    let est = |mvm: u64, end: u64, overlap: u64, total: u64| CriticalPathEstimate {
        mvm_cycles: mvm,
        serial_tail_cycles: end - mvm,
        overlap_cycles: overlap,
        cycles_per_step: end - overlap,
        total_cycles: total,
    };
    Ok(match kind {
        ScheduleKind::Sequential | ScheduleKind::Batch => {
            let plan = program.plans.gate.as_ref().expect("gate plan");
            let mut cursor = 0u64;
            let mut blocks = Vec::new();
            let mut groups = Vec::new();
            if kind == ScheduleKind::Sequential {
                for _gate in Gate::ALL {
                    for (g, blk) in plan.blocks.iter().enumerate() {
                        cursor += blk.col_passes as u64;
                        blocks.push(TailBlock {
                            last_pass: cursor - 1,
                            mfu_issue: st.mfu_issue(blk.rows_covered, blk.k_used),
                            group: g,
                        });
                    }
                }
                groups.extend(
                    plan.blocks
                        .iter()
                        .enumerate()
                        .map(|(g, blk)| (updater_issue(blk.rows_covered, tile.k_eff), g)),
                );
            } else {
                for (g, blk) in plan.blocks.iter().enumerate() {
                    for _gate in Gate::ALL {
                        cursor += blk.col_passes as u64;
                        blocks.push(TailBlock {
                            last_pass: cursor - 1,
                            mfu_issue: st.mfu_issue(blk.rows_covered, blk.k_used),
                            group: g,
                        });
                    }
                    groups.push((updater_issue(blk.rows_covered, tile.k_eff), g));
                }
            }
            let end = step_end(&st, &blocks, &groups);
            est(cursor, end, 0, steps * end + 1)
        }
        ScheduleKind::Intergate => {
            let (mvm, end) = fused_step_end(
                &st,
                program.plans.fused.as_ref().expect("fused plan"),
                tile.k_eff,
            );
            est(mvm, end, 0, steps * end + 1)
        }
        ScheduleKind::Unfolded if !program.is_split() => {
            let (mvm, end) = fused_step_end(
                &st,
                program.plans.fused.as_ref().expect("fused plan"),
                tile.k_eff,
            );
            est(mvm, end, 0, steps * end + 1)
        }
        ScheduleKind::Unfolded => {
            let (f_mvm, f_end) = fused_step_end(
                &st,
                program.plans.fused.as_ref().expect("fused plan"),
                tile.k_eff,
            );
            let (h_mvm, h_end) = fused_step_end(
                &st,
                program.plans.hidden.as_ref().expect("hidden plan"),
                tile.k_eff,
            );
            let filler = program
                .plans
                .input
                .as_ref()
                .expect("input plan")
                .dispatch_cycles;
            let h_tail = h_end - h_mvm;
            let overlap = h_tail.min(filler);
            let total = if steps == 1 {
                f_end + 1
            } else {
                let first = f_mvm + (f_end - f_mvm).max(filler);
                let steady = h_mvm + h_tail.max(filler);
                first + (steps - 2) * steady + h_end + 1
            };
            CriticalPathEstimate {
                mvm_cycles: h_mvm + filler,
                serial_tail_cycles: h_tail,
                overlap_cycles: overlap,
                cycles_per_step: h_mvm + filler + h_tail - overlap,
                total_cycles: total,
            }
        }
        ScheduleKind::EPurStyle => {
            let (h_mvm, h_end) = fused_step_end(
                &st,
                program.plans.hidden.as_ref().expect("hidden plan"),
                tile.k_eff,
            );
            let inputs = program
                .plans
                .input
                .as_ref()
                .expect("input plan")
                .dispatch_cycles;
            est(h_mvm, h_end, 0, steps * inputs + steps * h_end + 1)
        }
    })
}
