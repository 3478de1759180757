//! Cycle-by-cycle simulation of the Compute Unit, Add Reduce, MFU and Cell
//! Updater executing a [`StepProgram`].

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::arch::HardwareConfig;
use crate::error::{Result, SharpError};
use crate::schedule::{PhaseKind, ScheduleKind, StepProgram};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageStats {
    pub busy: u64,
    pub stall_accumulator: u64,
    pub stall_downstream: u64,
    pub stall_dependency: u64,
    pub idle: u64,
}

impl StageStats {
    pub fn stall(&self) -> u64 {
        self.stall_accumulator + self.stall_downstream + self.stall_dependency
    }

    pub fn total(&self) -> u64 {
        self.busy + self.stall() + self.idle
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageBreakdown {
    pub compute_unit: StageStats,
    pub add_reduce: StageStats,
    pub mfu: StageStats,
    pub cell_updater: StageStats,
}

impl StageBreakdown {
    pub fn stages(&self) -> [(&'static str, StageStats); 4] {
        [
            ("compute-unit", self.compute_unit),
            ("add-reduce", self.add_reduce),
            ("mfu", self.mfu),
            ("cell-updater", self.cell_updater),
        ]
    }
}

/// Element-granularity access counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferAccess {
    pub reads: u64,
    pub writes: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityCounters {
    pub multiplies: u64,
    pub adds: u64,
    pub activations: u64,
    pub cell_updates: u64,
    pub padded_lane_cycles: u64,
    pub weight: BufferAccess,
    pub input_hidden: BufferAccess,
    pub cell_state: BufferAccess,
    pub intermediate: BufferAccess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub schedule: ScheduleKind,
    pub k_eff: usize,
    pub padding_reconfig: bool,
    pub total_macs: usize,
    pub total_cycles: u64,
    pub cycles_per_step: Vec<u64>,
    pub stages: StageBreakdown,
    pub useful_mac_ops: u64,
    pub utilization: f64,
    pub wall_time_s: f64,
    pub activity: ActivityCounters,
    pub intermediate_peak_bytes: u64,
    pub capacity_violations: Vec<String>,
}

impl SimReport {
    /// Mean cycles per step excluding the first and last step when there
    /// are at least three.
    pub fn steady_state_cycles_per_step(&self) -> f64 {
        let s = &self.cycles_per_step;
        if s.is_empty() {
            return 0.0;
        }
        let inner = if s.len() >= 3 {
            &s[1..s.len() - 1]
        } else {
            &s[..]
        };
        inner.iter().sum::<u64>() as f64 / inner.len() as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub cycle: u64,
    pub stage: &'static str,
    pub event: String,
}

pub fn trace_csv(events: &[TraceEvent]) -> String {
    let mut out = String::from("cycle,stage,event\n");
    for e in events {
        out.push_str(&format!("{},{},{}\n", e.cycle, e.stage, e.event));
    }
    out
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    pub trace: bool,
}

#[derive(Debug, Clone, Copy)]
struct Token {
    phase: usize,
    last: bool,
}

/// An in-progress multi-cycle issue on a stage.
#[derive(Debug, Clone, Copy)]
struct Issuing {
    phase: usize,
    remaining: u64,
}

pub fn simulate(program: &StepProgram, hw: &HardwareConfig) -> Result<SimReport> {
    simulate_with(program, hw, &SimOptions::default()).map(|(r, _)| r)
}

struct Machine<'a> {
    program: &'a StepProgram,
    hw: &'a HardwareConfig,
    cycle: u64,
    pending: Vec<usize>,
    succ: Vec<Vec<usize>>,
    done: Vec<bool>,
    done_count: usize,
    cu_ready: BTreeSet<(u8, usize)>,
    mfu_queue: VecDeque<usize>,
    upd_queue: VecDeque<usize>,
    events: BinaryHeap<Reverse<(u64, usize)>>,
    mvm_left: usize,
    act_left: usize,
    cell_left: usize,
    step_end: Vec<u64>,
    buffered: u64,
    peak: u64,
    activity: ActivityCounters,
    trace: Option<Vec<TraceEvent>>,
    progress: u64,
}

impl Machine<'_> {
    fn log(&mut self, stage: &'static str, event: impl FnOnce() -> String) {
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceEvent {
                cycle: self.cycle,
                stage,
                event: event(),
            });
        }
    }

    fn make_ready(&mut self, id: usize) {
        let p = &self.program.phases[id];
        match p.kind {
            PhaseKind::MvmDispatch => {
                self.cu_ready.insert((p.priority, id));
            }
            PhaseKind::Activation => self.mfu_queue.push_back(id),
            PhaseKind::CellUpdate => self.upd_queue.push_back(id),
        }
    }

    fn buffer_bytes(&self, id: usize) -> u64 {
        self.program.phases[id].elements() as u64 * self.hw.accumulator_bytes_per_element
    }

    fn complete(&mut self, id: usize) {
        debug_assert!(!self.done[id]);
        self.done[id] = true;
        self.done_count += 1;
        self.progress = self.cycle;
        let p = &self.program.phases[id];
        match p.kind {
            PhaseKind::MvmDispatch => {
                for &d in &p.depends_on {
                    let q = &self.program.phases[d];
                    if q.to_buffer && q.step == p.step {
                        self.buffered -= self.buffer_bytes(d);
                    }
                }
            }
            PhaseKind::CellUpdate => {
                self.step_end[p.step] = self.step_end[p.step].max(self.cycle);
            }
            PhaseKind::Activation => {}
        }
        self.log("complete", || p.label());
        for i in 0..self.succ[id].len() {
            let s = self.succ[id][i];
            self.pending[s] -= 1;
            if self.pending[s] == 0 {
                self.make_ready(s);
            }
        }
    }
}

pub fn simulate_with(
    program: &StepProgram,
    hw: &HardwareConfig,
    opts: &SimOptions,
) -> Result<(SimReport, Option<Vec<TraceEvent>>)> {
    hw.validate()?;
    if program.total_macs != hw.total_macs {
        return Err(SharpError::Dimension {
            what: "program total_macs",
            expected: hw.total_macs,
            got: program.total_macs,
        });
    }
    program.check_dag()?;
    let phases = &program.phases;
    let n = phases.len();
    let d_ar = hw.add_reduce_depth() as usize;
    let deadlock_window =
        hw.add_reduce_depth() + hw.mfu_pipeline_depth + hw.cell_updater_pipeline_depth + 2;

    let mut succ = vec![Vec::new(); n];
    for p in phases {
        for &d in &p.depends_on {
            succ[d].push(p.id);
        }
    }
    let count = |k: PhaseKind| phases.iter().filter(|p| p.kind == k).count();
    let mut m = Machine {
        program,
        hw,
        cycle: 0,
        pending: phases.iter().map(|p| p.depends_on.len()).collect(),
        succ,
        done: vec![false; n],
        done_count: 0,
        cu_ready: BTreeSet::new(),
        mfu_queue: VecDeque::new(),
        upd_queue: VecDeque::new(),
        events: BinaryHeap::new(),
        mvm_left: count(PhaseKind::MvmDispatch),
        act_left: count(PhaseKind::Activation),
        cell_left: count(PhaseKind::CellUpdate),
        step_end: vec![0; program.steps()],
        buffered: 0,
        peak: 0,
        activity: ActivityCounters::default(),
        trace: opts.trace.then(Vec::new),
        progress: 0,
    };
    for id in 0..n {
        if m.pending[id] == 0 {
            m.make_ready(id);
        }
    }

    let mut stages = StageBreakdown::default();
    let mut ar: VecDeque<Option<Token>> = std::iter::repeat_n(None, d_ar).collect();
    let mut cu: Option<Issuing> = None;
    let mut mfu: Option<Issuing> = None;
    let mut upd: Option<Issuing> = None;
    let mut total_cycles = 0;

    while m.done_count < n {
        // completions first so same-cycle releases are visible to acquirers
        while let Some(&Reverse((c, id))) = m.events.peek() {
            if c != m.cycle {
                break;
            }
            m.events.pop();
            m.complete(id);
        }

        // Cell Updater
        if upd.is_none() {
            if let Some(id) = m.upd_queue.pop_front() {
                let p = &phases[id];
                let issue = p.rows.len.div_ceil((p.k_used / 4).max(1)) as u64;
                m.activity.cell_updates += p.rows.len as u64;
                m.activity.cell_state.reads += p.rows.len as u64;
                m.activity.cell_state.writes += p.rows.len as u64;
                m.activity.input_hidden.writes += p.rows.len as u64;
                m.cell_left -= 1;
                m.log("cell-updater", || format!("start {}", p.label()));
                upd = Some(Issuing {
                    phase: id,
                    remaining: issue,
                });
            }
        }
        match upd.as_mut() {
            Some(u) => {
                stages.cell_updater.busy += 1;
                u.remaining -= 1;
                if u.remaining == 0 {
                    m.events
                        .push(Reverse((m.cycle + hw.cell_updater_pipeline_depth, u.phase)));
                    upd = None;
                }
                m.progress = m.cycle;
            }
            None if m.cell_left > 0 => stages.cell_updater.stall_dependency += 1,
            None => stages.cell_updater.idle += 1,
        }

        // MFU
        if mfu.is_none() {
            if let Some(id) = m.mfu_queue.pop_front() {
                let p = &phases[id];
                let width = hw.mfu_count.min(p.k_used).max(1);
                let issue = p.elements().div_ceil(width) as u64;
                m.activity.activations += p.elements() as u64;
                m.act_left -= 1;
                m.log("mfu", || format!("start {}", p.label()));
                mfu = Some(Issuing {
                    phase: id,
                    remaining: issue,
                });
            }
        }
        match mfu.as_mut() {
            Some(u) => {
                stages.mfu.busy += 1;
                u.remaining -= 1;
                if u.remaining == 0 {
                    m.events
                        .push(Reverse((m.cycle + hw.mfu_pipeline_depth, u.phase)));
                    mfu = None;
                }
                m.progress = m.cycle;
            }
            None if m.act_left > 0 => stages.mfu.stall_dependency += 1,
            None => stages.mfu.idle += 1,
        }

        // Add Reduce: a fixed-depth shift register that freezes when the
        // block at its head cannot hand its accumulators downstream
        let occupied = ar.iter().any(Option::is_some);
        let frozen = match ar.front() {
            Some(Some(tok)) if tok.last => {
                !phases[tok.phase].to_buffer && m.mfu_queue.len() >= hw.mfu_queue_blocks
            }
            _ => false,
        };
        if frozen {
            stages.add_reduce.stall_downstream += 1;
        } else {
            if let Some(Some(tok)) = ar.pop_front() {
                m.progress = m.cycle;
                if tok.last {
                    if phases[tok.phase].to_buffer {
                        let bytes = m.buffer_bytes(tok.phase);
                        m.buffered += bytes;
                        m.peak = m.peak.max(m.buffered);
                        m.activity.intermediate.writes += phases[tok.phase].elements() as u64;
                    }
                    m.complete(tok.phase);
                }
            }
            if occupied {
                stages.add_reduce.busy += 1;
            } else if m.mvm_left > 0 {
                stages.add_reduce.stall_dependency += 1;
            } else {
                stages.add_reduce.idle += 1;
            }
        }

        // Compute Unit
        if frozen {
            stages.compute_unit.stall_accumulator += 1;
        } else {
            if cu.is_none() {
                if let Some((_, id)) = m.cu_ready.pop_first() {
                    let p = &phases[id];
                    let plan = program
                        .plans
                        .get(p.plan.expect("mvm plan"))
                        .expect("plan present");
                    let blk = &plan.blocks[p.block];
                    let useful = (p.elements() * plan.total_cols) as u64;
                    m.activity.multiplies += useful;
                    m.activity.adds += useful;
                    m.activity.padded_lane_cycles += blk.wasted_lane_cycles;
                    m.activity.weight.reads += p.passes * hw.total_macs as u64;
                    m.activity.input_hidden.reads += plan.total_cols as u64;
                    for &d in &p.depends_on {
                        if phases[d].to_buffer && phases[d].step == p.step {
                            m.activity.intermediate.reads += phases[d].elements() as u64;
                        }
                    }
                    m.mvm_left -= 1;
                    m.log("compute-unit", || format!("start {}", p.label()));
                    cu = Some(Issuing {
                        phase: id,
                        remaining: p.passes,
                    });
                }
            }
            match cu.as_mut() {
                Some(u) => {
                    stages.compute_unit.busy += 1;
                    u.remaining -= 1;
                    ar.push_back(Some(Token {
                        phase: u.phase,
                        last: u.remaining == 0,
                    }));
                    if u.remaining == 0 {
                        cu = None;
                    }
                    m.progress = m.cycle;
                }
                None => {
                    ar.push_back(None);
                    if m.mvm_left > 0 {
                        stages.compute_unit.stall_dependency += 1;
                    } else {
                        stages.compute_unit.idle += 1;
                    }
                }
            }
        }

        if m.done_count == n {
            total_cycles = m.cycle + 1;
            break;
        }
        if m.cycle - m.progress > deadlock_window {
            let blocked = (0..n)
                .filter(|&i| !m.done[i])
                .take(16)
                .map(|i| format!("{} (waiting on {} deps)", phases[i].label(), m.pending[i]))
                .collect();
            return Err(SharpError::Deadlock {
                cycle: m.cycle,
                blocked,
            });
        }
        m.cycle += 1;
    }

    let mut cycles_per_step = Vec::with_capacity(m.step_end.len());
    let mut prev = 0;
    for &end in &m.step_end {
        let end = (end + 1).max(prev);
        cycles_per_step.push(end - prev);
        prev = end;
    }
    let useful_mac_ops = if n == 0 {
        0
    } else {
        program.spec.useful_macs()
    };
    let utilization = if total_cycles == 0 {
        0.0
    } else {
        useful_mac_ops as f64 / (hw.total_macs as f64 * total_cycles as f64)
    };
    let report = SimReport {
        schedule: program.kind,
        k_eff: program.tile.k_eff,
        padding_reconfig: program.padding_reconfig,
        total_macs: hw.total_macs,
        total_cycles,
        cycles_per_step,
        stages,
        useful_mac_ops,
        utilization,
        wall_time_s: total_cycles as f64 / hw.frequency_hz,
        activity: m.activity,
        intermediate_peak_bytes: m.peak,
        capacity_violations: program.capacity_violations.clone(),
    };
    Ok((report, m.trace))
}
