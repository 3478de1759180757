//! Cycle-level simulator, functional shadow and design-space explorer for a
//! reconfigurable, pipelined LSTM inference accelerator.

pub mod arch;
pub mod energy;
pub mod error;
pub mod explore;
pub mod formats;
pub mod lstm;
pub mod numeric;
pub mod schedule;
pub mod shadow;
pub mod sim;
pub mod tiling;

pub use arch::{check_capacity, derive_tiles, CapacityReport, HardwareConfig, TileConfig, BUDGETS};
pub use energy::{estimate_energy, CostModel, EnergyReport};
pub use error::{Result, SharpError};
pub use explore::{
    build_config_table, compare_schedules, padding_gain, par_map, sweep_grid, sweep_k, ConfigTable,
    KSweep, ScheduleSetup, ScheduleTable, SweepResult, TileChoice,
};
pub use formats::RunManifest;
pub use lstm::{sequence_eval, Gate, LstmModelSpec, LstmState, LstmWeights, Matrix};
pub use numeric::{NumericPolicy, Precision};
pub use schedule::{
    build_program, critical_path, CriticalPathEstimate, Phase, PhaseKind, ScheduleKind, StepProgram,
};
pub use shadow::{functional_shadow, functional_shadow_against, reference_trace};
pub use sim::{simulate, simulate_with, SimOptions, SimReport, StageStats};
pub use tiling::{functional_tiled_mvm, interleave_weights, plan_mvm, DispatchPlan, WeightLayout};
