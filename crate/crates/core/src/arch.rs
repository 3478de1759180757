//! Hardware parameterization, tile vocabulary and buffer capacity checks.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SharpError};
use crate::lstm::LstmModelSpec;

pub const KIB: u64 = 1024;
pub const MIB: u64 = 1024 * 1024;

/// Accelerator parameters. Every field has a default and may be overridden
/// from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HardwareConfig {
    pub total_macs: usize,
    pub k_base: usize,
    pub frequency_hz: f64,
    pub mfu_count: usize,
    pub mfu_pipeline_depth: u64,
    pub cell_updater_pipeline_depth: u64,
    pub add_reduce_extra_latency: u64,
    /// Completed accumulator blocks that may wait in front of the MFU.
    pub mfu_queue_blocks: usize,
    pub weight_buffer_bytes: u64,
    pub ih_buffer_bytes: u64,
    pub cell_state_bytes: u64,
    pub intermediate_buffer_bytes: u64,
    pub weight_bytes_per_element: u64,
    pub accumulator_bytes_per_element: u64,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        Self {
            total_macs: 4096,
            k_base: 32,
            frequency_hz: 5.0e8,
            mfu_count: 64,
            // ceil(29.14 ns / 2 ns)
            mfu_pipeline_depth: 15,
            cell_updater_pipeline_depth: 18,
            add_reduce_extra_latency: 1,
            mfu_queue_blocks: 2,
            weight_buffer_bytes: 26 * MIB,
            ih_buffer_bytes: 23 * MIB / 10,
            cell_state_bytes: 192 * KIB,
            intermediate_buffer_bytes: 24 * KIB,
            weight_bytes_per_element: 2,
            accumulator_bytes_per_element: 4,
        }
    }
}

/// The four MAC budgets of the reference design.
pub const BUDGETS: [usize; 4] = [1024, 4096, 16384, 65536];

impl HardwareConfig {
    pub fn with_macs(total_macs: usize) -> Self {
        Self {
            total_macs,
            ..Self::default()
        }
    }

    /// This configuration with a different MAC budget.
    pub fn with_budget(&self, total_macs: usize) -> Self {
        Self {
            total_macs,
            ..self.clone()
        }
    }

    pub fn n_vs_units(&self) -> usize {
        self.total_macs / self.k_base
    }

    /// Pipelined tree depth plus the accumulator write.
    pub fn add_reduce_depth(&self) -> u64 {
        self.n_vs_units().trailing_zeros() as u64 + self.add_reduce_extra_latency
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SharpError::Config(m));
        if self.k_base == 0 || !self.k_base.is_power_of_two() {
            return bad(format!("k_base {} must be a power of two", self.k_base));
        }
        if self.total_macs < 64 || !self.total_macs.is_power_of_two() {
            return bad(format!(
                "total_macs {} must be a power of two >= 64",
                self.total_macs
            ));
        }
        if !self.total_macs.is_multiple_of(self.k_base) {
            return bad(format!(
                "total_macs {} is not divisible by k_base {}",
                self.total_macs, self.k_base
            ));
        }
        if !(self.frequency_hz > 0.0 && self.frequency_hz.is_finite()) {
            return bad("frequency_hz must be positive".into());
        }
        if self.mfu_count == 0 || self.mfu_queue_blocks == 0 {
            return bad("mfu_count and mfu_queue_blocks must be positive".into());
        }
        if self.mfu_pipeline_depth == 0 || self.cell_updater_pipeline_depth == 0 {
            return bad("pipeline depths must be positive".into());
        }
        for (name, v) in [
            ("weight_buffer_bytes", self.weight_buffer_bytes),
            ("ih_buffer_bytes", self.ih_buffer_bytes),
            ("cell_state_bytes", self.cell_state_bytes),
            ("intermediate_buffer_bytes", self.intermediate_buffer_bytes),
            ("weight_bytes_per_element", self.weight_bytes_per_element),
            (
                "accumulator_bytes_per_element",
                self.accumulator_bytes_per_element,
            ),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        Ok(())
    }

    /// Peak FLOP/s implied by this configuration (one MAC = 2 FLOPs per cycle).
    pub fn nominal_peak_flops(&self) -> f64 {
        2.0 * self.total_macs as f64 * self.frequency_hz
    }

    /// Published peak throughput (TFLOP/s) and bandwidth (GB/s) for the four
    /// reference budgets. Kept as metadata; they do not follow from the
    /// simulator's own parameters.
    pub fn published_peaks(&self) -> Option<(f64, f64)> {
        match self.total_macs {
            1024 => Some((0.46, 11.0)),
            4096 => Some((1.86, 44.0)),
            16384 => Some((7.4, 170.0)),
            65536 => Some((29.8, 561.0)),
            _ => None,
        }
    }
}

/// One tile-engine mapping of the VS units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileConfig {
    pub k_eff: usize,
    pub row_groups: usize,
    pub cols_per_cycle: usize,
}

impl TileConfig {
    pub fn new(hw: &HardwareConfig, k_eff: usize) -> Result<Self> {
        let admissible: Vec<usize> = derive_tiles(hw).iter().map(|t| t.k_eff).collect();
        if !admissible.contains(&k_eff) {
            return Err(SharpError::Config(format!(
                "k-width {k_eff} is not admissible for {} MACs (admissible: {admissible:?})",
                hw.total_macs
            )));
        }
        Ok(Self::unchecked(hw, k_eff))
    }

    fn unchecked(hw: &HardwareConfig, k_eff: usize) -> Self {
        Self {
            k_eff,
            row_groups: k_eff / hw.k_base,
            cols_per_cycle: hw.total_macs / k_eff,
        }
    }

    /// Add Reduce level whose outputs feed the accumulators: `row_groups`
    /// nodes, counted from the leaves.
    pub fn tap_level(&self, hw: &HardwareConfig) -> u32 {
        hw.n_vs_units().trailing_zeros() - self.row_groups.trailing_zeros()
    }
}

/// The (up to) four tile mappings built from the base VS width.
pub fn derive_tiles(hw: &HardwareConfig) -> Vec<TileConfig> {
    [1usize, 2, 4, 8]
        .iter()
        .map(|g| hw.k_base * g)
        .filter(|&k| k <= hw.total_macs && hw.total_macs.is_multiple_of(k))
        .map(|k| TileConfig::unchecked(hw, k))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferCheck {
    pub name: String,
    pub required_bytes: u64,
    pub available_bytes: u64,
    pub fits: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub weights_fit: bool,
    pub buffers: Vec<BufferCheck>,
}

impl CapacityReport {
    pub fn all_fit(&self) -> bool {
        self.buffers.iter().all(|b| b.fits)
    }

    pub fn get(&self, name: &str) -> Option<&BufferCheck> {
        self.buffers.iter().find(|b| b.name == name)
    }
}

pub fn check_capacity(spec: &LstmModelSpec, hw: &HardwareConfig) -> CapacityReport {
    let (d, h, t) = (
        spec.input_dim as u64,
        spec.hidden_dim as u64,
        spec.seq_len as u64,
    );
    let wb = hw.weight_bytes_per_element;
    let check = |name: &str, required: u64, available: u64| BufferCheck {
        name: name.to_string(),
        required_bytes: required,
        available_bytes: available,
        fits: required <= available,
    };
    let buffers = vec![
        check("weight", 4 * h * (d + h) * wb, hw.weight_buffer_bytes),
        check("input-hidden", (t * d + h) * wb, hw.ih_buffer_bytes),
        check("cell-state", h * wb, hw.cell_state_bytes),
        check(
            "intermediate",
            4 * h * hw.accumulator_bytes_per_element,
            hw.intermediate_buffer_bytes,
        ),
    ];
    CapacityReport {
        weights_fit: buffers[0].fits,
        buffers,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ks(hw: &HardwareConfig) -> Vec<(usize, usize)> {
        derive_tiles(hw)
            .iter()
            .map(|t| (t.k_eff, t.cols_per_cycle))
            .collect()
    }

    #[test]
    fn four_tiles_at_4k() {
        assert_eq!(
            ks(&HardwareConfig::with_macs(4096)),
            vec![(32, 128), (64, 64), (128, 32), (256, 16)]
        );
    }

    #[test]
    fn four_tiles_at_1k() {
        let cols: Vec<usize> = ks(&HardwareConfig::with_macs(1024))
            .iter()
            .map(|p| p.1)
            .collect();
        assert_eq!(cols, vec![32, 16, 8, 4]);
    }

    #[test]
    fn small_budget_drops_wide_tiles() {
        let hw = HardwareConfig::with_macs(128);
        assert_eq!(ks(&hw), vec![(32, 4), (64, 2), (128, 1)]);
        assert!(TileConfig::new(&hw, 256).is_err());
    }

    #[test]
    fn every_tile_uses_all_lanes() {
        for m in BUDGETS {
            let hw = HardwareConfig::with_macs(m);
            for t in derive_tiles(&hw) {
                assert_eq!(t.k_eff * t.cols_per_cycle, m);
                assert_eq!(t.row_groups * hw.k_base, t.k_eff);
            }
        }
    }

    #[test]
    fn tap_levels_are_last_four_tree_levels() {
        let hw = HardwareConfig::with_macs(4096);
        let levels: Vec<u32> = derive_tiles(&hw).iter().map(|t| t.tap_level(&hw)).collect();
        assert_eq!(levels, vec![7, 6, 5, 4]);
    }

    #[test]
    fn validation_rejects_bad_budgets() {
        assert!(HardwareConfig::with_macs(1000).validate().is_err());
        assert!(HardwareConfig::with_macs(32).validate().is_err());
        let hw = HardwareConfig {
            intermediate_buffer_bytes: 0,
            ..HardwareConfig::default()
        };
        assert!(hw.validate().is_err());
        assert!(HardwareConfig::default().validate().is_ok());
    }

    #[test]
    fn large_model_overflows_weight_buffer() {
        let spec = LstmModelSpec::square(1500, 25).unwrap();
        let r = check_capacity(&spec, &HardwareConfig::default());
        assert_eq!(r.get("weight").unwrap().required_bytes, 36_000_000);
        assert!(!r.weights_fit);
    }

    #[test]
    fn medium_model_fits() {
        let spec = LstmModelSpec::square(512, 25).unwrap();
        let r = check_capacity(&spec, &HardwareConfig::default());
        assert_eq!(r.get("weight").unwrap().required_bytes, 4_194_304);
        assert!(r.weights_fit);
        assert!(r.all_fit());
    }

    #[test]
    fn add_reduce_depth_follows_unit_count() {
        assert_eq!(HardwareConfig::with_macs(1024).add_reduce_depth(), 6);
        assert_eq!(HardwareConfig::with_macs(65536).add_reduce_depth(), 12);
    }
}
