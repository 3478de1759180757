//! Shared fixtures for the criterion benchmarks.

use lstm_sharp_core::{HardwareConfig, LstmModelSpec, TileConfig};

/// (model, hardware, tile) triples covering small and large budgets.
pub fn fixtures() -> Vec<(LstmModelSpec, HardwareConfig, TileConfig)> {
    [(200, 1024, 64), (512, 4096, 128), (340, 65536, 256)]
        .into_iter()
        .map(|(h, m, k)| {
            let hw = HardwareConfig::with_macs(m);
            let tile = TileConfig::new(&hw, k).expect("admissible tile");
            (LstmModelSpec::square(h, 25).expect("valid model"), hw, tile)
        })
        .collect()
}
