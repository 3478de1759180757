//! Activity-based energy accounting with a user-supplied cost model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::arch::HardwareConfig;
use crate::error::{Result, SharpError};
use crate::sim::SimReport;

pub const DYNAMIC_KEYS: [&str; 7] = [
    "mac_op",
    "add_op",
    "activation_op",
    "weight_read_per_byte",
    "sram_read_per_byte",
    "sram_write_per_byte",
    "intermediate_rw_per_byte",
];

pub const COMPONENTS: [&str; 5] = ["compute", "add_reduce", "mfu", "cell_updater", "memories"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Measured,
    Vendor,
    SyntheticPlaceholder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostEntry {
    pub value: f64,
    pub provenance: Provenance,
}

/// Dynamic energies in joules per event or byte; static powers in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    pub dynamic: BTreeMap<String, CostEntry>,
    pub static_power: BTreeMap<String, CostEntry>,
}

fn check_keys(section: &str, map: &BTreeMap<String, CostEntry>, expected: &[&str]) -> Result<()> {
    for k in expected {
        match map.get(*k) {
            None => {
                return Err(SharpError::Config(format!(
                    "cost model lacks {section}.{k}"
                )))
            }
            Some(e) if !(e.value >= 0.0 && e.value.is_finite()) => {
                return Err(SharpError::Config(format!(
                    "cost {section}.{k} must be finite and >= 0, got {}",
                    e.value
                )))
            }
            _ => {}
        }
    }
    if let Some(extra) = map.keys().find(|k| !expected.contains(&k.as_str())) {
        return Err(SharpError::Config(format!(
            "cost {section}.{extra} has no matching activity counter"
        )));
    }
    Ok(())
}

impl CostModel {
    pub const VERSION: u32 = 1;

    /// Every value set to `value`, labelled as a placeholder.
    pub fn uniform(dynamic: f64, static_w: f64) -> Self {
        let entry = |value| CostEntry {
            value,
            provenance: Provenance::SyntheticPlaceholder,
        };
        Self {
            version: Self::VERSION,
            name: "uniform".into(),
            dynamic: DYNAMIC_KEYS
                .iter()
                .map(|k| (k.to_string(), entry(dynamic)))
                .collect(),
            static_power: COMPONENTS
                .iter()
                .map(|k| (k.to_string(), entry(static_w)))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != Self::VERSION {
            return Err(SharpError::Config(format!(
                "cost model version {} unsupported (expected {})",
                self.version,
                Self::VERSION
            )));
        }
        check_keys("dynamic", &self.dynamic, &DYNAMIC_KEYS)?;
        check_keys("static_power", &self.static_power, &COMPONENTS)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let m: Self =
            toml::from_str(s).map_err(|e| SharpError::Config(format!("cost model: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("cost model serializes")
    }

    fn dyn_cost(&self, k: &str) -> f64 {
        self.dynamic[k].value
    }

    /// Multiplies every dynamic cost by `factor`.
    pub fn scale_dynamic(&self, factor: f64) -> Self {
        let mut m = self.clone();
        for e in m.dynamic.values_mut() {
            e.value *= factor;
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub dynamic_j: BTreeMap<String, f64>,
    pub static_j: BTreeMap<String, f64>,
    pub dynamic_total_j: f64,
    pub static_total_j: f64,
    pub total_j: f64,
    pub average_w: f64,
    /// Useful FLOPs (two per MAC) per joule.
    pub flops_per_joule: f64,
}

impl EnergyReport {
    pub fn csv(&self) -> String {
        let mut out = String::from("component,dynamic_j,static_j\n");
        for c in COMPONENTS {
            out.push_str(&format!(
                "{c},{:e},{:e}\n",
                self.dynamic_j[c], self.static_j[c]
            ));
        }
        out.push_str(&format!(
            "total,{:e},{:e}\n",
            self.dynamic_total_j, self.static_total_j
        ));
        out
    }
}

pub fn estimate_energy(
    report: &SimReport,
    hw: &HardwareConfig,
    costs: &CostModel,
) -> Result<EnergyReport> {
    costs.validate()?;
    let a = &report.activity;
    let wb = hw.weight_bytes_per_element as f64;
    let ab = hw.accumulator_bytes_per_element as f64;
    // activations and states travel at weight precision
    let sb = wb;
    let c = |k| costs.dyn_cost(k);
    let cell_ops = a.cell_updates as f64;

    let mut dynamic_j = BTreeMap::new();
    dynamic_j.insert(
        "compute".to_string(),
        a.multiplies as f64 * c("mac_op")
            + a.weight.reads as f64 * wb * c("weight_read_per_byte")
            + a.input_hidden.reads as f64 * sb * c("sram_read_per_byte"),
    );
    dynamic_j.insert(
        "add_reduce".to_string(),
        a.adds as f64 * c("add_op")
            + (a.intermediate.reads + a.intermediate.writes) as f64
                * ab
                * c("intermediate_rw_per_byte"),
    );
    dynamic_j.insert("mfu".to_string(), a.activations as f64 * c("activation_op"));
    // three products, one sum and one tanh per element
    dynamic_j.insert(
        "cell_updater".to_string(),
        cell_ops * (3.0 * c("mac_op") + c("add_op") + c("activation_op")),
    );
    dynamic_j.insert(
        "memories".to_string(),
        a.cell_state.reads as f64 * sb * c("sram_read_per_byte")
            + (a.cell_state.writes + a.input_hidden.writes) as f64 * sb * c("sram_write_per_byte"),
    );
    let static_j: BTreeMap<String, f64> = COMPONENTS
        .iter()
        .map(|k| {
            (
                k.to_string(),
                costs.static_power[*k].value * report.wall_time_s,
            )
        })
        .collect();
    let dynamic_total_j: f64 = dynamic_j.values().sum();
    let static_total_j: f64 = static_j.values().sum();
    let total_j = dynamic_total_j + static_total_j;
    let average_w = if report.wall_time_s > 0.0 {
        total_j / report.wall_time_s
    } else {
        0.0
    };
    let flops = 2.0 * report.useful_mac_ops as f64;
    Ok(EnergyReport {
        dynamic_j,
        static_j,
        dynamic_total_j,
        static_total_j,
        total_j,
        average_w,
        flops_per_joule: if total_j > 0.0 { flops / total_j } else { 0.0 },
    })
}
