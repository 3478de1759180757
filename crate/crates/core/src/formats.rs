//! Config files, the weights container and run manifests.
//!
//! Model, hardware and cost files are TOML with a top-level `version`.
//! Weights use a binary container: the magic bytes, a little-endian u32
//! header length, a JSON header, then little-endian f64 payload in the order
//! W(i, f, g, o), U(i, f, g, o), b(i, f, g, o), each row-major.

use std::path::Path;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arch::HardwareConfig;
use crate::error::{Result, SharpError};
use crate::lstm::{LstmModelSpec, LstmWeights, Matrix};
use crate::sim::SimReport;

pub const CONFIG_VERSION: i64 = 1;
pub const WEIGHTS_MAGIC: &[u8; 8] = b"LSHWGT01";

fn parse_versioned<T: DeserializeOwned>(what: &str, text: &str) -> Result<T> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| SharpError::Config(format!("{what}: {e}")))?;
    match table.remove("version") {
        Some(toml::Value::Integer(CONFIG_VERSION)) => {}
        Some(v) => {
            return Err(SharpError::Config(format!(
                "{what}: unsupported version {v}"
            )))
        }
        None => return Err(SharpError::Config(format!("{what}: missing version field"))),
    }
    table
        .try_into()
        .map_err(|e| SharpError::Config(format!("{what}: {e}")))
}

fn to_versioned<T: Serialize>(value: &T) -> String {
    let body = toml::to_string(value).expect("config serializes");
    format!("version = {CONFIG_VERSION}\n{body}")
}

pub fn parse_model(text: &str) -> Result<LstmModelSpec> {
    let spec: LstmModelSpec = parse_versioned("model file", text)?;
    spec.validate()?;
    Ok(spec)
}

pub fn model_to_toml(spec: &LstmModelSpec) -> String {
    to_versioned(spec)
}

pub fn parse_hardware(text: &str) -> Result<HardwareConfig> {
    let hw: HardwareConfig = parse_versioned("hardware file", text)?;
    hw.validate()?;
    Ok(hw)
}

pub fn hardware_to_toml(hw: &HardwareConfig) -> String {
    to_versioned(hw)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsHeader {
    input_dim: usize,
    hidden_dim: usize,
    dtype: String,
    sha256: String,
}

pub fn encode_weights(w: &LstmWeights) -> Vec<u8> {
    let (h, d) = (w.w[0].rows, w.w[0].cols);
    let mut payload = Vec::with_capacity(8 * 4 * h * (d + h + 1));
    let values =
        w.w.iter()
            .flat_map(|m| &m.data)
            .chain(w.u.iter().flat_map(|m| &m.data))
            .chain(w.b.iter().flatten());
    for v in values {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    let header = WeightsHeader {
        input_dim: d,
        hidden_dim: h,
        dtype: "f64-le".into(),
        sha256: sha256_hex(&payload),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len() + payload.len());
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    out
}

/// Decodes a weights container, checking its framing, dimensions against
/// `spec` (when given) and payload digest.
pub fn decode_weights(bytes: &[u8], spec: Option<&LstmModelSpec>) -> Result<LstmWeights> {
    let bad = |m: &str| SharpError::Format(format!("weights file: {m}"));
    if bytes.len() < 12 || &bytes[..8] != WEIGHTS_MAGIC {
        return Err(bad("bad magic"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = &bytes[12..];
    if body.len() < hlen {
        return Err(bad("truncated header"));
    }
    let header: WeightsHeader =
        serde_json::from_slice(&body[..hlen]).map_err(|e| bad(&format!("header: {e}")))?;
    if header.dtype != "f64-le" {
        return Err(bad(&format!("unsupported dtype {}", header.dtype)));
    }
    let (d, h) = (header.input_dim, header.hidden_dim);
    if let Some(s) = spec {
        for (what, expected, got) in [
            ("weights input_dim", s.input_dim, d),
            ("weights hidden_dim", s.hidden_dim, h),
        ] {
            if expected != got {
                return Err(SharpError::Dimension {
                    what,
                    expected,
                    got,
                });
            }
        }
    }
    let payload = &body[hlen..];
    let n = 4 * h * (d + h + 1);
    if payload.len() != 8 * n {
        return Err(bad(&format!(
            "payload is {} bytes, expected {}",
            payload.len(),
            8 * n
        )));
    }
    if sha256_hex(payload) != header.sha256 {
        return Err(bad("payload digest mismatch"));
    }
    let vals: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut off = 0;
    let mut take = |rows: usize, cols: usize| {
        let m = Matrix {
            rows,
            cols,
            data: vals[off..off + rows * cols].to_vec(),
        };
        off += rows * cols;
        m
    };
    let w = std::array::from_fn(|_| take(h, d));
    let u = std::array::from_fn(|_| take(h, h));
    let b = std::array::from_fn(|_| take(1, h).data);
    Ok(LstmWeights { w, u, b })
}

pub fn read_weights(path: &Path, spec: Option<&LstmModelSpec>) -> Result<LstmWeights> {
    decode_weights(&std::fs::read(path)?, spec)
}

pub fn write_weights(path: &Path, w: &LstmWeights) -> Result<()> {
    std::fs::write(path, encode_weights(w))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub seed: Option<u64>,
    /// RFC 3339; taken from SOURCE_DATE_EPOCH when set.
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config,
            inputs: Vec::new(),
            seed: None,
            timestamp: timestamp(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)?;
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }
}

fn timestamp() -> String {
    let now = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<u64>().ok())
        .map(|s| UNIX_EPOCH + Duration::from_secs(s))
        .unwrap_or_else(SystemTime::now);
    humantime::format_rfc3339_seconds(now).to_string()
}

pub const STAGES_CSV_HEADER: &str =
    "stage,busy,stall_accumulator,stall_downstream,stall_dependency,idle";

pub fn stages_csv(report: &SimReport) -> String {
    let mut out = format!("{STAGES_CSV_HEADER}\n");
    for (name, s) in report.stages.stages() {
        out.push_str(&format!(
            "{name},{},{},{},{},{}\n",
            s.busy, s.stall_accumulator, s.stall_downstream, s.stall_dependency, s.idle
        ));
    }
    out
}

pub const STEPS_CSV_HEADER: &str = "step,cycles";

pub fn steps_csv(report: &SimReport) -> String {
    let mut out = format!("{STEPS_CSV_HEADER}\n");
    for (t, c) in report.cycles_per_step.iter().enumerate() {
        out.push_str(&format!("{t},{c}\n"));
    }
    out
}
