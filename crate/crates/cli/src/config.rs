//! Settings file, flag/file merging and input validation.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Result;
use racer_core::datagen::ScenarioKind;
use racer_core::losses::RdcWeights;
use racer_core::phys::OvrvParams;
use racer_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

/// User-facing configuration mistake; maps to exit code 1.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

pub fn is_validation(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.downcast_ref::<Invalid>().is_some()
            || e.downcast_ref::<racer_core::Error>().is_some_and(racer_core::Error::is_validation)
    })
}

/// Contents of `--config`. Every field is optional; flags override it.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub gen: GenFile,
    pub calibrate: CalibrateFile,
    pub train: Option<TrainConfig>,
    pub audit: AuditFile,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenFile {
    pub kind: Option<ScenarioKind>,
    pub duration: Option<f64>,
    pub dt: Option<f64>,
    pub speed_low: Option<f64>,
    pub speed_high: Option<f64>,
    pub period: Option<f64>,
    pub noise_std: Option<f64>,
    pub params: Option<OvrvParams>,
    pub initial_spacing: Option<f64>,
    pub initial_speed: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateFile {
    pub budget: Option<usize>,
    pub init: Option<OvrvParams>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditFile {
    pub tolerance: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(require_file(path, "config")?)?;
        serde_json::from_str(&text).map_err(|e| invalid(format!("config: {}: {e}", path.display())))
    }
}

pub fn require_file<'a>(path: &'a Path, what: &str) -> Result<&'a Path> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(invalid(format!("{what}: no such file {}", path.display())))
    }
}

pub fn require_dir<'a>(path: &'a Path, what: &str) -> Result<&'a Path> {
    if path.is_dir() {
        Ok(path)
    } else {
        Err(invalid(format!("{what}: no such directory {}", path.display())))
    }
}

pub fn parse_params(name: &str) -> Result<OvrvParams> {
    match name {
        "min-gap" | "min_gap" => Ok(OvrvParams::MIN_GAP),
        "max-gap" | "max_gap" => Ok(OvrvParams::MAX_GAP),
        other => Err(invalid(format!("params: unknown parameter set '{other}' (expected min-gap or max-gap)"))),
    }
}

fn parse_list<T: std::str::FromStr>(field: &str, text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| invalid(format!("{field}: cannot parse '{p}' in '{text}'"))))
        .collect()
}

pub fn parse_weights(text: &str) -> Result<RdcWeights> {
    match parse_list::<f64>("lambda", text)?.as_slice() {
        &[a, b, c] => Ok(RdcWeights::new(a, b, c)?),
        _ => Err(invalid(format!("lambda: expected three comma-separated weights, got '{text}'"))),
    }
}

pub fn parse_widths(text: &str) -> Result<Vec<usize>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    parse_list("phy_hidden", text)
}
