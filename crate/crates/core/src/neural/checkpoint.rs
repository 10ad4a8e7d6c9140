use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::racer::{NetConfig, RacerNet};
use crate::error::{Error, Result};
use crate::io::{read_json, sha256_hex, write_json};
use crate::train::Normalizer;

pub const CHECKPOINT_FORMAT: &str = "racer-checkpoint/1";
pub const MANIFEST_FILE: &str = "model.json";
pub const PARAMS_FILE: &str = "model.bin";

/// Architecture and normalization metadata stored next to the raw parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub config: NetConfig,
    pub normalizer: Option<Normalizer>,
    /// Shape of each parameter tensor, in declared order.
    pub shapes: Vec<[usize; 2]>,
    pub parameter_count: usize,
    /// SHA-256 of the parameter file.
    pub sha256: String,
}

fn encode(net: &RacerNet) -> Vec<u8> {
    net.parameters().iter().flat_map(|p| p.data().iter().flat_map(|x| x.to_le_bytes())).collect()
}

/// Writes `model.json` and `model.bin` (little-endian f64 parameters in
/// declared order) into `dir`.
pub fn save_checkpoint(net: &RacerNet, dir: &Path) -> Result<CheckpointManifest> {
    fs::create_dir_all(dir)?;
    let bytes = encode(net);
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.to_string(),
        config: net.config.clone(),
        normalizer: net.normalizer,
        shapes: net.parameters().iter().map(|p| [p.rows(), p.cols()]).collect(),
        parameter_count: net.parameter_count(),
        sha256: sha256_hex(&bytes),
    };
    fs::write(dir.join(PARAMS_FILE), &bytes)?;
    write_json(&manifest, &dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<RacerNet> {
    let manifest: CheckpointManifest = read_json(&dir.join(MANIFEST_FILE))?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!("unsupported format '{}'", manifest.format)));
    }
    let bytes = fs::read(dir.join(PARAMS_FILE))?;
    if sha256_hex(&bytes) != manifest.sha256 {
        return Err(Error::Checkpoint("parameter file does not match its recorded checksum".into()));
    }
    let mut net = RacerNet::zeros(manifest.config.clone())?;
    let shapes: Vec<[usize; 2]> = net.parameters().iter().map(|p| [p.rows(), p.cols()]).collect();
    if shapes != manifest.shapes {
        return Err(Error::Checkpoint("parameter shapes do not match the architecture".into()));
    }
    if bytes.len() != 8 * manifest.parameter_count || manifest.parameter_count != net.parameter_count() {
        return Err(Error::Checkpoint(format!(
            "expected {} parameters, file holds {} bytes",
            net.parameter_count(),
            bytes.len()
        )));
    }
    let mut values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    for p in net.parameters_mut() {
        for x in p.data_mut() {
            *x = values.next().expect("length checked above");
        }
    }
    net.normalizer = manifest.normalizer;
    Ok(net)
}
