//! Per-command `manifest.json`: resolved configuration, its hash, versions and
//! content hashes of every input and output file.

use std::fs;
use std::path::Path;

use anyhow::Result;
use racer_core::io::{config_hash, sha256_hex, write_json};
use serde::Serialize;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    core_version: &'a str,
    config_hash: String,
    config: &'a C,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

fn digest(path: &Path, shown: String) -> Result<FileDigest> {
    Ok(FileDigest { path: shown, sha256: sha256_hex(&fs::read(path)?) })
}

/// Writes the manifest into `out`. `outputs` are paths relative to `out`.
pub fn write<C: Serialize>(out: &Path, command: &str, config: &C, inputs: &[&Path], outputs: &[String]) -> Result<()> {
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        core_version: racer_core::VERSION,
        config_hash: config_hash(config)?,
        config,
        inputs: inputs.iter().map(|p| digest(p, p.display().to_string())).collect::<Result<_>>()?,
        outputs: outputs.iter().map(|rel| digest(&out.join(rel), rel.clone())).collect::<Result<_>>()?,
    };
    write_json(&manifest, &out.join(MANIFEST_FILE))?;
    Ok(())
}
