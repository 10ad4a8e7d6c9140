//! File formats: trajectory CSV, dataset-split bundles and JSON helpers.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{DatasetSplit, Provenance, SplitRatios, Trajectory};
use crate::error::{Error, Result};

pub const TRAJECTORY_HEADER: [&str; 4] = ["t", "lead_speed", "follow_speed", "spacing"];

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryRow {
    t: f64,
    lead_speed: f64,
    follow_speed: f64,
    spacing: f64,
}

/// Writes `t,lead_speed,follow_speed,spacing` rows. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRAJECTORY_HEADER)?;
    for i in 0..traj.len() {
        w.write_record(&[
            traj.time(i).to_string(),
            traj.lead_speed()[i].to_string(),
            traj.follow_speed()[i].to_string(),
            traj.spacing()[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the trajectory CSV format. `dt` is taken from the time column, which
/// must be uniformly spaced.
pub fn read_trajectory_csv<R: Read>(reader: R, provenance: Provenance) -> Result<Trajectory> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != TRAJECTORY_HEADER {
        return Err(Error::invalid(format!("expected header {TRAJECTORY_HEADER:?}, got {header:?}")));
    }
    let rows = r.deserialize().collect::<std::result::Result<Vec<TrajectoryRow>, _>>()?;
    if rows.len() < 2 {
        return Err(Error::invalid("trajectory CSV needs at least 2 rows"));
    }
    let dt = rows[1].t - rows[0].t;
    for (i, pair) in rows.windows(2).enumerate() {
        let step = pair[1].t - pair[0].t;
        if (step - dt).abs() > 1e-6 * dt.abs().max(1.0) {
            return Err(Error::invalid(format!("non-uniform time column at row {}", i + 1)));
        }
    }
    // Recover the nominal dt from the whole span to avoid inheriting the
    // rounding of a single difference.
    let span = rows[rows.len() - 1].t - rows[0].t;
    let dt = round_sig(span / (rows.len() - 1) as f64);
    Trajectory::new(
        dt,
        rows.iter().map(|r| r.lead_speed).collect(),
        rows.iter().map(|r| r.follow_speed).collect(),
        rows.iter().map(|r| r.spacing).collect(),
        provenance,
    )
}

fn round_sig(x: f64) -> f64 {
    let rounded: f64 = format!("{x:.9e}").parse().unwrap_or(x);
    rounded
}

pub fn save_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    write_trajectory_csv(traj, std::io::BufWriter::new(file))
}

pub fn load_trajectory(path: &Path, provenance: Provenance) -> Result<Trajectory> {
    let file = fs::File::open(path)?;
    read_trajectory_csv(std::io::BufReader::new(file), provenance)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Hex SHA-256 of the compact JSON encoding of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(sha256_hex(&bytes))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Rows of the source trajectory a split's samples draw on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentRange {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub dt: f64,
    pub seq_len: usize,
    pub accel_window: f64,
    pub seed: u64,
    pub ratios: SplitRatios,
    pub train: Option<SegmentRange>,
    pub validation: Option<SegmentRange>,
    pub test: Option<SegmentRange>,
}

fn segment_of(samples: &[crate::domain::Sample], seq_len: usize, stride: usize) -> Option<SegmentRange> {
    let first = samples.iter().map(|s| s.step).min()?;
    let last = samples.iter().map(|s| s.step).max()?;
    Some(SegmentRange { start: first + 1 - seq_len, end: last + stride + 1 })
}

/// Writes `train.csv`, `validation.csv`, `test.csv` (the trajectory rows each
/// split covers) and `split.json` into `dir`.
pub fn write_split(
    dir: &Path,
    traj: &Trajectory,
    split: &DatasetSplit,
    seq_len: usize,
    accel_window: f64,
    seed: u64,
) -> Result<SplitManifest> {
    fs::create_dir_all(dir)?;
    let stride = traj.stride(accel_window)?;
    let manifest = SplitManifest {
        dt: traj.dt(),
        seq_len,
        accel_window,
        seed,
        ratios: split.ratios,
        train: segment_of(&split.train, seq_len, stride),
        validation: segment_of(&split.validation, seq_len, stride),
        test: segment_of(&split.test, seq_len, stride),
    };
    for (name, range) in [("train", manifest.train), ("validation", manifest.validation), ("test", manifest.test)] {
        if let Some(r) = range {
            save_trajectory(&traj.segment(r.start..r.end)?, &dir.join(format!("{name}.csv")))?;
        }
    }
    write_json(&manifest, &dir.join("split.json"))?;
    Ok(manifest)
}
