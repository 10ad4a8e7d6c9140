//! Markdown and CSV tables: rollout RMSE per model (crashes shown as
//! "N/A (crash)") and RDC violation counts and rates per model.

use anyhow::Result;
use racer_core::audit::{ConstraintStats, RdcSummary};
use racer_core::sim::{Rmse, RolloutSummary};

pub const MARKDOWN: &str = "report.md";
pub const CSV: &str = "report.csv";

type Column<T, V> = (&'static str, &'static str, fn(&T) -> V);

const METRICS: [Column<Rmse, f64>; 3] = [
    ("accel_rmse", "Acceleration RMSE (m/s²)", |r| r.accel),
    ("speed_rmse", "Speed RMSE (m/s)", |r| r.speed),
    ("spacing_rmse", "Spacing RMSE (m)", |r| r.spacing),
];

const CONSTRAINTS: [Column<RdcSummary, ConstraintStats>; 4] = [
    ("speed", "Speed (da/dv > 0)", |s| s.speed),
    ("spacing", "Spacing (da/ds < 0)", |s| s.spacing),
    ("relative_speed", "Relative speed (da/dΔv < 0)", |s| s.relative_speed),
    ("any", "Any constraint", |s| s.any),
];

fn row(cells: impl IntoIterator<Item = String>) -> String {
    let cells: Vec<String> = cells.into_iter().collect();
    format!("| {} |\n", cells.join(" | "))
}

fn header(first: &str, labels: &[&str]) -> String {
    let mut s = row(std::iter::once(first.to_string()).chain(labels.iter().map(|l| l.to_string())));
    s += &row(std::iter::repeat_n("---".to_string(), labels.len() + 1));
    s
}

pub fn markdown(rollouts: &[(String, RolloutSummary)], audits: &[(String, RdcSummary)]) -> String {
    let mut md = String::new();
    if !rollouts.is_empty() {
        let labels: Vec<&str> = rollouts.iter().map(|(l, _)| l.as_str()).collect();
        md += "## Rollout error\n\n";
        md += &header("Metric", &labels);
        for (_, name, get) in METRICS {
            md += &row(std::iter::once(name.to_string()).chain(rollouts.iter().map(|(_, s)| match &s.rmse {
                Some(r) if !s.crashed => format!("{:.3}", get(r)),
                _ => "N/A (crash)".to_string(),
            })));
        }
        md += "\n";
    }
    if !audits.is_empty() {
        let labels: Vec<&str> = audits.iter().map(|(l, _)| l.as_str()).collect();
        md += "## RDC violations\n\n";
        md += &header("Constraint", &labels);
        for (_, name, get) in CONSTRAINTS {
            md += &row(std::iter::once(name.to_string()).chain(audits.iter().map(|(_, s)| {
                let c = get(s);
                format!("{} ({:.1}%)", c.count, 100.0 * c.rate)
            })));
        }
        md += &row(std::iter::once("Samples".to_string()).chain(audits.iter().map(|(_, s)| s.samples.to_string())));
        md += "\n";
    }
    md
}

/// Long format `section,model,metric,value`; a crashed rollout has the value
/// `crash` for every RMSE metric.
pub fn csv(rollouts: &[(String, RolloutSummary)], audits: &[(String, RdcSummary)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["section", "model", "metric", "value"])?;
    for (label, s) in rollouts {
        for (key, _, get) in METRICS {
            let value = match &s.rmse {
                Some(r) if !s.crashed => get(r).to_string(),
                _ => "crash".to_string(),
            };
            w.write_record(["rollout", label, key, &value])?;
        }
    }
    for (label, s) in audits {
        for (key, _, get) in CONSTRAINTS {
            let c = get(s);
            w.write_record(["audit", label, &format!("{key}_count"), &c.count.to_string()])?;
            w.write_record(["audit", label, &format!("{key}_rate"), &c.rate.to_string()])?;
        }
    }
    w.into_inner().map_err(|e| anyhow::anyhow!(e.to_string()))
}
