//! Rational-driving-constraint audit: exact input-gradients of a model at
//! every sample, with per-constraint violation flags, counts and rates.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::domain::{CfState, RdcGradients, Sample};
use crate::error::{Error, Result};
use crate::neural::RacerNet;
use crate::phys::{ovrv_rdc_derivatives, OvrvParams};

/// A model whose acceleration derivatives `(da/dv, da/ds, da/dΔv)` can be
/// computed exactly at a sample.
pub trait RdcModel {
    fn rdc_gradients(&self, sample: &Sample) -> Result<RdcGradients>;
}

impl RdcModel for OvrvParams {
    fn rdc_gradients(&self, _: &Sample) -> Result<RdcGradients> {
        Ok(ovrv_rdc_derivatives(self))
    }
}

impl RdcModel for RacerNet {
    fn rdc_gradients(&self, sample: &Sample) -> Result<RdcGradients> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let prediction = self.forward(&mut tape, &bound, sample)?;
        let g = self.input_gradients(&mut tape, &prediction)?;
        Ok(RdcGradients { dv: tape.scalar_value(g.dv), ds: tape.scalar_value(g.ds), dr: tape.scalar_value(g.dr) })
    }
}

/// Violation counts per constraint, in the order speed, spacing, relative speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintStats {
    pub count: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdcSummary {
    pub samples: usize,
    pub tolerance: f64,
    pub speed: ConstraintStats,
    pub spacing: ConstraintStats,
    pub relative_speed: ConstraintStats,
    /// Samples violating at least one constraint.
    pub any: ConstraintStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdcReport {
    pub tolerance: f64,
    pub gradients: Vec<RdcGradients>,
    /// `[speed, spacing, relative speed]` violation flags per sample.
    pub flags: Vec<[bool; 3]>,
}

impl RdcReport {
    pub fn from_gradients(gradients: Vec<RdcGradients>, tolerance: f64) -> Result<Self> {
        if gradients.is_empty() {
            return Err(Error::invalid("audit needs at least one sample"));
        }
        if !(tolerance >= 0.0) {
            return Err(Error::invalid(format!("tolerance must be nonnegative, got {tolerance}")));
        }
        let flags = gradients.iter().map(|g| g.violations(tolerance)).collect();
        Ok(Self { tolerance, gradients, flags })
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    /// Violation counts `[speed, spacing, relative speed]`.
    pub fn counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for f in &self.flags {
            for k in 0..3 {
                c[k] += f[k] as usize;
            }
        }
        c
    }

    /// `count / N` per constraint.
    pub fn rates(&self) -> [f64; 3] {
        self.counts().map(|c| c as f64 / self.len() as f64)
    }

    pub fn total_violations(&self) -> usize {
        self.counts().iter().sum()
    }

    pub fn summary(&self) -> RdcSummary {
        let n = self.len();
        let stats = |count: usize| ConstraintStats { count, rate: count as f64 / n as f64 };
        let [speed, spacing, rel] = self.counts();
        let any = self.flags.iter().filter(|f| f.iter().any(|&x| x)).count();
        RdcSummary {
            samples: n,
            tolerance: self.tolerance,
            speed: stats(speed),
            spacing: stats(spacing),
            relative_speed: stats(rel),
            any: stats(any),
        }
    }

    /// Per-sample table `idx,dv,ds,dr,viol_speed,viol_spacing,viol_rel`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["idx", "dv", "ds", "dr", "viol_speed", "viol_spacing", "viol_rel"])?;
        for (i, (g, f)) in self.gradients.iter().zip(&self.flags).enumerate() {
            w.write_record([
                i.to_string(),
                g.dv.to_string(),
                g.ds.to_string(),
                g.dr.to_string(),
                (f[0] as u8).to_string(),
                (f[1] as u8).to_string(),
                (f[2] as u8).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Flags a sample when `dv > tol`, `ds < −tol` or `dr < −tol`.
pub fn audit_model<M: RdcModel + ?Sized>(model: &M, samples: &[Sample], tolerance: f64) -> Result<RdcReport> {
    if samples.is_empty() {
        return Err(Error::invalid("audit needs at least one sample"));
    }
    let gradients = samples.iter().map(|s| model.rdc_gradients(s)).collect::<Result<Vec<_>>>()?;
    RdcReport::from_gradients(gradients, tolerance)
}

/// Inclusive range sampled at `points` evenly spaced values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        (0..self.points).map(|i| self.min + (self.max - self.min) * i as f64 / (self.points - 1) as f64).collect()
    }
}

/// Dense grid over the state space `(s, Δv, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateGrid {
    pub spacing: Axis,
    pub relative_speed: Axis,
    pub speed: Axis,
}

impl StateGrid {
    pub fn validate(&self) -> Result<()> {
        for (name, a) in [("spacing", self.spacing), ("relative_speed", self.relative_speed), ("speed", self.speed)] {
            if a.points == 0 || !(a.min <= a.max) {
                return Err(Error::invalid(format!("grid axis {name} needs points ≥ 1 and min ≤ max")));
            }
        }
        if self.spacing.min <= 0.0 {
            return Err(Error::invalid("grid spacing must be positive"));
        }
        Ok(())
    }

    /// Samples whose window repeats the grid state `seq_len` times.
    pub fn samples(&self, seq_len: usize) -> Result<Vec<Sample>> {
        self.validate()?;
        let mut out = Vec::new();
        for s in self.spacing.values() {
            for r in self.relative_speed.values() {
                for v in self.speed.values() {
                    let st = CfState::new(s, r, v);
                    out.push(Sample::new(out.len(), vec![st; seq_len.max(1)], 0.0)?);
                }
            }
        }
        Ok(out)
    }
}

/// Audit over a dense state grid instead of recorded samples. Points off the
/// training distribution are included, so this is a pointwise check of the
/// grid, not a proof over the continuous domain.
pub fn audit_grid<M: RdcModel + ?Sized>(model: &M, grid: &StateGrid, seq_len: usize, tolerance: f64) -> Result<RdcReport> {
    audit_model(model, &grid.samples(seq_len)?, tolerance)
}
