//! Core data types: car-following states, trajectories, training samples and
//! dataset splits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample interval of the 10 Hz data the models are built around.
pub const DEFAULT_DT: f64 = 0.1;
pub const DEFAULT_SEQ_LEN: usize = 10;
/// Allowed |Δs − (v_l − v)·dt| per step for generated trajectories, in meters.
pub const KINEMATIC_TOLERANCE: f64 = 1e-9;

/// One car-following observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfState {
    /// Bumper-to-bumper gap to the leader, m.
    pub spacing: f64,
    /// Lead speed minus follower speed, m/s. Equals the time derivative of spacing.
    pub relative_speed: f64,
    /// Follower speed, m/s.
    pub speed: f64,
}

impl CfState {
    pub fn new(spacing: f64, relative_speed: f64, speed: f64) -> Self {
        Self { spacing, relative_speed, speed }
    }

    pub fn is_finite(&self) -> bool {
        self.spacing.is_finite() && self.relative_speed.is_finite() && self.speed.is_finite()
    }

    /// Checks the state can be fed to a model.
    pub fn validate(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::invalid(format!("non-finite state {self:?}")));
        }
        if self.spacing <= 0.0 {
            return Err(Error::invalid(format!("non-positive spacing {}", self.spacing)));
        }
        Ok(())
    }

    /// Features in model input order `[s, Δv, v]`.
    pub fn features(&self) -> [f64; 3] {
        [self.spacing, self.relative_speed, self.speed]
    }
}

/// Partial derivatives of predicted acceleration with respect to follower
/// speed, spacing and relative speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdcGradients {
    pub dv: f64,
    pub ds: f64,
    pub dr: f64,
}

impl RdcGradients {
    /// Violation flags `[speed, spacing, relative speed]`: `da/dv > tol`,
    /// `da/ds < -tol`, `da/dr < -tol`.
    pub fn violations(&self, tolerance: f64) -> [bool; 3] {
        [self.dv > tolerance, self.ds < -tolerance, self.dr < -tolerance]
    }

    pub fn is_compliant(&self, tolerance: f64) -> bool {
        !self.violations(tolerance).iter().any(|&v| v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Simulated; spacing is exactly the integral of relative speed.
    Generated,
    /// Recorded; kinematic consistency is not enforced.
    #[default]
    Measured,
}

/// Leader/follower time series at a fixed sample rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    dt: f64,
    lead_speed: Vec<f64>,
    follow_speed: Vec<f64>,
    spacing: Vec<f64>,
    provenance: Provenance,
}

impl Trajectory {
    pub fn new(
        dt: f64,
        lead_speed: Vec<f64>,
        follow_speed: Vec<f64>,
        spacing: Vec<f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        let n = lead_speed.len();
        if follow_speed.len() != n || spacing.len() != n {
            return Err(Error::invalid(format!(
                "series lengths differ: lead {n}, follow {}, spacing {}",
                follow_speed.len(),
                spacing.len()
            )));
        }
        if n < 2 {
            return Err(Error::invalid("trajectory needs at least 2 samples"));
        }
        if lead_speed.iter().chain(&follow_speed).chain(&spacing).any(|x| !x.is_finite()) {
            return Err(Error::invalid("trajectory contains non-finite values"));
        }
        let traj = Self { dt, lead_speed, follow_speed, spacing, provenance };
        if provenance == Provenance::Generated {
            traj.check_kinematics(KINEMATIC_TOLERANCE)?;
        }
        Ok(traj)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.lead_speed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lead_speed.is_empty()
    }

    pub fn duration(&self) -> f64 {
        (self.len() - 1) as f64 * self.dt
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn lead_speed(&self) -> &[f64] {
        &self.lead_speed
    }

    pub fn follow_speed(&self) -> &[f64] {
        &self.follow_speed
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 * self.dt
    }

    pub fn state(&self, index: usize) -> CfState {
        CfState {
            spacing: self.spacing[index],
            relative_speed: self.lead_speed[index] - self.follow_speed[index],
            speed: self.follow_speed[index],
        }
    }

    pub fn states(&self) -> Vec<CfState> {
        (0..self.len()).map(|i| self.state(i)).collect()
    }

    /// Largest per-step violation of `s(t+dt) − s(t) = (v_l(t) − v_f(t))·dt`.
    pub fn kinematic_residual(&self) -> f64 {
        (0..self.len() - 1)
            .map(|t| {
                let expected = (self.lead_speed[t] - self.follow_speed[t]) * self.dt;
                ((self.spacing[t + 1] - self.spacing[t]) - expected).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn check_kinematics(&self, tolerance: f64) -> Result<()> {
        let residual = self.kinematic_residual();
        if residual > tolerance {
            return Err(Error::invalid(format!(
                "kinematic residual {residual:e} m exceeds tolerance {tolerance:e} m"
            )));
        }
        Ok(())
    }

    /// Rows `range` as a new trajectory with the same dt and provenance.
    pub fn segment(&self, range: std::ops::Range<usize>) -> Result<Trajectory> {
        if range.end > self.len() || range.start >= range.end {
            return Err(Error::invalid(format!("segment {range:?} out of bounds for length {}", self.len())));
        }
        Trajectory::new(
            self.dt,
            self.lead_speed[range.clone()].to_vec(),
            self.follow_speed[range.clone()].to_vec(),
            self.spacing[range].to_vec(),
            self.provenance,
        )
    }

    /// Interval of `window` seconds as a whole number of samples.
    pub fn stride(&self, window: f64) -> Result<usize> {
        let steps = window / self.dt;
        let rounded = steps.round();
        if !(window > 0.0) || rounded < 1.0 || (steps - rounded).abs() > 1e-9 * rounded.max(1.0) {
            return Err(Error::invalid(format!(
                "window {window} s is not a positive multiple of dt = {} s",
                self.dt
            )));
        }
        Ok(rounded as usize)
    }
}

/// Forward-difference follower acceleration `(v(t+w) − v(t)) / w`.
///
/// The output has `window / dt` fewer entries than the trajectory.
pub fn estimate_accel(traj: &Trajectory, window: f64) -> Result<Vec<f64>> {
    let stride = traj.stride(window)?;
    if stride >= traj.len() {
        return Err(Error::invalid(format!(
            "window {window} s is not shorter than the recorded span ({} samples x {} s)",
            traj.len(),
            traj.dt()
        )));
    }
    let v = traj.follow_speed();
    Ok((0..traj.len() - stride).map(|t| (v[t + stride] - v[t]) / window).collect())
}

/// A model input window with its acceleration target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Trajectory index of the window's final step.
    pub step: usize,
    pub seq_window: Vec<CfState>,
    pub phy_state: CfState,
    pub target_accel: f64,
}

impl Sample {
    pub fn new(step: usize, seq_window: Vec<CfState>, target_accel: f64) -> Result<Self> {
        let phy_state = *seq_window.last().ok_or_else(|| Error::invalid("empty sequence window"))?;
        Ok(Self { step, seq_window, phy_state, target_accel })
    }

    /// Single-step sample, for models that only look at the current state.
    pub fn from_state(state: CfState, target_accel: f64) -> Self {
        Self { step: 0, seq_window: vec![state], phy_state: state, target_accel }
    }
}

/// Slides a `seq_len` window over the trajectory; the target is the
/// acceleration estimated at the window's last step.
pub fn build_samples(traj: &Trajectory, seq_len: usize, accel_window: f64) -> Result<Vec<Sample>> {
    if seq_len < 1 {
        return Err(Error::invalid("seq_len must be at least 1"));
    }
    let accel = estimate_accel(traj, accel_window)?;
    if accel.len() < seq_len {
        return Err(Error::invalid(format!(
            "trajectory of {} rows is too short for seq_len {seq_len} with a {accel_window} s window",
            traj.len()
        )));
    }
    let states = traj.states();
    (seq_len - 1..accel.len())
        .map(|end| Sample::new(end, states[end + 1 - seq_len..=end].to_vec(), accel[end]))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.8, validation: 0.1, test: 0.1 }
    }
}

impl SplitRatios {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self> {
        let r = Self { train, validation, test };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid(format!("split ratios must be nonnegative, got {parts:?}")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split ratios must sum to 1, got {parts:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
    pub ratios: SplitRatios,
}

/// Temporal train/validation/test partition. Only the training block is
/// shuffled, with a generator seeded from `seed`.
pub fn split_dataset(samples: &[Sample], ratios: SplitRatios, seed: u64) -> Result<DatasetSplit> {
    ratios.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("cannot split an empty sample list"));
    }
    let n = samples.len();
    let n_train = ((n as f64 * ratios.train).round() as usize).min(n);
    let n_val = ((n as f64 * ratios.validation).round() as usize).min(n - n_train);
    let n_test = n - n_train - n_val;
    for (name, ratio, count) in [
        ("train", ratios.train, n_train),
        ("validation", ratios.validation, n_val),
        ("test", ratios.test, n_test),
    ] {
        if ratio > 0.0 && count == 0 {
            return Err(Error::invalid(format!("{name} split is empty for {n} samples at ratio {ratio}")));
        }
    }
    let mut train = samples[..n_train].to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    train.shuffle(&mut rng);
    Ok(DatasetSplit {
        train,
        validation: samples[n_train..n_train + n_val].to_vec(),
        test: samples[n_train + n_val..].to_vec(),
        ratios,
    })
}
