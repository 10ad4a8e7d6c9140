//! Synthetic ACC car-following scenarios: lead-speed profiles for the four
//! experiment regimes and an OVRV follower with optional acceleration noise.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{CfState, Provenance, Trajectory, DEFAULT_DT};
use crate::error::{Error, Result};
use crate::phys::{ovrv_accel, OvrvParams};
use crate::sim::{integrate, Controller};

/// Minimum constant hold of each level in the step regimes, s.
pub const STEP_HOLD: f64 = 30.0;
/// Duration of the smoothed transition between step levels, s.
pub const STEP_RAMP: f64 = 2.0;
const DIP_BRAKE: f64 = 2.0;
const DIP_RECOVER: f64 = 1.0;
const DIP_BOTTOM_HOLD: f64 = 5.0;
const DIP_CRUISE: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Oscillatory,
    LowSpeedSteps,
    HighSpeedSteps,
    Dips,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] =
        [ScenarioKind::Oscillatory, ScenarioKind::LowSpeedSteps, ScenarioKind::HighSpeedSteps, ScenarioKind::Dips];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Oscillatory => "oscillatory",
            ScenarioKind::LowSpeedSteps => "low_speed_steps",
            ScenarioKind::HighSpeedSteps => "high_speed_steps",
            ScenarioKind::Dips => "dips",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "kind: unknown scenario kind '{s}' (expected oscillatory, low_speed_steps, high_speed_steps or dips)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    /// Seconds; must be a whole number of `dt` steps.
    pub duration: f64,
    pub dt: f64,
    /// Lower end of the lead speed range, m/s.
    pub speed_low: f64,
    /// Upper end of the lead speed range, m/s.
    pub speed_high: f64,
    /// Oscillation period for the oscillatory regime, s.
    pub period: f64,
    /// Standard deviation of Gaussian noise added to the follower's
    /// acceleration, m/s².
    pub noise_std: f64,
    pub seed: u64,
    /// Ground-truth follower model.
    pub params: OvrvParams,
    /// Starting gap; the OVRV equilibrium gap at the initial speed when absent.
    #[serde(default)]
    pub initial_spacing: Option<f64>,
    /// Starting follower speed; the initial lead speed when absent.
    #[serde(default)]
    pub initial_speed: Option<f64>,
}

impl ScenarioSpec {
    /// Ten minutes at 10 Hz with speed ranges typical of each regime.
    pub fn new(kind: ScenarioKind) -> Self {
        let (speed_low, speed_high) = match kind {
            ScenarioKind::Oscillatory => (10.0, 20.0),
            ScenarioKind::LowSpeedSteps => (5.0, 15.0),
            ScenarioKind::HighSpeedSteps => (20.0, 30.0),
            ScenarioKind::Dips => (15.0, 25.0),
        };
        Self {
            kind,
            duration: 600.0,
            dt: DEFAULT_DT,
            speed_low,
            speed_high,
            period: 40.0,
            noise_std: 0.0,
            seed: 0,
            params: OvrvParams::MIN_GAP,
            initial_spacing: None,
            initial_speed: None,
        }
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.duration > 0.0) {
            return Err(Error::invalid("duration and dt must be positive"));
        }
        let steps = self.duration / self.dt;
        if (steps - steps.round()).abs() > 1e-6 || steps.round() < 2.0 {
            return Err(Error::invalid(format!(
                "duration: {} s is not a whole number (≥ 2) of {} s steps",
                self.duration, self.dt
            )));
        }
        if !(self.speed_low >= 0.0) || !(self.speed_high >= self.speed_low) {
            return Err(Error::invalid(format!(
                "speed range: need 0 ≤ low ≤ high, got {}..{}",
                self.speed_low, self.speed_high
            )));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::invalid("noise_std must be nonnegative"));
        }
        if self.kind == ScenarioKind::Oscillatory && !(self.period > 0.0) {
            return Err(Error::invalid("period must be positive"));
        }
        if let Some(s) = self.initial_spacing {
            if !(s > 0.0) {
                return Err(Error::invalid("initial_spacing must be positive"));
            }
        }
        if let Some(v) = self.initial_speed {
            if !(v >= 0.0) {
                return Err(Error::invalid("initial_speed must be nonnegative"));
            }
        }
        self.params.validate()
    }
}

/// Smooth 0→1 transition over `[0, 1]`.
fn cosine_ramp(x: f64) -> f64 {
    0.5 - 0.5 * (PI * x.clamp(0.0, 1.0)).cos()
}

fn step_levels(spec: &ScenarioSpec) -> Result<Vec<f64>> {
    let min_hold = STEP_HOLD + STEP_RAMP;
    let duration = spec.steps() as f64 * spec.dt;
    // Up the staircase and back down: 2m − 1 segments for m levels.
    let levels = (2..=5).rev().find(|&m| duration / (2 * m - 1) as f64 >= min_hold);
    let m = match levels {
        Some(m) => m,
        None => {
            return Err(Error::invalid(format!(
                "duration: step regimes need at least {} s to hold 3 levels",
                3.0 * min_hold
            )))
        }
    };
    let up: Vec<f64> = (0..m)
        .map(|i| spec.speed_low + (spec.speed_high - spec.speed_low) * i as f64 / (m - 1) as f64)
        .collect();
    let mut all = up.clone();
    all.extend(up.iter().rev().skip(1));
    Ok(all)
}

fn dip_profile(spec: &ScenarioSpec, n: usize) -> Result<Vec<f64>> {
    let (cruise, bottom) = (spec.speed_high, spec.speed_low);
    let depth = cruise - bottom;
    let brake = depth / DIP_BRAKE;
    let recover = depth / DIP_RECOVER;
    let dip = brake + DIP_BOTTOM_HOLD + recover;
    let cycle = DIP_CRUISE + dip;
    let duration = n as f64 * spec.dt;
    let count = ((duration - DIP_CRUISE) / cycle).floor();
    if count < 1.0 {
        return Err(Error::invalid(format!("duration: dips regime needs at least {:.1} s", cycle + DIP_CRUISE)));
    }
    Ok((0..n)
        .map(|i| {
            let t = i as f64 * spec.dt;
            let k = (t / cycle).floor();
            if k >= count {
                return cruise;
            }
            let u = t - k * cycle - DIP_CRUISE;
            if u < 0.0 {
                cruise
            } else if u < brake {
                cruise - DIP_BRAKE * u
            } else if u < brake + DIP_BOTTOM_HOLD {
                bottom
            } else if u < dip {
                bottom + DIP_RECOVER * (u - brake - DIP_BOTTOM_HOLD)
            } else {
                cruise
            }
        })
        .collect())
}

/// Lead-vehicle speed series for the scenario, one entry per sample.
pub fn gen_lead_profile(spec: &ScenarioSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let n = spec.steps();
    let dt = spec.dt;
    match spec.kind {
        ScenarioKind::Oscillatory => {
            let mean = 0.5 * (spec.speed_low + spec.speed_high);
            let amp = 0.5 * (spec.speed_high - spec.speed_low);
            Ok((0..n).map(|i| mean + amp * (2.0 * PI * i as f64 * dt / spec.period).sin()).collect())
        }
        ScenarioKind::LowSpeedSteps | ScenarioKind::HighSpeedSteps => {
            let levels = step_levels(spec)?;
            let hold = n as f64 * dt / levels.len() as f64;
            Ok((0..n)
                .map(|i| {
                    let t = i as f64 * dt;
                    let seg = ((t / hold).floor() as usize).min(levels.len() - 1);
                    if seg == 0 {
                        return levels[0];
                    }
                    let into = t - seg as f64 * hold;
                    let w = cosine_ramp(into / STEP_RAMP);
                    levels[seg - 1] + (levels[seg] - levels[seg - 1]) * w
                })
                .collect())
        }
        ScenarioKind::Dips => dip_profile(spec, n),
    }
}

struct NoisyOvrv {
    params: OvrvParams,
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl Controller for NoisyOvrv {
    fn history_len(&self) -> usize {
        1
    }

    fn accel(&mut self, history: &[CfState]) -> Result<f64> {
        let a = ovrv_accel(&history[0], &self.params);
        Ok(match &self.noise {
            Some(n) => a + n.sample(&mut self.rng),
            None => a,
        })
    }
}

/// Simulates the ground-truth OVRV follower behind `lead_profile`.
pub fn gen_follower(spec: &ScenarioSpec, lead_profile: &[f64]) -> Result<Trajectory> {
    spec.validate()?;
    if lead_profile.len() < 2 {
        return Err(Error::invalid("lead profile needs at least 2 samples"));
    }
    let v0 = spec.initial_speed.unwrap_or(lead_profile[0]);
    let s0 = spec.initial_spacing.unwrap_or_else(|| spec.params.equilibrium_spacing(v0));
    if !(s0 > 0.0) {
        return Err(Error::invalid(format!("initial spacing {s0} m is not positive")));
    }
    let noise = if spec.noise_std > 0.0 {
        Some(Normal::new(0.0, spec.noise_std).map_err(|e| Error::invalid(e.to_string()))?)
    } else {
        None
    };
    let mut controller = NoisyOvrv { params: spec.params, noise, rng: ChaCha8Rng::seed_from_u64(spec.seed) };
    let out = integrate(&mut controller, lead_profile, spec.dt, (s0, v0), &[])?;
    if let Some(c) = out.crash {
        return Err(Error::invalid(format!(
            "params: ground-truth follower {:?} crashes at t = {:.1} s in the {} scenario",
            spec.params, c.time, spec.kind
        )));
    }
    Trajectory::new(spec.dt, lead_profile.to_vec(), out.speed, out.spacing, Provenance::Generated)
}

/// Lead profile plus follower in one call.
pub fn generate(spec: &ScenarioSpec) -> Result<Trajectory> {
    let lead = gen_lead_profile(spec)?;
    gen_follower(spec, &lead)
}
