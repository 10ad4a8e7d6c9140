//! Closed-loop rollout of a car-following controller against a recorded lead
//! vehicle, and RMSE evaluation against the recorded follower.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::domain::{estimate_accel, CfState, Trajectory};
use crate::error::{Error, Result};
use crate::phys::{ovrv_accel, OvrvParams};

/// Maps the recent state history to an acceleration command.
pub trait Controller {
    /// Number of most recent states the controller consumes (≥ 1).
    fn history_len(&self) -> usize;

    /// `history` holds exactly `history_len()` states, oldest first.
    fn accel(&mut self, history: &[CfState]) -> Result<f64>;
}

impl Controller for OvrvParams {
    fn history_len(&self) -> usize {
        1
    }

    fn accel(&mut self, history: &[CfState]) -> Result<f64> {
        Ok(ovrv_accel(&history[history.len() - 1], self))
    }
}

/// Constant command, useful as a reference or a deliberately broken controller.
#[derive(Debug, Clone, Copy)]
pub struct ConstantAccel(pub f64);

impl Controller for ConstantAccel {
    fn history_len(&self) -> usize {
        1
    }

    fn accel(&mut self, _: &[CfState]) -> Result<f64> {
        Ok(self.0)
    }
}

impl<C: Controller + ?Sized> Controller for &mut C {
    fn history_len(&self) -> usize {
        (**self).history_len()
    }

    fn accel(&mut self, history: &[CfState]) -> Result<f64> {
        (**self).accel(history)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crash {
    pub step: usize,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rmse {
    pub accel: f64,
    pub speed: f64,
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    pub dt: f64,
    /// Steps whose acceleration was replayed from the recorded follower
    /// before the controller took over.
    pub warmup: usize,
    pub lead_speed: Vec<f64>,
    pub spacing: Vec<f64>,
    pub speed: Vec<f64>,
    /// Command applied at each retained step.
    pub accel: Vec<f64>,
    pub crash: Option<Crash>,
    /// Absent when the rollout crashed.
    pub rmse: Option<Rmse>,
}

impl RolloutResult {
    pub fn crashed(&self) -> bool {
        self.crash.is_some()
    }

    pub fn len(&self) -> usize {
        self.spacing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spacing.is_empty()
    }

    /// Writes `t,spacing_sim,speed_sim,accel_sim,spacing_true,speed_true`.
    pub fn write_csv<W: Write>(&self, truth: &Trajectory, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "spacing_sim", "speed_sim", "accel_sim", "spacing_true", "speed_true"])?;
        for i in 0..self.len() {
            w.write_record(&[
                (i as f64 * self.dt).to_string(),
                self.spacing[i].to_string(),
                self.speed[i].to_string(),
                self.accel[i].to_string(),
                truth.spacing()[i].to_string(),
                truth.follow_speed()[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> RolloutSummary {
        RolloutSummary {
            steps: self.len(),
            warmup: self.warmup,
            crashed: self.crashed(),
            crash_time: self.crash.map(|c| c.time),
            rmse: self.rmse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutSummary {
    pub steps: usize,
    pub warmup: usize,
    pub crashed: bool,
    pub crash_time: Option<f64>,
    pub rmse: Option<Rmse>,
}

pub(crate) struct Integration {
    pub spacing: Vec<f64>,
    pub speed: Vec<f64>,
    pub accel: Vec<f64>,
    pub crash: Option<Crash>,
}

/// Explicit Euler on `[s, v]' = [v_l − v, a]` at the lead series' sample
/// rate. For the first `forced.len()` steps the command is taken from
/// `forced` instead of the controller. Speed is clamped at zero.
pub(crate) fn integrate<C: Controller>(
    controller: &mut C,
    lead_speed: &[f64],
    dt: f64,
    initial: (f64, f64),
    forced: &[f64],
) -> Result<Integration> {
    let n = lead_speed.len();
    let hist_len = controller.history_len().max(1);
    let mut out = Integration {
        spacing: Vec::with_capacity(n),
        speed: Vec::with_capacity(n),
        accel: Vec::with_capacity(n),
        crash: None,
    };
    let mut states: Vec<CfState> = Vec::with_capacity(n);
    let mut window: Vec<CfState> = Vec::with_capacity(hist_len);
    let (mut s, mut v) = initial;

    for t in 0..n {
        if s <= 0.0 {
            out.crash = Some(Crash { step: t, time: t as f64 * dt });
            break;
        }
        let state = CfState::new(s, lead_speed[t] - v, v);
        states.push(state);
        let a = if t < forced.len() {
            forced[t]
        } else {
            window.clear();
            let have = states.len();
            // Pad with the oldest state when the history is still short.
            for k in 0..hist_len {
                let idx = (have + k).saturating_sub(hist_len);
                window.push(states[idx.min(have - 1)]);
            }
            controller.accel(&window)?
        };
        if !a.is_finite() {
            return Err(Error::NonFiniteAccel { step: t });
        }
        out.spacing.push(s);
        out.speed.push(v);
        out.accel.push(a);

        s += (lead_speed[t] - v) * dt;
        v = (v + a * dt).max(0.0);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RolloutOptions {
    /// Steps replayed from the recorded follower before handing over to the
    /// controller. Defaults to `history_len − 1`, so the first controller
    /// call sees a full window.
    pub warmup: Option<usize>,
}

/// Uses `controller` as the follower's car-following law against the lead
/// speeds of `traj`, starting from its initial spacing and speed.
pub fn rollout<C: Controller>(controller: &mut C, traj: &Trajectory, options: RolloutOptions) -> Result<RolloutResult> {
    let warmup = options.warmup.unwrap_or(controller.history_len().max(1) - 1);
    let n = traj.len();
    if warmup >= n {
        return Err(Error::invalid(format!("warm-up of {warmup} steps leaves nothing to simulate in {n} rows")));
    }
    let recorded = estimate_accel(traj, traj.dt())?;
    let forced = &recorded[..warmup];
    let integ = integrate(
        controller,
        traj.lead_speed(),
        traj.dt(),
        (traj.spacing()[0], traj.follow_speed()[0]),
        forced,
    )?;
    let mut result = RolloutResult {
        dt: traj.dt(),
        warmup,
        lead_speed: traj.lead_speed()[..integ.spacing.len()].to_vec(),
        spacing: integ.spacing,
        speed: integ.speed,
        accel: integ.accel,
        crash: integ.crash,
        rmse: None,
    };
    if !result.crashed() {
        result.rmse = Some(evaluate_rmse(&result, traj)?);
    }
    Ok(result)
}

fn rms(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (sum, count) = pairs.fold((0.0, 0usize), |(s, c), (a, b)| (s + (a - b) * (a - b), c + 1));
    (sum / count as f64).sqrt()
}

/// RMSE of simulated acceleration, speed and spacing against the recorded
/// follower. Acceleration is compared on the first `n − 1` steps, where the
/// one-step forward-difference estimate of the recorded acceleration exists.
pub fn evaluate_rmse(result: &RolloutResult, truth: &Trajectory) -> Result<Rmse> {
    if let Some(c) = result.crash {
        return Err(Error::Crashed { time: c.time });
    }
    if result.len() != truth.len() {
        return Err(Error::invalid(format!(
            "rollout has {} steps but the reference has {}",
            result.len(),
            truth.len()
        )));
    }
    let recorded = estimate_accel(truth, truth.dt())?;
    Ok(Rmse {
        accel: rms(result.accel.iter().copied().zip(recorded.iter().copied())),
        speed: rms(result.speed.iter().copied().zip(truth.follow_speed().iter().copied())),
        spacing: rms(result.spacing.iter().copied().zip(truth.spacing().iter().copied())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Provenance;

    fn flat(n: usize, lead: f64, follow: f64, s0: f64) -> Trajectory {
        let mut spacing = vec![s0];
        for t in 0..n - 1 {
            spacing.push(spacing[t] + (lead - follow) * 0.1);
        }
        Trajectory::new(0.1, vec![lead; n], vec![follow; n], spacing, Provenance::Generated).unwrap()
    }

    #[test]
    fn single_euler_step() {
        let mut c = ConstantAccel(0.1);
        let out = integrate(&mut c, &[6.0, 6.0], 0.1, (20.0, 5.0), &[]).unwrap();
        assert!((out.spacing[1] - 20.1).abs() < 1e-12);
        assert!((out.speed[1] - 5.01).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_is_preserved() {
        let traj = flat(200, 8.0, 8.0, 25.0);
        let r = rollout(&mut ConstantAccel(0.0), &traj, RolloutOptions::default()).unwrap();
        assert!(r.spacing.iter().all(|&s| s == 25.0));
        assert!(r.speed.iter().all(|&v| v == 8.0));
        assert_eq!(r.rmse.unwrap(), Rmse { accel: 0.0, speed: 0.0, spacing: 0.0 });
    }

    #[test]
    fn braking_behind_slower_leader_crashes() {
        // Closing at 5 m/s while shedding 1 m/s² covers 12.5 m before the
        // gap stops shrinking; 10 m is not enough.
        let traj = flat(300, 5.0, 10.0, 10.0);
        let r = rollout(&mut ConstantAccel(-1.0), &traj, RolloutOptions::default()).unwrap();
        let crash = r.crash.expect("crash expected");
        assert!(r.rmse.is_none());
        assert_eq!(r.len(), crash.step);
        assert!(r.spacing.iter().all(|&s| s > 0.0));
        assert!(matches!(evaluate_rmse(&r, &traj), Err(Error::Crashed { .. })));
    }

    #[test]
    fn speed_never_goes_negative() {
        let traj = flat(100, 0.0, 0.0, 50.0);
        let r = rollout(&mut ConstantAccel(-3.0), &traj, RolloutOptions::default()).unwrap();
        assert!(r.speed.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_spacing_bias() {
        let traj = flat(50, 8.0, 8.0, 25.0);
        let mut r = rollout(&mut ConstantAccel(0.0), &traj, RolloutOptions::default()).unwrap();
        r.spacing.iter_mut().for_each(|s| *s += 0.5);
        let e = evaluate_rmse(&r, &traj).unwrap();
        assert!((e.spacing - 0.5).abs() < 1e-12);
        assert_eq!((e.speed, e.accel), (0.0, 0.0));
    }

    #[test]
    fn outputs_are_kinematically_consistent() {
        let n = 300;
        let lead: Vec<f64> = (0..n).map(|i| 12.0 + 3.0 * (i as f64 * 0.05).sin()).collect();
        let mut p = OvrvParams::MIN_GAP;
        let out = integrate(&mut p, &lead, 0.1, (23.0, 12.0), &[]).unwrap();
        for t in 0..n - 1 {
            let ds = out.spacing[t + 1] - out.spacing[t];
            assert!((ds - (lead[t] - out.speed[t]) * 0.1).abs() < 1e-12);
        }
    }

    struct Recorder {
        len: usize,
        seen: Vec<Vec<CfState>>,
    }

    impl Controller for Recorder {
        fn history_len(&self) -> usize {
            self.len
        }
        fn accel(&mut self, history: &[CfState]) -> Result<f64> {
            self.seen.push(history.to_vec());
            Ok(0.0)
        }
    }

    #[test]
    fn warmup_replays_recorded_accel_and_fills_window() {
        let n = 40;
        let follow: Vec<f64> = (0..n).map(|i| 10.0 + 0.02 * i as f64).collect();
        let lead = vec![10.5; n];
        let mut spacing = vec![20.0];
        for t in 0..n - 1 {
            spacing.push(spacing[t] + (lead[t] - follow[t]) * 0.1);
        }
        let traj = Trajectory::new(0.1, lead, follow, spacing, Provenance::Generated).unwrap();
        let mut rec = Recorder { len: 5, seen: vec![] };
        let r = rollout(&mut rec, &traj, RolloutOptions::default()).unwrap();
        assert_eq!(r.warmup, 4);
        // During warm-up the simulated follower tracks the recording.
        for t in 0..5 {
            assert!((r.speed[t] - traj.follow_speed()[t]).abs() < 1e-12);
            assert!((r.spacing[t] - traj.spacing()[t]).abs() < 1e-12);
        }
        assert_eq!(rec.seen.len(), n - 4);
        assert!(rec.seen.iter().all(|w| w.len() == 5));
        assert_eq!(rec.seen[0].last().unwrap().spacing, r.spacing[4]);
    }

    #[test]
    fn non_finite_command_is_an_error() {
        let traj = flat(10, 8.0, 8.0, 25.0);
        let err = rollout(&mut ConstantAccel(f64::NAN), &traj, RolloutOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteAccel { step: 0 }));
    }
}
