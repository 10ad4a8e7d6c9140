use serde::{Deserialize, Serialize};

use super::nelder_mead::{minimize, NelderMeadOptions};
use crate::domain::{CfState, DatasetSplit, RdcGradients, Sample};
use crate::error::{Error, Result};

/// Parameters of `a = k1 (s − η − τ v) + k2 Δv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OvrvParams {
    /// Gain on the effective time-gap term, 1/s².
    pub k1: f64,
    /// Gain on relative speed, 1/s.
    pub k2: f64,
    /// Time-gap constant, s.
    pub tau: f64,
    /// Jam distance, m.
    pub eta: f64,
}

impl OvrvParams {
    /// Calibrated values for an ACC vehicle at its minimum gap setting.
    pub const MIN_GAP: OvrvParams = OvrvParams { k1: 0.052, k2: 0.236, tau: 0.796, eta: 13.836 };
    /// Calibrated values for an ACC vehicle at its maximum gap setting.
    pub const MAX_GAP: OvrvParams = OvrvParams { k1: 0.018, k2: 0.105, tau: 2.489, eta: 0.0003 };
    /// Starting point for calibration.
    pub const DEFAULT_INIT: OvrvParams = OvrvParams { k1: 0.05, k2: 0.2, tau: 1.0, eta: 5.0 };

    pub fn new(k1: f64, k2: f64, tau: f64, eta: f64) -> Self {
        Self { k1, k2, tau, eta }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.k1, self.k2, self.tau, self.eta]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self { k1: x[0], k2: x[1], tau: x[2], eta: x[3] }
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.to_array();
        if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::invalid(format!("OVRV parameters must be finite and nonnegative, got {self:?}")));
        }
        Ok(())
    }

    /// Equilibrium spacing at constant speed `v`.
    pub fn equilibrium_spacing(&self, speed: f64) -> f64 {
        self.eta + self.tau * speed
    }
}

pub fn ovrv_accel(state: &CfState, p: &OvrvParams) -> f64 {
    p.k1 * (state.spacing - p.eta - p.tau * state.speed) + p.k2 * state.relative_speed
}

/// Exact partials `(da/dv, da/ds, da/dr) = (−k1 τ − k2, k1, k2)`.
pub fn ovrv_rdc_derivatives(p: &OvrvParams) -> RdcGradients {
    RdcGradients { dv: -p.k1 * p.tau - p.k2, ds: p.k1, dr: p.k2 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub params: OvrvParams,
    /// Root-mean-square acceleration error on the training samples, m/s².
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip)]
    pub best_trace: Vec<f64>,
}

pub(crate) fn accel_rmse(samples: &[Sample], p: &OvrvParams) -> f64 {
    let sq: f64 = samples
        .iter()
        .map(|s| {
            let e = ovrv_accel(&s.phy_state, p) - s.target_accel;
            e * e
        })
        .sum();
    (sq / samples.len() as f64).sqrt()
}

/// Fits OVRV parameters to the training split by minimizing the RMS
/// acceleration error with a nonnegativity-bounded simplex search.
pub fn calibrate_ovrv(split: &DatasetSplit, init: OvrvParams, budget: usize) -> Result<Calibration> {
    let train = &split.train;
    if train.is_empty() {
        return Err(Error::invalid("calibration needs a non-empty training split"));
    }
    if budget < 1 {
        return Err(Error::invalid("calibration budget must be at least 1 iteration"));
    }
    init.validate()?;
    let first = &train[0];
    if train.iter().all(|s| s.phy_state == first.phy_state && s.target_accel == first.target_accel) {
        return Err(Error::DegenerateCalibration { objective: accel_rmse(train, &init) });
    }

    let opts = NelderMeadOptions { max_iterations: budget, ..NelderMeadOptions::default() };
    let result = minimize(|x| accel_rmse(train, &OvrvParams::from_slice(x)), &init.to_array(), &opts);
    Ok(Calibration {
        params: OvrvParams::from_slice(&result.x),
        objective: result.value,
        iterations: result.iterations,
        converged: result.converged,
        best_trace: result.best_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{SplitRatios, Sample};

    #[test]
    fn jam_distance_is_an_equilibrium() {
        let state = CfState::new(13.836, 0.0, 0.0);
        assert_eq!(ovrv_accel(&state, &OvrvParams::MIN_GAP), 0.0);
    }

    #[test]
    fn hand_computed_accel() {
        let a = ovrv_accel(&CfState::new(20.0, 0.0, 5.0), &OvrvParams::MIN_GAP);
        assert!((a - 0.113568).abs() < 1e-12, "{a}");
        let pure = OvrvParams::new(0.0, 1.0, 0.7, 3.0);
        assert_eq!(ovrv_accel(&CfState::new(9.0, -2.0, 4.0), &pure), -2.0);
    }

    #[test]
    fn rdc_derivative_values() {
        let g = ovrv_rdc_derivatives(&OvrvParams::MIN_GAP);
        assert!((g.dv - (-0.052 * 0.796 - 0.236)).abs() < 1e-15);
        assert!((g.dv + 0.277392).abs() < 1e-12);
        assert_eq!((g.ds, g.dr), (0.052, 0.236));
        let z = ovrv_rdc_derivatives(&OvrvParams::new(0.0, 0.0, 0.0, 0.0));
        assert_eq!((z.dv, z.ds, z.dr), (0.0, 0.0, 0.0));
        assert!(z.is_compliant(0.0));
    }

    #[test]
    fn affine_in_each_coordinate() {
        let p = OvrvParams::MAX_GAP;
        let x = CfState::new(30.0, -1.5, 12.0);
        let y = CfState::new(45.0, 2.5, 3.0);
        for k in 0..3 {
            let mut fx = x.features();
            let mut fy = fx;
            fy[k] = y.features()[k];
            let mid = CfState::new((fx[0] + fy[0]) / 2.0, (fx[1] + fy[1]) / 2.0, (fx[2] + fy[2]) / 2.0);
            let a = |f: [f64; 3]| ovrv_accel(&CfState::new(f[0], f[1], f[2]), &p);
            fx[k] = x.features()[k];
            assert!((ovrv_accel(&mid, &p) - (a(fx) + a(fy)) / 2.0).abs() < 1e-12);
        }
    }

    fn split_of(train: Vec<Sample>) -> DatasetSplit {
        DatasetSplit { train, validation: vec![], test: vec![], ratios: SplitRatios::new(1.0, 0.0, 0.0).unwrap() }
    }

    #[test]
    fn constant_data_is_degenerate() {
        let s = Sample::from_state(CfState::new(20.0, 0.0, 10.0), 0.0);
        let err = calibrate_ovrv(&split_of(vec![s; 50]), OvrvParams::DEFAULT_INIT, 100).unwrap_err();
        assert!(matches!(err, Error::DegenerateCalibration { .. }));
    }

    #[test]
    fn recovers_parameters_from_scattered_states() {
        let truth = OvrvParams::new(0.05, 0.2, 1.0, 10.0);
        let samples: Vec<Sample> = (0..400)
            .map(|i| {
                let t = i as f64;
                let st = CfState::new(20.0 + 8.0 * (t * 0.37).sin(), 2.0 * (t * 0.91).cos(), 10.0 + 5.0 * (t * 0.13).sin());
                Sample::from_state(st, ovrv_accel(&st, &truth))
            })
            .collect();
        let cal = calibrate_ovrv(&split_of(samples), OvrvParams::DEFAULT_INIT, 20_000).unwrap();
        for (got, want) in cal.params.to_array().iter().zip(truth.to_array()) {
            assert!((got - want).abs() / want < 1e-3, "{:?}", cal.params);
        }
        assert!(cal.objective.powi(2) <= 1e-6);
        assert!(cal.best_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn json_keys() {
        let v = serde_json::to_value(OvrvParams::MIN_GAP).unwrap();
        assert_eq!(v["k1"], 0.052);
        assert_eq!(v["tau"], 0.796);
        assert_eq!(v["eta"], 13.836);
    }
}
