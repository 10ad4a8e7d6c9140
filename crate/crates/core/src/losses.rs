//! Training objectives: plain MSE, the physics-informed (PINN) composite and
//! the RDC-penalized RACER loss. Every term is recorded on the tape, so one
//! reverse pass yields parameter gradients, including the second-order flow
//! through input-gradient penalties.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::domain::Sample;
use crate::error::{Error, Result};
use crate::neural::{BoundNet, InputGradients, RacerNet};
use crate::phys::{ovrv_accel, OvrvParams};

/// Penalty weights on the speed, spacing and relative-speed constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdcWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for RdcWeights {
    fn default() -> Self {
        Self { lambda1: 1.0, lambda2: 1.0, lambda3: 1.0 }
    }
}

impl RdcWeights {
    pub const ZERO: RdcWeights = RdcWeights { lambda1: 0.0, lambda2: 0.0, lambda3: 0.0 };

    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64) -> Result<Self> {
        let w = Self { lambda1, lambda2, lambda3 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.lambda1, self.lambda2, self.lambda3].iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::invalid(format!("RDC weights must be finite and nonnegative, got {self:?}")));
        }
        Ok(())
    }
}

/// Batch-averaged constraint penalties.
#[derive(Debug, Clone, Copy)]
pub struct RdcPenalties {
    pub p_speed: Var,
    pub p_spacing: Var,
    pub p_rel: Var,
}

/// Recorded loss with its components.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    /// Data term `MSE(a_pred, a_true)`.
    pub mse: Var,
    /// `MSE(a_pred, a_phy)` for the physics-informed objective.
    pub physics: Option<Var>,
    pub penalties: Option<RdcPenalties>,
}

/// Numeric values of a [`LossTerms`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossValues {
    pub total: f64,
    pub mse: f64,
    pub physics: Option<f64>,
    pub p_speed: Option<f64>,
    pub p_spacing: Option<f64>,
    pub p_rel: Option<f64>,
}

impl LossTerms {
    pub fn values(&self, tape: &Tape) -> LossValues {
        let v = |x: Var| tape.scalar_value(x);
        LossValues {
            total: v(self.total),
            mse: v(self.mse),
            physics: self.physics.map(v),
            p_speed: self.penalties.map(|p| v(p.p_speed)),
            p_spacing: self.penalties.map(|p| v(p.p_spacing)),
            p_rel: self.penalties.map(|p| v(p.p_rel)),
        }
    }
}

fn sum_all(tape: &mut Tape, terms: &[Var]) -> Result<Var> {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = tape.add(acc, t)?;
    }
    Ok(acc)
}

fn batch_mean(tape: &mut Tape, terms: &[Var]) -> Result<Var> {
    let total = sum_all(tape, terms)?;
    tape.scale(total, 1.0 / terms.len() as f64)
}

/// `(1/N) Σ (a_true − a_pred)²`.
pub fn mse_loss(tape: &mut Tape, pred: &[Var], target: &[f64]) -> Result<Var> {
    if pred.len() != target.len() {
        return Err(Error::invalid(format!("{} predictions for {} targets", pred.len(), target.len())));
    }
    if pred.is_empty() {
        return Err(Error::invalid("loss over an empty batch"));
    }
    let squares = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let t = tape.scalar(t);
            let d = tape.sub(t, p)?;
            tape.mul(d, d)
        })
        .collect::<Result<Vec<_>>>()?;
    batch_mean(tape, &squares)
}

/// `ReLU(da/dv)`, `ReLU(−da/ds)` and `ReLU(−da/dΔv)`, each averaged over the
/// batch.
pub fn rdc_penalties(tape: &mut Tape, grads: &[InputGradients]) -> Result<RdcPenalties> {
    if grads.is_empty() {
        return Err(Error::invalid("penalties over an empty batch"));
    }
    let mut speed = Vec::with_capacity(grads.len());
    let mut spacing = Vec::with_capacity(grads.len());
    let mut rel = Vec::with_capacity(grads.len());
    for g in grads {
        speed.push(tape.relu(g.dv)?);
        let neg = tape.neg(g.ds)?;
        spacing.push(tape.relu(neg)?);
        let neg = tape.neg(g.dr)?;
        rel.push(tape.relu(neg)?);
    }
    Ok(RdcPenalties {
        p_speed: batch_mean(tape, &speed)?,
        p_spacing: batch_mean(tape, &spacing)?,
        p_rel: batch_mean(tape, &rel)?,
    })
}

/// `MSE + λ1 p_speed + λ2 p_spacing + λ3 p_rel`. Terms with a zero weight are
/// left out of the total, so zero weights give exactly the MSE.
pub fn racer_terms(
    tape: &mut Tape,
    pred: &[Var],
    target: &[f64],
    grads: &[InputGradients],
    weights: &RdcWeights,
) -> Result<LossTerms> {
    let mse = mse_loss(tape, pred, target)?;
    let penalties = rdc_penalties(tape, grads)?;
    combine_racer(tape, mse, penalties, weights)
}

fn combine_racer(tape: &mut Tape, mse: Var, penalties: RdcPenalties, weights: &RdcWeights) -> Result<LossTerms> {
    weights.validate()?;
    let mut total = mse;
    for (lambda, p) in [
        (weights.lambda1, penalties.p_speed),
        (weights.lambda2, penalties.p_spacing),
        (weights.lambda3, penalties.p_rel),
    ] {
        if lambda != 0.0 {
            let weighted = tape.scale(p, lambda)?;
            total = tape.add(total, weighted)?;
        }
    }
    Ok(LossTerms { total, mse, physics: None, penalties: Some(penalties) })
}

/// `α MSE(a_true, a_pred) + (1 − α) MSE(a_pred, a_phy)`. At `α = 1` the total
/// is exactly the data MSE and at `α = 0` exactly the physics MSE.
pub fn pinn_terms(tape: &mut Tape, pred: &[Var], target: &[f64], physics: &[f64], alpha: f64) -> Result<LossTerms> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let mse = mse_loss(tape, pred, target)?;
    let phys = mse_loss(tape, pred, physics)?;
    let total = if alpha == 1.0 {
        mse
    } else if alpha == 0.0 {
        phys
    } else {
        let a = tape.scale(mse, alpha)?;
        let b = tape.scale(phys, 1.0 - alpha)?;
        tape.add(a, b)?
    };
    Ok(LossTerms { total, mse, physics: Some(phys), penalties: None })
}

/// Training objective of a model kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Mse,
    Pinn { ovrv: OvrvParams, alpha: f64 },
    Racer { weights: RdcWeights },
}

impl Objective {
    /// Records the objective over `batch` for the bound network.
    pub fn record(&self, tape: &mut Tape, net: &RacerNet, bound: &BoundNet, batch: &[Sample]) -> Result<LossTerms> {
        if batch.is_empty() {
            return Err(Error::invalid("loss over an empty batch"));
        }
        let predictions = batch.iter().map(|s| net.forward(tape, bound, s)).collect::<Result<Vec<_>>>()?;
        let pred: Vec<Var> = predictions.iter().map(|p| p.accel).collect();
        let target: Vec<f64> = batch.iter().map(|s| s.target_accel).collect();
        match self {
            Objective::Mse => {
                let mse = mse_loss(tape, &pred, &target)?;
                Ok(LossTerms { total: mse, mse, physics: None, penalties: None })
            }
            Objective::Pinn { ovrv, alpha } => {
                let physics: Vec<f64> = batch.iter().map(|s| ovrv_accel(&s.phy_state, ovrv)).collect();
                pinn_terms(tape, &pred, &target, &physics, *alpha)
            }
            Objective::Racer { weights } => {
                // The data term is recorded before the input-gradient
                // expressions, so with zero weights the total is the same
                // node as in the plain MSE objective.
                let mse = mse_loss(tape, &pred, &target)?;
                let grads =
                    predictions.iter().map(|p| net.input_gradients(tape, p)).collect::<Result<Vec<_>>>()?;
                let penalties = rdc_penalties(tape, &grads)?;
                combine_racer(tape, mse, penalties, weights)
            }
        }
    }
}

/// RACER objective over a batch.
pub fn racer_loss(tape: &mut Tape, net: &RacerNet, bound: &BoundNet, batch: &[Sample], weights: RdcWeights) -> Result<LossTerms> {
    Objective::Racer { weights }.record(tape, net, bound, batch)
}

/// Physics-informed objective over a batch, with fixed OVRV parameters.
pub fn pinn_loss(
    tape: &mut Tape,
    net: &RacerNet,
    bound: &BoundNet,
    batch: &[Sample],
    ovrv: OvrvParams,
    alpha: f64,
) -> Result<LossTerms> {
    Objective::Pinn { ovrv, alpha }.record(tape, net, bound, batch)
}
