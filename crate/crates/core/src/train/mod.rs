//! Mini-batch training with Adam, seeded shuffling and early stopping on
//! the validation objective, for the plain, physics-informed and
//! constraint-penalized model kinds.

mod adam;
mod normalizer;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use normalizer::{Normalizer, Standardizer};

use crate::autodiff::Tape;
use crate::domain::{DatasetSplit, Sample};
use crate::error::{Error, Result};
use crate::losses::{LossValues, Objective, RdcWeights};
use crate::neural::{NetConfig, RacerNet};
use crate::phys::OvrvParams;

/// Candidate physics weights for the physics-informed model.
pub const ALPHA_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Nn,
    Pinn,
    Racer,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Nn => "nn",
            ModelKind::Pinn => "pinn",
            ModelKind::Racer => "racer",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nn" => Ok(ModelKind::Nn),
            "pinn" => Ok(ModelKind::Pinn),
            "racer" => Ok(ModelKind::Racer),
            other => Err(Error::invalid(format!("model: unknown kind '{other}' (expected nn, pinn or racer)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Seed for the per-epoch shuffling.
    pub seed: u64,
    pub kind: ModelKind,
    pub weights: RdcWeights,
    /// Data weight of the physics-informed loss.
    pub alpha: f64,
    pub net: NetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 200,
            patience: 20,
            seed: 0,
            kind: ModelKind::Racer,
            weights: RdcWeights::default(),
            alpha: 0.5,
            net: NetConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("max_epochs must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        self.weights.validate()?;
        self.net.validate()
    }

    pub fn objective(&self, ovrv: Option<OvrvParams>) -> Result<Objective> {
        Ok(match self.kind {
            ModelKind::Nn => Objective::Mse,
            ModelKind::Racer => Objective::Racer { weights: self.weights },
            ModelKind::Pinn => {
                let ovrv = ovrv.ok_or_else(|| Error::invalid("the pinn model needs calibrated OVRV parameters"))?;
                Objective::Pinn { ovrv, alpha: self.alpha }
            }
        })
    }
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training objective over the epoch's batches.
    pub train_loss: f64,
    /// Validation objective (the quantity early stopping monitors).
    pub val_loss: f64,
    /// Validation data MSE, (m/s²)².
    pub val_mse: f64,
    /// Running means over the epoch's batches of the constraint penalties.
    pub p_speed: Option<f64>,
    pub p_spacing: Option<f64>,
    pub p_rel: Option<f64>,
    /// Set when this epoch improved the best validation objective.
    pub checkpoint: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub kind: ModelKind,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

impl History {
    /// CSV with header `epoch,train_loss,val_loss,p_speed,p_spacing,p_rel`;
    /// penalty cells are empty for models without penalties.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["epoch", "train_loss", "val_loss", "p_speed", "p_spacing", "p_rel"])?;
        let cell = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.val_loss.to_string(),
                cell(e.p_speed),
                cell(e.p_spacing),
                cell(e.p_rel),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Network with the best-validation parameters restored.
    pub net: RacerNet,
    pub history: History,
}

/// Data MSE of the network over `samples`, tape-free.
pub fn evaluate_mse(net: &RacerNet, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty sample set"));
    }
    let mut sq = 0.0;
    for s in samples {
        let e = net.predict_sample(s)? - s.target_accel;
        sq += e * e;
    }
    Ok(sq / samples.len() as f64)
}

#[derive(Default)]
struct Running {
    n: usize,
    total: f64,
    mse: f64,
    p: [f64; 3],
    has_p: bool,
}

impl Running {
    fn add(&mut self, v: &LossValues, weight: usize) {
        let w = weight as f64;
        self.n += weight;
        self.total += w * v.total;
        self.mse += w * v.mse;
        if let (Some(a), Some(b), Some(c)) = (v.p_speed, v.p_spacing, v.p_rel) {
            self.has_p = true;
            self.p[0] += w * a;
            self.p[1] += w * b;
            self.p[2] += w * c;
        }
    }

    fn mean(&self, x: f64) -> f64 {
        x / self.n as f64
    }

    fn penalties(&self) -> [Option<f64>; 3] {
        if self.has_p {
            self.p.map(|x| Some(self.mean(x)))
        } else {
            [None; 3]
        }
    }
}

fn diverged(epoch: usize, err: Error) -> Error {
    match err {
        Error::Domain { op } => Error::Diverged { epoch, detail: format!("non-finite value in {op}") },
        other => other,
    }
}

/// Objective values over `samples`, evaluated in chunks of `chunk` on fresh
/// tapes and combined as a size-weighted mean.
pub fn evaluate_objective(net: &RacerNet, objective: &Objective, samples: &[Sample], chunk: usize) -> Result<LossValues> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty sample set"));
    }
    let mut run = Running::default();
    for part in samples.chunks(chunk.max(1)) {
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape);
        let terms = objective.record(&mut tape, net, &bound, part)?;
        run.add(&terms.values(&tape), part.len());
    }
    let [p_speed, p_spacing, p_rel] = run.penalties();
    Ok(LossValues { total: run.mean(run.total), mse: run.mean(run.mse), physics: None, p_speed, p_spacing, p_rel })
}

/// Trains a fresh network on `split.train`, monitoring `split.validation`.
pub fn train_model(split: &DatasetSplit, cfg: &TrainConfig, ovrv: Option<OvrvParams>) -> Result<TrainOutcome> {
    train_model_with(split, cfg, ovrv, |_| {})
}

/// [`train_model`] with a callback after every epoch.
pub fn train_model_with(
    split: &DatasetSplit,
    cfg: &TrainConfig,
    ovrv: Option<OvrvParams>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let objective = cfg.objective(ovrv)?;
    if split.train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    if split.validation.is_empty() {
        return Err(Error::invalid("validation split is empty; early stopping needs validation samples"));
    }
    let mut net = RacerNet::new(cfg.net.clone())?;
    net.set_normalizer(Normalizer::fit(&split.train)?);

    let mut adam = Adam::new(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..split.train.len()).collect();
    let mut best = (f64::INFINITY, net.clone(), 0);
    let mut epochs = Vec::new();
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut run = Running::default();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Sample> = chunk.iter().map(|&i| split.train[i].clone()).collect();
            let mut tape = Tape::new();
            let bound = net.bind(&mut tape);
            let terms = objective.record(&mut tape, &net, &bound, &batch).map_err(|e| diverged(epoch, e))?;
            let values = terms.values(&tape);
            if !values.total.is_finite() {
                return Err(Error::Diverged { epoch, detail: "non-finite training loss".into() });
            }
            let grads = tape.grad(terms.total, bound.vars())?;
            adam.step(net.parameters_mut(), &grads);
            if net.parameters().iter().any(|p| !p.is_finite()) {
                return Err(Error::Diverged { epoch, detail: "non-finite parameters after the optimizer step".into() });
            }
            run.add(&values, batch.len());
        }

        let val = evaluate_objective(&net, &objective, &split.validation, cfg.batch_size).map_err(|e| diverged(epoch, e))?;
        if !val.total.is_finite() {
            return Err(Error::Diverged { epoch, detail: "non-finite validation loss".into() });
        }
        let improved = val.total < best.0;
        if improved {
            best = (val.total, net.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
        }
        let [p_speed, p_spacing, p_rel] = run.penalties();
        let record = EpochRecord {
            epoch,
            train_loss: run.mean(run.total),
            val_loss: val.total,
            val_mse: val.mse,
            p_speed,
            p_spacing,
            p_rel,
            checkpoint: improved,
        };
        on_epoch(&record);
        epochs.push(record);
        if since_best >= cfg.patience {
            stopped_early = true;
            break;
        }
    }

    let (best_val_loss, best_net, best_epoch) = best;
    Ok(TrainOutcome {
        net: best_net,
        history: History { kind: cfg.kind, epochs, best_epoch, best_val_loss, stopped_early },
    })
}

/// Result of the validation search over the physics weight.
#[derive(Debug, Clone)]
pub struct AlphaSelection {
    pub alpha: f64,
    /// `(alpha, validation data MSE)` for every candidate.
    pub scores: Vec<(f64, f64)>,
    pub outcome: TrainOutcome,
}

/// Trains one physics-informed model per candidate `alpha` and keeps the one
/// with the lowest validation data MSE (the first on ties).
pub fn select_pinn_alpha(
    split: &DatasetSplit,
    cfg: &TrainConfig,
    ovrv: OvrvParams,
    grid: &[f64],
) -> Result<AlphaSelection> {
    if grid.is_empty() {
        return Err(Error::invalid("alpha grid is empty"));
    }
    let mut best: Option<(f64, f64, TrainOutcome)> = None;
    let mut scores = Vec::with_capacity(grid.len());
    for &alpha in grid {
        let run_cfg = TrainConfig { kind: ModelKind::Pinn, alpha, ..cfg.clone() };
        let outcome = train_model(split, &run_cfg, Some(ovrv))?;
        let score = evaluate_mse(&outcome.net, &split.validation)?;
        scores.push((alpha, score));
        if best.as_ref().is_none_or(|b| score < b.1) {
            best = Some((alpha, score, outcome));
        }
    }
    let (alpha, _, outcome) = best.expect("grid is non-empty");
    Ok(AlphaSelection { alpha, scores, outcome })
}
