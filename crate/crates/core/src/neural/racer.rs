use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Activation, Dense, LstmCell, Mlp};
use crate::autodiff::{Tape, Tensor, Var};
use crate::domain::{CfState, Sample, DEFAULT_SEQ_LEN};
use crate::error::{Error, Result};
use crate::phys::OvrvParams;
use crate::sim::Controller;
use crate::train::Normalizer;

/// Number of state features `(s, Δv, v)`.
pub const FEATURES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    /// Length of the state window fed to the LSTM encoder.
    pub seq_len: usize,
    pub lstm_layers: usize,
    pub lstm_hidden: usize,
    /// Width of the tanh layer applied to the encoder's final hidden state.
    pub seq_head: usize,
    /// Hidden widths of the physics branch; its head is a linear scalar.
    pub phy_hidden: Vec<usize>,
    pub phy_activation: Activation,
    /// Seed for parameter initialization.
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            seq_len: DEFAULT_SEQ_LEN,
            lstm_layers: 2,
            lstm_hidden: 32,
            seq_head: 32,
            phy_hidden: vec![32, 32],
            phy_activation: Activation::Tanh,
            seed: 0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("seq_len", self.seq_len),
            ("lstm_layers", self.lstm_layers),
            ("lstm_hidden", self.lstm_hidden),
            ("seq_head", self.seq_head),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        if self.phy_hidden.contains(&0) {
            return Err(Error::invalid("phy_hidden widths must be at least 1"));
        }
        Ok(())
    }
}

/// Bound parameter leaves of a [`RacerNet`] on one tape, in declared order.
#[derive(Debug, Clone)]
pub struct BoundNet {
    params: Vec<Var>,
}

impl BoundNet {
    pub fn vars(&self) -> &[Var] {
        &self.params
    }
}

/// Output of [`RacerNet::forward`].
#[derive(Debug, Clone, Copy)]
pub struct Prediction {
    /// Predicted acceleration, m/s².
    pub accel: Var,
    /// The physics input leaf `[s, Δv, v]` in physical units.
    pub phy_input: Var,
}

/// Input-gradient expressions of one prediction.
#[derive(Debug, Clone, Copy)]
pub struct InputGradients {
    pub dv: Var,
    pub ds: Var,
    pub dr: Var,
}

/// Dual-branch network: an LSTM encoder over the state window and an MLP
/// over the current state, merged by a linear combiner.
#[derive(Debug, Clone, PartialEq)]
pub struct RacerNet {
    pub config: NetConfig,
    pub lstm: Vec<LstmCell>,
    pub seq_head: Dense,
    pub phy_branch: Mlp,
    pub combiner: Dense,
    pub normalizer: Option<Normalizer>,
}

impl RacerNet {
    /// Randomly initialized network; parameters uniform in `±1/√fan_in`.
    pub fn new(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let lstm = (0..config.lstm_layers)
            .map(|l| LstmCell::random(if l == 0 { FEATURES } else { config.lstm_hidden }, config.lstm_hidden, &mut rng))
            .collect();
        let seq_head = Dense::random(config.lstm_hidden, config.seq_head, Activation::Tanh, &mut rng);
        let phy_branch = Mlp::random(FEATURES, &config.phy_hidden, 1, config.phy_activation, &mut rng);
        let combiner = Dense::random(config.seq_head + 1, 1, Activation::Linear, &mut rng);
        Ok(Self { config, lstm, seq_head, phy_branch, combiner, normalizer: None })
    }

    /// Network with every parameter zero.
    pub fn zeros(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let lstm = (0..config.lstm_layers)
            .map(|l| LstmCell::zeros(if l == 0 { FEATURES } else { config.lstm_hidden }, config.lstm_hidden))
            .collect();
        let seq_head = Dense::zeros(config.lstm_hidden, config.seq_head, Activation::Tanh);
        let mut layers = Vec::new();
        let mut width = FEATURES;
        for &h in &config.phy_hidden {
            layers.push(Dense::zeros(width, h, config.phy_activation));
            width = h;
        }
        layers.push(Dense::zeros(width, 1, Activation::Linear));
        let phy_branch = Mlp::new(layers)?;
        let combiner = Dense::zeros(config.seq_head + 1, 1, Activation::Linear);
        Ok(Self { config, lstm, seq_head, phy_branch, combiner, normalizer: None })
    }

    /// Network whose output is exactly `coefficients · [s, Δv, v] + intercept`:
    /// the physics branch is a single linear layer, the combiner passes it
    /// through and the sequence branch is switched off.
    pub fn affine(mut config: NetConfig, coefficients: [f64; 3], intercept: f64, normalizer: Normalizer) -> Result<Self> {
        config.phy_hidden = Vec::new();
        let mut net = Self::zeros(config)?;
        let sa = normalizer.target.std;
        let mut w = Tensor::zeros(1, FEATURES);
        let mut offset = intercept - normalizer.target.mean;
        for (k, (c, f)) in coefficients.iter().zip(normalizer.features).enumerate() {
            w.set(0, k, c * f.std / sa);
            offset += c * f.mean;
        }
        net.phy_branch = Mlp::new(vec![Dense::new(w, Tensor::scalar(offset / sa), Activation::Linear)?])?;
        net.combiner.weights.set(0, net.config.seq_head, 1.0);
        net.normalizer = Some(normalizer);
        Ok(net)
    }

    /// The OVRV model written as a network.
    pub fn ovrv_form(config: NetConfig, params: &OvrvParams, normalizer: Normalizer) -> Result<Self> {
        let coefficients = [params.k1, params.k2, -params.k1 * params.tau];
        Self::affine(config, coefficients, -params.k1 * params.eta, normalizer)
    }

    pub fn seq_len(&self) -> usize {
        self.config.seq_len
    }

    pub fn normalizer(&self) -> Result<&Normalizer> {
        self.normalizer.as_ref().ok_or(Error::UnfittedNormalizer)
    }

    pub fn set_normalizer(&mut self, normalizer: Normalizer) {
        self.normalizer = Some(normalizer);
    }

    /// Parameter tensors in declared order: LSTM layers (gate weights
    /// `f, i, o, c`, then biases), sequence head, physics branch, combiner.
    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.lstm.iter().flat_map(|c| c.params()).collect();
        out.extend(self.seq_head.params());
        out.extend(self.phy_branch.params());
        out.extend(self.combiner.params());
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.lstm.iter_mut().flat_map(|c| c.params_mut()).collect();
        out.extend(self.seq_head.params_mut());
        out.extend(self.phy_branch.params_mut());
        out.extend(self.combiner.params_mut());
        out
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    /// Records every parameter as a leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> BoundNet {
        BoundNet { params: self.parameters().into_iter().map(|p| tape.leaf(p.clone())).collect() }
    }

    fn check_window(&self, window: &[CfState]) -> Result<()> {
        if window.len() != self.config.seq_len {
            return Err(Error::Shape {
                context: "sequence window",
                detail: format!("expected {} states, got {}", self.config.seq_len, window.len()),
            });
        }
        Ok(())
    }

    /// LSTM, sequence-head, physics-branch and combiner leaves.
    fn split_bound<'a>(&self, bound: &'a BoundNet) -> Result<[&'a [Var]; 4]> {
        let lstm_end = 8 * self.lstm.len();
        let phy_end = lstm_end + 2 + 2 * self.phy_branch.layers.len();
        if bound.params.len() != phy_end + 2 {
            return Err(Error::invalid("bound parameters do not belong to this network"));
        }
        let p = &bound.params;
        Ok([&p[..lstm_end], &p[lstm_end..lstm_end + 2], &p[lstm_end + 2..phy_end], &p[phy_end..]])
    }

    /// Records the prediction for `sample` on the tape.
    pub fn forward(&self, tape: &mut Tape, bound: &BoundNet, sample: &Sample) -> Result<Prediction> {
        self.forward_window(tape, bound, &sample.seq_window, &sample.phy_state)
    }

    fn forward_window(&self, tape: &mut Tape, bound: &BoundNet, window: &[CfState], phy: &CfState) -> Result<Prediction> {
        self.check_window(window)?;
        let norm = *self.normalizer()?;
        let [lstm_p, head_p, phy_p, comb_p] = self.split_bound(bound)?;
        let hidden = self.config.lstm_hidden;

        let zero = tape.leaf(Tensor::zeros(hidden, 1));
        let mut h = vec![zero; self.lstm.len()];
        let mut c = vec![zero; self.lstm.len()];
        for state in window {
            let mut x = tape.leaf(Tensor::vector(norm.apply_features(state.features()).to_vec()));
            for (l, cell) in self.lstm.iter().enumerate() {
                let (hl, cl) = cell.record(tape, &lstm_p[8 * l..8 * l + 8], x, h[l], c[l])?;
                h[l] = hl;
                c[l] = cl;
                x = hl;
            }
        }
        let z_seq = self.seq_head.record(tape, head_p, h[self.lstm.len() - 1])?;

        let phy_input = tape.leaf(Tensor::vector(phy.features().to_vec()));
        let mean = tape.leaf(Tensor::vector(norm.features.iter().map(|f| f.mean).collect()));
        let inv_std = tape.leaf(Tensor::vector(norm.features.iter().map(|f| 1.0 / f.std).collect()));
        let centered = tape.sub(phy_input, mean)?;
        let x_n = tape.mul(centered, inv_std)?;
        let z_phy = self.phy_branch.record(tape, phy_p, x_n)?;

        let merged = tape.concat(z_seq, z_phy)?;
        let y = self.combiner.record(tape, comb_p, merged)?;
        let scaled = tape.scale(y, norm.target.std)?;
        let offset = tape.scalar(norm.target.mean);
        let accel = tape.add(scaled, offset)?;
        Ok(Prediction { accel, phy_input })
    }

    /// `(da/dv, da/ds, da/dΔv)` of a recorded prediction, as tape expressions
    /// in physical units.
    ///
    /// The speed derivative holds the lead speed fixed, so a change in `v`
    /// also moves `Δv = v_l − v`: `da/dv = ∂a/∂v − ∂a/∂Δv`. This is the
    /// convention of [`crate::phys::ovrv_rdc_derivatives`].
    pub fn input_gradients(&self, tape: &mut Tape, prediction: &Prediction) -> Result<InputGradients> {
        let g = tape.grad_as_expression(prediction.accel, prediction.phy_input)?;
        let ds = tape.element(g, 0)?;
        let dr = tape.element(g, 1)?;
        let dv_partial = tape.element(g, 2)?;
        let dv = tape.sub(dv_partial, dr)?;
        Ok(InputGradients { dv, ds, dr })
    }

    /// Tape-free prediction for a state window (oldest first).
    pub fn predict(&self, window: &[CfState]) -> Result<f64> {
        self.check_window(window)?;
        let phy = window[window.len() - 1];
        self.predict_with(window, &phy)
    }

    pub fn predict_sample(&self, sample: &Sample) -> Result<f64> {
        self.check_window(&sample.seq_window)?;
        self.predict_with(&sample.seq_window, &sample.phy_state)
    }

    fn predict_with(&self, window: &[CfState], phy: &CfState) -> Result<f64> {
        let norm = self.normalizer()?;
        let hidden = self.config.lstm_hidden;
        let mut h = vec![Tensor::zeros(hidden, 1); self.lstm.len()];
        let mut c = h.clone();
        for state in window {
            let mut x = Tensor::vector(norm.apply_features(state.features()).to_vec());
            for (l, cell) in self.lstm.iter().enumerate() {
                let (hl, cl) = cell.step(&x, &h[l], &c[l])?;
                x = hl.clone();
                h[l] = hl;
                c[l] = cl;
            }
        }
        let z_seq = self.seq_head.eval(&h[self.lstm.len() - 1])?;
        let x_n = Tensor::vector(norm.apply_features(phy.features()).to_vec());
        let z_phy = self.phy_branch.eval(&x_n)?;
        let y = self.combiner.eval(&Tensor::concat(&z_seq, &z_phy))?.item();
        let a = norm.invert_target(y);
        if !a.is_finite() {
            return Err(Error::Domain { op: "forward" });
        }
        Ok(a)
    }
}

impl Controller for RacerNet {
    fn history_len(&self) -> usize {
        self.config.seq_len
    }

    fn accel(&mut self, history: &[CfState]) -> Result<f64> {
        self.predict(history)
    }
}
