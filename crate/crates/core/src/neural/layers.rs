use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Linear,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Linear => x,
        }
    }

    fn record(self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            Activation::Tanh => tape.tanh(x),
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Linear => Ok(x),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Linear => "linear",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::invalid(format!(
                "activation '{other}' is not supported; input-gradient penalties need a smooth activation (tanh, sigmoid or linear)"
            ))),
        }
    }
}

fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Tensor {
    Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect())
}

fn check_vector(context: &'static str, x: &Tensor, len: usize) -> Result<()> {
    if x.shape() != (len, 1) {
        return Err(Error::Shape { context, detail: format!("expected ({len}, 1), got {:?}", x.shape()) });
    }
    Ok(())
}

/// Fully connected layer `act(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Dense {
    pub fn new(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if bias.shape() != (weights.rows(), 1) {
            return Err(Error::Shape {
                context: "dense",
                detail: format!("bias {:?} for weights {:?}", bias.shape(), weights.shape()),
            });
        }
        Ok(Self { weights, bias, activation })
    }

    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self { weights: Tensor::zeros(output, input), bias: Tensor::zeros(output, 1), activation }
    }

    /// Weights and biases uniform in `±1/√input`.
    pub fn random(input: usize, output: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Self { weights: uniform(output, input, bound, rng), bias: uniform(output, 1, bound, rng), activation }
    }

    pub fn input_size(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_size(&self) -> usize {
        self.weights.rows()
    }

    pub fn eval(&self, x: &Tensor) -> Result<Tensor> {
        check_vector("dense input", x, self.input_size())?;
        let z = self.weights.matvec(x).zip_map(&self.bias, |a, b| a + b);
        Ok(z.map(|v| self.activation.apply(v)))
    }

    /// `params` are this layer's bound `[weights, bias]`.
    pub fn record(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var> {
        let z = tape.matvec(params[0], x)?;
        let z = tape.add(z, params[1])?;
        self.activation.record(tape, z)
    }

    pub fn params(&self) -> [&Tensor; 2] {
        [&self.weights, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.weights, &mut self.bias]
    }
}

/// Chain of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("an MLP needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].output_size() != pair[1].input_size() {
                return Err(Error::Shape {
                    context: "mlp",
                    detail: format!("layer of width {} feeds input size {}", pair[0].output_size(), pair[1].input_size()),
                });
            }
        }
        Ok(Self { layers })
    }

    /// Hidden layers of the given widths with `hidden_act`, then a linear head.
    pub fn random(input: usize, hidden: &[usize], output: usize, hidden_act: Activation, rng: &mut impl Rng) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut width = input;
        for &h in hidden {
            layers.push(Dense::random(width, h, hidden_act, rng));
            width = h;
        }
        layers.push(Dense::random(width, output, Activation::Linear, rng));
        Self { layers }
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].input_size()
    }

    pub fn output_size(&self) -> usize {
        self.layers[self.layers.len() - 1].output_size()
    }

    pub fn eval(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.eval(&h)?;
        }
        Ok(h)
    }

    pub fn record(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var> {
        let mut h = x;
        for (layer, p) in self.layers.iter().zip(params.chunks(2)) {
            h = layer.record(tape, p, h)?;
        }
        Ok(h)
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}

/// LSTM cell; each gate matrix acts on the concatenation `[h_{t−1}; x_t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub w_f: Tensor,
    pub w_i: Tensor,
    pub w_o: Tensor,
    pub w_c: Tensor,
    pub b_f: Tensor,
    pub b_i: Tensor,
    pub b_o: Tensor,
    pub b_c: Tensor,
}

impl LstmCell {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = Tensor::zeros(hidden, hidden + input);
        let b = Tensor::zeros(hidden, 1);
        Self {
            w_f: w.clone(),
            w_i: w.clone(),
            w_o: w.clone(),
            w_c: w,
            b_f: b.clone(),
            b_i: b.clone(),
            b_o: b.clone(),
            b_c: b,
        }
    }

    /// All parameters uniform in `±1/√(hidden + input)`.
    pub fn random(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / ((hidden + input) as f64).sqrt();
        let mut w = || uniform(hidden, hidden + input, bound, rng);
        let (w_f, w_i, w_o, w_c) = (w(), w(), w(), w());
        let mut b = || uniform(hidden, 1, bound, rng);
        let (b_f, b_i, b_o, b_c) = (b(), b(), b(), b());
        Self { w_f, w_i, w_o, w_c, b_f, b_i, b_o, b_c }
    }

    pub fn hidden_size(&self) -> usize {
        self.w_f.rows()
    }

    pub fn input_size(&self) -> usize {
        self.w_f.cols() - self.hidden_size()
    }

    pub fn validate(&self) -> Result<()> {
        let (h, hi) = self.w_f.shape();
        if hi <= h {
            return Err(Error::Shape { context: "lstm", detail: format!("gate matrix {:?} has no input columns", (h, hi)) });
        }
        for w in [&self.w_i, &self.w_o, &self.w_c] {
            if w.shape() != (h, hi) {
                return Err(Error::Shape { context: "lstm", detail: format!("gate matrices {:?} vs {:?}", (h, hi), w.shape()) });
            }
        }
        for b in [&self.b_f, &self.b_i, &self.b_o, &self.b_c] {
            if b.shape() != (h, 1) {
                return Err(Error::Shape { context: "lstm", detail: format!("bias {:?} for hidden size {h}", b.shape()) });
            }
        }
        if self.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("LSTM parameters must be finite"));
        }
        Ok(())
    }

    /// One time step: returns `(h_t, c_t)`.
    pub fn step(&self, x: &Tensor, h_prev: &Tensor, c_prev: &Tensor) -> Result<(Tensor, Tensor)> {
        let hidden = self.hidden_size();
        check_vector("lstm input", x, self.input_size())?;
        check_vector("lstm hidden state", h_prev, hidden)?;
        check_vector("lstm cell state", c_prev, hidden)?;
        let z = Tensor::concat(h_prev, x);
        let gate = |w: &Tensor, b: &Tensor| w.matvec(&z).zip_map(b, |a, b| a + b);
        let f = gate(&self.w_f, &self.b_f).map(sigmoid);
        let i = gate(&self.w_i, &self.b_i).map(sigmoid);
        let o = gate(&self.w_o, &self.b_o).map(sigmoid);
        let c_tilde = gate(&self.w_c, &self.b_c).map(f64::tanh);
        let c = f.zip_map(c_prev, |a, b| a * b).zip_map(&i.zip_map(&c_tilde, |a, b| a * b), |a, b| a + b);
        let h = o.zip_map(&c.map(f64::tanh), |a, b| a * b);
        Ok((h, c))
    }

    /// Records one time step; `params` are this cell's bound parameters in
    /// declared order.
    pub(crate) fn record(&self, tape: &mut Tape, params: &[Var], x: Var, h_prev: Var, c_prev: Var) -> Result<(Var, Var)> {
        let z = tape.concat(h_prev, x)?;
        let gate = |tape: &mut Tape, w: Var, b: Var| -> Result<Var> {
            let g = tape.matvec(w, z)?;
            tape.add(g, b)
        };
        let f = gate(tape, params[0], params[4])?;
        let f = tape.sigmoid(f)?;
        let i = gate(tape, params[1], params[5])?;
        let i = tape.sigmoid(i)?;
        let o = gate(tape, params[2], params[6])?;
        let o = tape.sigmoid(o)?;
        let c_tilde = gate(tape, params[3], params[7])?;
        let c_tilde = tape.tanh(c_tilde)?;
        let keep = tape.mul(f, c_prev)?;
        let write = tape.mul(i, c_tilde)?;
        let c = tape.add(keep, write)?;
        let tc = tape.tanh(c)?;
        let h = tape.mul(o, tc)?;
        Ok((h, c))
    }

    pub fn params(&self) -> [&Tensor; 8] {
        [&self.w_f, &self.w_i, &self.w_o, &self.w_c, &self.b_f, &self.b_i, &self.b_o, &self.b_c]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 8] {
        [
            &mut self.w_f,
            &mut self.w_i,
            &mut self.w_o,
            &mut self.w_c,
            &mut self.b_f,
            &mut self.b_i,
            &mut self.b_o,
            &mut self.b_c,
        ]
    }
}

/// Free-function form of [`LstmCell::step`].
pub fn lstm_step(cell: &LstmCell, x_t: &Tensor, h_prev: &Tensor, c_prev: &Tensor) -> Result<(Tensor, Tensor)> {
    cell.step(x_t, h_prev, c_prev)
}
