use std::sync::atomic::{AtomicU64, Ordering};

use super::Tensor;
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    Tanh(usize),
    Sigmoid(usize),
    Relu(usize),
    Max(usize, usize),
    Recip(usize),
    /// `src * [lhs > rhs]` elementwise, with `rhs = 0` when absent. The
    /// indicator is piecewise constant, so no gradient flows to `lhs`/`rhs`.
    Mask { src: usize, lhs: usize, rhs: Option<usize> },
    MatVec(usize, usize),
    MatVecT(usize, usize),
    Outer(usize, usize),
    Sum(usize),
    Broadcast { src: usize, rows: usize, cols: usize },
    Concat(usize, usize),
    Slice { src: usize, offset: usize, len: usize },
    Pad { src: usize, offset: usize, total: usize },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Append-only record of a computation for reverse-mode differentiation.
///
/// Every recorded node only refers to earlier nodes, so the graph is acyclic
/// by construction. [`Tape::grad_as_expression`] records the backward pass
/// itself as new nodes, which makes input-gradients differentiable a second
/// time.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn indicator(lhs: f64, rhs: f64) -> f64 {
    if lhs > rhs {
        1.0
    } else {
        0.0
    }
}

fn same_shape(context: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape {
            context,
            detail: format!("{:?} vs {:?}", a.shape(), b.shape()),
        });
    }
    Ok(())
}

fn require_vector(context: &'static str, t: &Tensor) -> Result<()> {
    if !t.is_vector() {
        return Err(Error::Shape { context, detail: format!("expected a column vector, got {:?}", t.shape()) });
    }
    Ok(())
}

fn accumulate(adjoints: &mut [Option<Tensor>], index: usize, contribution: Tensor) {
    match &mut adjoints[index] {
        Some(existing) => existing.add_assign(&contribution),
        slot @ None => *slot = Some(contribution),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed), nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops all recorded nodes. Vars from before the clear become invalid.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.id = NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed);
    }

    fn check(&self, var: Var) -> Result<usize> {
        if var.tape != self.id || var.index >= self.nodes.len() {
            return Err(Error::ForeignVar);
        }
        Ok(var.index)
    }

    fn var(&self, index: usize) -> Var {
        Var { tape: self.id, index }
    }

    fn val(&self, index: usize) -> &Tensor {
        &self.nodes[index].value
    }

    pub fn value(&self, var: Var) -> &Tensor {
        let index = self.check(var).expect("var recorded on a different tape");
        self.val(index)
    }

    pub fn scalar_value(&self, var: Var) -> f64 {
        self.value(var).item()
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { op: Op::Leaf, value });
        self.var(self.nodes.len() - 1)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.leaf(Tensor::scalar(value))
    }

    /// Overwrites the value of a leaf. Call [`Tape::replay`] afterwards to
    /// refresh dependent nodes.
    pub fn set_leaf(&mut self, var: Var, value: Tensor) -> Result<()> {
        let index = self.check(var)?;
        let node = &mut self.nodes[index];
        if !matches!(node.op, Op::Leaf) {
            return Err(Error::invalid("set_leaf on a non-leaf node"));
        }
        same_shape("set_leaf", &node.value, &value)?;
        node.value = value;
        Ok(())
    }

    /// Recomputes every non-leaf node from the current leaf values.
    pub fn replay(&mut self) -> Result<()> {
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let value = self.eval(&self.nodes[i].op)?;
            self.nodes[i].value = value;
        }
        Ok(())
    }

    fn eval(&self, op: &Op) -> Result<Tensor> {
        let v = |i: usize| self.val(i);
        let out = match *op {
            Op::Leaf => unreachable!("leaves are not evaluated"),
            Op::Add(a, b) => {
                same_shape("add", v(a), v(b))?;
                v(a).zip_map(v(b), |x, y| x + y)
            }
            Op::Sub(a, b) => {
                same_shape("sub", v(a), v(b))?;
                v(a).zip_map(v(b), |x, y| x - y)
            }
            Op::Mul(a, b) => {
                same_shape("mul", v(a), v(b))?;
                v(a).zip_map(v(b), |x, y| x * y)
            }
            Op::Neg(a) => v(a).map(|x| -x),
            Op::Scale(a, c) => v(a).map(|x| c * x),
            Op::Tanh(a) => v(a).map(f64::tanh),
            Op::Sigmoid(a) => v(a).map(sigmoid),
            Op::Relu(a) => v(a).map(|x| x.max(0.0)),
            Op::Max(a, b) => {
                same_shape("max", v(a), v(b))?;
                v(a).zip_map(v(b), |x, y| if x > y { x } else { y })
            }
            Op::Recip(a) => {
                if v(a).data().contains(&0.0) {
                    return Err(Error::Domain { op: "reciprocal" });
                }
                v(a).map(|x| 1.0 / x)
            }
            Op::Mask { src, lhs, rhs } => {
                same_shape("mask", v(src), v(lhs))?;
                match rhs {
                    Some(r) => {
                        same_shape("mask", v(lhs), v(r))?;
                        let gate = v(lhs).zip_map(v(r), indicator);
                        v(src).zip_map(&gate, |x, g| x * g)
                    }
                    None => v(src).zip_map(v(lhs), |x, l| x * indicator(l, 0.0)),
                }
            }
            Op::MatVec(w, x) => {
                require_vector("matvec", v(x))?;
                if v(w).cols() != v(x).rows() {
                    return Err(Error::Shape {
                        context: "matvec",
                        detail: format!("{:?} * {:?}", v(w).shape(), v(x).shape()),
                    });
                }
                v(w).matvec(v(x))
            }
            Op::MatVecT(w, u) => {
                require_vector("matvec_t", v(u))?;
                if v(w).rows() != v(u).rows() {
                    return Err(Error::Shape {
                        context: "matvec_t",
                        detail: format!("{:?}^T * {:?}", v(w).shape(), v(u).shape()),
                    });
                }
                v(w).matvec_t(v(u))
            }
            Op::Outer(a, b) => {
                require_vector("outer", v(a))?;
                require_vector("outer", v(b))?;
                Tensor::outer(v(a), v(b))
            }
            Op::Sum(a) => Tensor::scalar(v(a).sum()),
            Op::Broadcast { src, rows, cols } => {
                if !v(src).is_scalar() {
                    return Err(Error::Shape { context: "broadcast", detail: "source must be scalar".into() });
                }
                Tensor::filled(rows, cols, v(src).item())
            }
            Op::Concat(a, b) => {
                require_vector("concat", v(a))?;
                require_vector("concat", v(b))?;
                Tensor::concat(v(a), v(b))
            }
            Op::Slice { src, offset, len } => {
                require_vector("slice", v(src))?;
                if offset + len > v(src).len() {
                    return Err(Error::Shape {
                        context: "slice",
                        detail: format!("[{offset}, {}) of length {}", offset + len, v(src).len()),
                    });
                }
                v(src).slice(offset, len)
            }
            Op::Pad { src, offset, total } => {
                require_vector("pad", v(src))?;
                if offset + v(src).len() > total {
                    return Err(Error::Shape { context: "pad", detail: "segment exceeds total length".into() });
                }
                v(src).padded(offset, total)
            }
        };
        if !out.is_finite() {
            return Err(Error::Domain { op: op_name(op) });
        }
        Ok(out)
    }

    fn push(&mut self, op: Op) -> Result<Var> {
        let value = self.eval(&op)?;
        self.nodes.push(Node { op, value });
        Ok(self.var(self.nodes.len() - 1))
    }

    // Used while recording a backward pass, where shapes are known to agree.
    fn push_unchecked(&mut self, op: Op) -> usize {
        let value = self.eval(&op).expect("backward op on consistent shapes");
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        self.push(Op::Mul(a, b))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        let a = self.check(a)?;
        self.push(Op::Neg(a))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let a = self.check(a)?;
        self.push(Op::Scale(a, factor))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let a = self.check(a)?;
        self.push(Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let a = self.check(a)?;
        self.push(Op::Sigmoid(a))
    }

    /// `max(0, a)`, with derivative 0 at the kink.
    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let a = self.check(a)?;
        self.push(Op::Relu(a))
    }

    /// Elementwise maximum; ties route the gradient to `b`.
    pub fn max(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        self.push(Op::Max(a, b))
    }

    pub fn recip(&mut self, a: Var) -> Result<Var> {
        let a = self.check(a)?;
        self.push(Op::Recip(a))
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (w, x) = (self.check(w)?, self.check(x)?);
        self.push(Op::MatVec(w, x))
    }

    pub fn matvec_t(&mut self, w: Var, u: Var) -> Result<Var> {
        let (w, u) = (self.check(w)?, self.check(u)?);
        self.push(Op::MatVecT(w, u))
    }

    pub fn outer(&mut self, u: Var, v: Var) -> Result<Var> {
        let (u, v) = (self.check(u)?, self.check(v)?);
        self.push(Op::Outer(u, v))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let a = self.check(a)?;
        self.push(Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let p = self.mul(a, b)?;
        self.sum(p)
    }

    pub fn broadcast(&mut self, scalar: Var, rows: usize, cols: usize) -> Result<Var> {
        let src = self.check(scalar)?;
        self.push(Op::Broadcast { src, rows, cols })
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        self.push(Op::Concat(a, b))
    }

    pub fn slice(&mut self, a: Var, offset: usize, len: usize) -> Result<Var> {
        let src = self.check(a)?;
        self.push(Op::Slice { src, offset, len })
    }

    /// Scalar element `index` of a vector.
    pub fn element(&mut self, a: Var, index: usize) -> Result<Var> {
        self.slice(a, index, 1)
    }

    /// Marks which nodes (up to `end`) depend on any of `roots`.
    fn dependents(&self, roots: &[usize], end: usize) -> Vec<bool> {
        let mut dep = vec![false; end + 1];
        let start = match roots.iter().min() {
            Some(&m) => m,
            None => return dep,
        };
        for &r in roots {
            if r <= end {
                dep[r] = true;
            }
        }
        for i in start..=end {
            if dep[i] {
                continue;
            }
            dep[i] = match self.nodes[i].op {
                Op::Leaf => false,
                Op::Add(a, b)
                | Op::Sub(a, b)
                | Op::Mul(a, b)
                | Op::Max(a, b)
                | Op::MatVec(a, b)
                | Op::MatVecT(a, b)
                | Op::Outer(a, b)
                | Op::Concat(a, b) => dep[a] || dep[b],
                Op::Neg(a)
                | Op::Scale(a, _)
                | Op::Tanh(a)
                | Op::Sigmoid(a)
                | Op::Relu(a)
                | Op::Recip(a)
                | Op::Sum(a) => dep[a],
                Op::Mask { src, .. } | Op::Broadcast { src, .. } | Op::Slice { src, .. } | Op::Pad { src, .. } => {
                    dep[src]
                }
            };
        }
        dep
    }

    /// Reverse-mode gradients of the scalar `output` with respect to each of
    /// `inputs`. Inputs may be leaves or interior nodes. Inputs the output
    /// does not depend on get a zero gradient.
    pub fn grad(&self, output: Var, inputs: &[Var]) -> Result<Vec<Tensor>> {
        let out = self.check(output)?;
        let targets = inputs.iter().map(|&v| self.check(v)).collect::<Result<Vec<_>>>()?;
        let out_value = self.val(out);
        if !out_value.is_scalar() {
            return Err(Error::NonScalarOutput { rows: out_value.rows(), cols: out_value.cols() });
        }
        let needed = self.dependents(&targets, out);
        let mut adjoints: Vec<Option<Tensor>> = vec![None; out + 1];
        adjoints[out] = Some(Tensor::scalar(1.0));

        for i in (0..=out).rev() {
            if !needed[i] {
                continue;
            }
            let Some(g) = adjoints[i].take() else { continue };
            self.backprop_node(i, &g, &needed, &mut adjoints);
            adjoints[i] = Some(g);
        }

        Ok(targets
            .iter()
            .map(|&t| {
                if t > out {
                    let (r, c) = self.val(t).shape();
                    return Tensor::zeros(r, c);
                }
                adjoints[t].clone().unwrap_or_else(|| {
                    let (r, c) = self.val(t).shape();
                    Tensor::zeros(r, c)
                })
            })
            .collect())
    }

    fn backprop_node(&self, i: usize, g: &Tensor, needed: &[bool], adj: &mut [Option<Tensor>]) {
        let y = self.val(i);
        let v = |j: usize| self.val(j);
        match self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if needed[a] {
                    accumulate(adj, a, g.clone());
                }
                if needed[b] {
                    accumulate(adj, b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if needed[a] {
                    accumulate(adj, a, g.clone());
                }
                if needed[b] {
                    accumulate(adj, b, g.map(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                if needed[a] {
                    accumulate(adj, a, g.zip_map(v(b), |x, y| x * y));
                }
                if needed[b] {
                    accumulate(adj, b, g.zip_map(v(a), |x, y| x * y));
                }
            }
            Op::Neg(a) => accumulate(adj, a, g.map(|x| -x)),
            Op::Scale(a, c) => accumulate(adj, a, g.map(|x| c * x)),
            Op::Tanh(a) => accumulate(adj, a, g.zip_map(y, |g, y| g * (1.0 - y * y))),
            Op::Sigmoid(a) => accumulate(adj, a, g.zip_map(y, |g, y| g * y * (1.0 - y))),
            Op::Relu(a) => accumulate(adj, a, g.zip_map(v(a), |g, x| g * indicator(x, 0.0))),
            Op::Max(a, b) => {
                let gate = v(a).zip_map(v(b), indicator);
                if needed[a] {
                    accumulate(adj, a, g.zip_map(&gate, |g, m| g * m));
                }
                if needed[b] {
                    accumulate(adj, b, g.zip_map(&gate, |g, m| g * (1.0 - m)));
                }
            }
            Op::Recip(a) => accumulate(adj, a, g.zip_map(y, |g, y| -g * y * y)),
            Op::Mask { src, lhs, rhs } => {
                let gate = match rhs {
                    Some(r) => v(lhs).zip_map(v(r), indicator),
                    None => v(lhs).map(|l| indicator(l, 0.0)),
                };
                accumulate(adj, src, g.zip_map(&gate, |g, m| g * m));
            }
            Op::MatVec(w, x) => {
                if needed[w] {
                    match &mut adj[w] {
                        Some(existing) => existing.add_outer(g, v(x)),
                        slot @ None => *slot = Some(Tensor::outer(g, v(x))),
                    }
                }
                if needed[x] {
                    accumulate(adj, x, v(w).matvec_t(g));
                }
            }
            Op::MatVecT(w, u) => {
                if needed[w] {
                    match &mut adj[w] {
                        Some(existing) => existing.add_outer(v(u), g),
                        slot @ None => *slot = Some(Tensor::outer(v(u), g)),
                    }
                }
                if needed[u] {
                    accumulate(adj, u, v(w).matvec(g));
                }
            }
            Op::Outer(a, b) => {
                if needed[a] {
                    accumulate(adj, a, g.matvec(v(b)));
                }
                if needed[b] {
                    accumulate(adj, b, g.matvec_t(v(a)));
                }
            }
            Op::Sum(a) => {
                let (r, c) = v(a).shape();
                accumulate(adj, a, Tensor::filled(r, c, g.item()));
            }
            Op::Broadcast { src, .. } => accumulate(adj, src, Tensor::scalar(g.sum())),
            Op::Concat(a, b) => {
                let la = v(a).len();
                if needed[a] {
                    accumulate(adj, a, g.slice(0, la));
                }
                if needed[b] {
                    accumulate(adj, b, g.slice(la, v(b).len()));
                }
            }
            Op::Slice { src, offset, .. } => accumulate(adj, src, g.padded(offset, v(src).len())),
            Op::Pad { src, offset, .. } => accumulate(adj, src, g.slice(offset, v(src).len())),
        }
    }

    /// Records `d output / d input` as a new node on this tape.
    ///
    /// The backward pass is built out of ordinary tape operations, so the
    /// returned Var can feed further computation (penalties, means,
    /// weighting) and be differentiated again by [`Tape::grad`]. Only nodes on
    /// a path from `input` to `output` are visited.
    pub fn grad_as_expression(&mut self, output: Var, input: Var) -> Result<Var> {
        let out = self.check(output)?;
        let inp = self.check(input)?;
        let out_value = self.val(out);
        if !out_value.is_scalar() {
            return Err(Error::NonScalarOutput { rows: out_value.rows(), cols: out_value.cols() });
        }
        if inp > out {
            let (r, c) = self.val(inp).shape();
            return Ok(self.leaf(Tensor::zeros(r, c)));
        }
        let dep = self.dependents(&[inp], out);
        let mut adj: Vec<Option<usize>> = vec![None; out + 1];
        adj[out] = Some(self.leaf(Tensor::scalar(1.0)).index);

        for i in (inp + 1..=out).rev() {
            if !dep[i] {
                continue;
            }
            let Some(g) = adj[i] else { continue };
            self.record_backward(i, g, &dep, &mut adj);
        }

        Ok(match adj[inp] {
            Some(index) => self.var(index),
            None => {
                let (r, c) = self.val(inp).shape();
                self.leaf(Tensor::zeros(r, c))
            }
        })
    }

    fn acc_expr(&mut self, adj: &mut [Option<usize>], target: usize, contribution: usize) {
        adj[target] = Some(match adj[target] {
            Some(existing) => self.push_unchecked(Op::Add(existing, contribution)),
            None => contribution,
        });
    }

    fn record_backward(&mut self, i: usize, g: usize, dep: &[bool], adj: &mut [Option<usize>]) {
        let op = self.nodes[i].op.clone();
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if dep[a] {
                    self.acc_expr(adj, a, g);
                }
                if dep[b] {
                    self.acc_expr(adj, b, g);
                }
            }
            Op::Sub(a, b) => {
                if dep[a] {
                    self.acc_expr(adj, a, g);
                }
                if dep[b] {
                    let n = self.push_unchecked(Op::Neg(g));
                    self.acc_expr(adj, b, n);
                }
            }
            Op::Mul(a, b) => {
                if dep[a] {
                    let c = self.push_unchecked(Op::Mul(g, b));
                    self.acc_expr(adj, a, c);
                }
                if dep[b] {
                    let c = self.push_unchecked(Op::Mul(g, a));
                    self.acc_expr(adj, b, c);
                }
            }
            Op::Neg(a) => {
                let c = self.push_unchecked(Op::Neg(g));
                self.acc_expr(adj, a, c);
            }
            Op::Scale(a, factor) => {
                let c = self.push_unchecked(Op::Scale(g, factor));
                self.acc_expr(adj, a, c);
            }
            Op::Tanh(a) => {
                // g * (1 - y^2) = g - (g * y) * y
                let gy = self.push_unchecked(Op::Mul(g, i));
                let gyy = self.push_unchecked(Op::Mul(gy, i));
                let c = self.push_unchecked(Op::Sub(g, gyy));
                self.acc_expr(adj, a, c);
            }
            Op::Sigmoid(a) => {
                // g * y * (1 - y) = g*y - (g*y)*y
                let gy = self.push_unchecked(Op::Mul(g, i));
                let gyy = self.push_unchecked(Op::Mul(gy, i));
                let c = self.push_unchecked(Op::Sub(gy, gyy));
                self.acc_expr(adj, a, c);
            }
            Op::Relu(a) => {
                let c = self.push_unchecked(Op::Mask { src: g, lhs: a, rhs: None });
                self.acc_expr(adj, a, c);
            }
            Op::Max(a, b) => {
                let m = self.push_unchecked(Op::Mask { src: g, lhs: a, rhs: Some(b) });
                if dep[a] {
                    self.acc_expr(adj, a, m);
                }
                if dep[b] {
                    let c = self.push_unchecked(Op::Sub(g, m));
                    self.acc_expr(adj, b, c);
                }
            }
            Op::Recip(a) => {
                let gy = self.push_unchecked(Op::Mul(g, i));
                let gyy = self.push_unchecked(Op::Mul(gy, i));
                let c = self.push_unchecked(Op::Neg(gyy));
                self.acc_expr(adj, a, c);
            }
            Op::Mask { src, lhs, rhs } => {
                let c = self.push_unchecked(Op::Mask { src: g, lhs, rhs });
                self.acc_expr(adj, src, c);
            }
            Op::MatVec(w, x) => {
                if dep[w] {
                    let c = self.push_unchecked(Op::Outer(g, x));
                    self.acc_expr(adj, w, c);
                }
                if dep[x] {
                    let c = self.push_unchecked(Op::MatVecT(w, g));
                    self.acc_expr(adj, x, c);
                }
            }
            Op::MatVecT(w, u) => {
                if dep[w] {
                    let c = self.push_unchecked(Op::Outer(u, g));
                    self.acc_expr(adj, w, c);
                }
                if dep[u] {
                    let c = self.push_unchecked(Op::MatVec(w, g));
                    self.acc_expr(adj, u, c);
                }
            }
            Op::Outer(a, b) => {
                if dep[a] {
                    let c = self.push_unchecked(Op::MatVec(g, b));
                    self.acc_expr(adj, a, c);
                }
                if dep[b] {
                    let c = self.push_unchecked(Op::MatVecT(g, a));
                    self.acc_expr(adj, b, c);
                }
            }
            Op::Sum(a) => {
                let (rows, cols) = self.val(a).shape();
                let c = self.push_unchecked(Op::Broadcast { src: g, rows, cols });
                self.acc_expr(adj, a, c);
            }
            Op::Broadcast { src, .. } => {
                let c = self.push_unchecked(Op::Sum(g));
                self.acc_expr(adj, src, c);
            }
            Op::Concat(a, b) => {
                let la = self.val(a).len();
                if dep[a] {
                    let c = self.push_unchecked(Op::Slice { src: g, offset: 0, len: la });
                    self.acc_expr(adj, a, c);
                }
                if dep[b] {
                    let lb = self.val(b).len();
                    let c = self.push_unchecked(Op::Slice { src: g, offset: la, len: lb });
                    self.acc_expr(adj, b, c);
                }
            }
            Op::Slice { src, offset, .. } => {
                let total = self.val(src).len();
                let c = self.push_unchecked(Op::Pad { src: g, offset, total });
                self.acc_expr(adj, src, c);
            }
            Op::Pad { src, offset, .. } => {
                let len = self.val(src).len();
                let c = self.push_unchecked(Op::Slice { src: g, offset, len });
                self.acc_expr(adj, src, c);
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Neg(..) => "neg",
        Op::Scale(..) => "scale",
        Op::Tanh(..) => "tanh",
        Op::Sigmoid(..) => "sigmoid",
        Op::Relu(..) => "relu",
        Op::Max(..) => "max",
        Op::Recip(..) => "reciprocal",
        Op::Mask { .. } => "mask",
        Op::MatVec(..) => "matvec",
        Op::MatVecT(..) => "matvec_t",
        Op::Outer(..) => "outer",
        Op::Sum(..) => "sum",
        Op::Broadcast { .. } => "broadcast",
        Op::Concat(..) => "concat",
        Op::Slice { .. } => "slice",
        Op::Pad { .. } => "pad",
    }
}
