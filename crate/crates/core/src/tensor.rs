//! Reverse-mode automatic differentiation over dense 2-D `f64` tensors.
//!
//! A [`Tape`] records every primitive application in topological order; one
//! backward pass walks the record in reverse and accumulates gradients by
//! summation across fan-out. The primitive set is the minimum closure for
//! autoencoder, variational, and vector-quantized losses: linear layer,
//! tanh, ReLU, elementwise add/mul (with scalar-constant specializations),
//! squared difference, sum/mean reduction, exp, and natural log.
//!
//! Every operation validates shapes and rejects non-finite outputs, so a
//! diverging run aborts at the first bad value instead of training on NaNs.

use crate::error::{CoreError, Result};
use crate::linalg::{matmul_nn, matmul_nt, matmul_tn};

pub type NodeId = usize;

/// (rows, cols). Scalars are 1×1; a bias vector of width w is 1×w.
pub type Shape = (usize, usize);

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    /// y = x·Wᵀ + b with x: [batch×in], w: [out×in], b: [1×out].
    Linear {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    },
    Tanh(NodeId),
    Relu(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddScalar(NodeId, f64),
    MulScalar(NodeId, f64),
    /// Elementwise (a − b)².
    SqDiff(NodeId, NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
}

#[derive(Debug)]
struct Node {
    data: Vec<f64>,
    shape: Shape,
    grad: Option<Vec<f64>>,
    op: Op,
}

/// The computation record: nodes in creation (= topological) order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn check_finite(op: &'static str, data: &[f64]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CoreError::numeric(op))
    }
}

fn shape_str(s: Shape) -> String {
    format!("{}x{}", s.0, s.1)
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn data(&self, id: NodeId) -> &[f64] {
        &self.nodes[id].data
    }

    pub fn shape(&self, id: NodeId) -> Shape {
        self.nodes[id].shape
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id].grad.is_some()
    }

    /// Accumulated gradient, available after [`Tape::backward`].
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id].grad.as_deref()
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, id: NodeId) -> Result<f64> {
        if self.nodes[id].shape != (1, 1) {
            return Err(CoreError::contract(
                "scalar",
                format!("node has shape {}", shape_str(self.nodes[id].shape)),
            ));
        }
        Ok(self.nodes[id].data[0])
    }

    fn push(&mut self, data: Vec<f64>, shape: Shape, requires_grad: bool, op: Op) -> NodeId {
        debug_assert_eq!(data.len(), shape.0 * shape.1);
        let grad = requires_grad.then(|| vec![0.0; data.len()]);
        self.nodes.push(Node {
            data,
            shape,
            grad,
            op,
        });
        self.nodes.len() - 1
    }

    /// A leaf value: parameter when `requires_grad`, otherwise constant.
    pub fn leaf(&mut self, data: Vec<f64>, shape: Shape, requires_grad: bool) -> Result<NodeId> {
        if data.len() != shape.0 * shape.1 {
            return Err(CoreError::contract(
                "leaf",
                format!("{} entries for shape {}", data.len(), shape_str(shape)),
            ));
        }
        check_finite("leaf", &data)?;
        Ok(self.push(data, shape, requires_grad, Op::Leaf))
    }

    pub fn constant(&mut self, data: Vec<f64>, shape: Shape) -> Result<NodeId> {
        self.leaf(data, shape, false)
    }

    /// y = x·Wᵀ + b. Records gradients for every input that requires them.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let (batch, d_in) = self.nodes[x].shape;
        let (d_out, d_in_w) = self.nodes[w].shape;
        if d_in != d_in_w {
            return Err(CoreError::ShapeMismatch {
                op: "linear",
                lhs: shape_str((batch, d_in)),
                rhs: shape_str((d_out, d_in_w)),
            });
        }
        if let Some(b) = b {
            let bs = self.nodes[b].shape;
            if bs != (1, d_out) {
                return Err(CoreError::ShapeMismatch {
                    op: "linear bias",
                    lhs: shape_str((1, d_out)),
                    rhs: shape_str(bs),
                });
            }
        }
        let mut out = vec![0.0; batch * d_out];
        matmul_nt(
            &self.nodes[x].data,
            (batch, d_in),
            &self.nodes[w].data,
            (d_out, d_in),
            &mut out,
        );
        if let Some(b) = b {
            let bias = &self.nodes[b].data;
            for row in out.chunks_exact_mut(d_out) {
                for (o, &bv) in row.iter_mut().zip(bias) {
                    *o += bv;
                }
            }
        }
        check_finite("linear", &out)?;
        let rg = self.requires_grad(x)
            || self.requires_grad(w)
            || b.is_some_and(|b| self.requires_grad(b));
        Ok(self.push(out, (batch, d_out), rg, Op::Linear { x, w, b }))
    }

    fn unary(
        &mut self,
        op_name: &'static str,
        x: NodeId,
        f: impl Fn(f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        let data: Vec<f64> = self.nodes[x].data.iter().map(|&v| f(v)).collect();
        check_finite(op_name, &data)?;
        let shape = self.nodes[x].shape;
        let rg = self.requires_grad(x);
        Ok(self.push(data, shape, rg, op))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary("tanh", x, f64::tanh, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary("relu", x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary("exp", x, f64::exp, Op::Exp(x))
    }

    pub fn ln(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary("ln", x, f64::ln, Op::Ln(x))
    }

    fn binary_same_shape(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        let sa = self.nodes[a].shape;
        let sb = self.nodes[b].shape;
        if sa != sb {
            return Err(CoreError::ShapeMismatch {
                op: op_name,
                lhs: shape_str(sa),
                rhs: shape_str(sb),
            });
        }
        let data: Vec<f64> = self.nodes[a]
            .data
            .iter()
            .zip(&self.nodes[b].data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        check_finite(op_name, &data)?;
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(data, sa, rg, op))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise (a − b)².
    pub fn sq_diff(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("sq_diff", a, b, |x, y| (x - y) * (x - y), Op::SqDiff(a, b))
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.unary("add_scalar", x, |v| v + c, Op::AddScalar(x, c))
    }

    pub fn mul_scalar(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.unary("mul_scalar", x, |v| v * c, Op::MulScalar(x, c))
    }

    pub fn sum_all(&mut self, x: NodeId) -> Result<NodeId> {
        let s: f64 = self.nodes[x].data.iter().sum();
        check_finite("sum_all", &[s])?;
        let rg = self.requires_grad(x);
        Ok(self.push(vec![s], (1, 1), rg, Op::SumAll(x)))
    }

    pub fn mean_all(&mut self, x: NodeId) -> Result<NodeId> {
        let n = self.nodes[x].data.len();
        if n == 0 {
            return Err(CoreError::contract("mean_all", "empty tensor"));
        }
        let s: f64 = self.nodes[x].data.iter().sum::<f64>() / n as f64;
        check_finite("mean_all", &[s])?;
        let rg = self.requires_grad(x);
        Ok(self.push(vec![s], (1, 1), rg, Op::MeanAll(x)))
    }

    fn add_grad(&mut self, id: NodeId, contribution: &[f64]) {
        if let Some(g) = self.nodes[id].grad.as_mut() {
            debug_assert_eq!(g.len(), contribution.len());
            for (gi, ci) in g.iter_mut().zip(contribution) {
                *gi += ci;
            }
        }
    }

    /// Reverse pass from a scalar loss. Gradients accumulate (sum) across
    /// fan-out; leaves keep their accumulated gradient for the optimizer.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.nodes[loss].shape != (1, 1) {
            return Err(CoreError::contract(
                "backward",
                format!("loss must be scalar, got {}", shape_str(self.nodes[loss].shape)),
            ));
        }
        if self.nodes[loss].grad.is_none() {
            return Err(CoreError::contract(
                "backward",
                "loss does not depend on any parameter that requires gradients",
            ));
        }
        self.nodes[loss].grad.as_mut().unwrap()[0] = 1.0;

        for id in (0..=loss).rev() {
            if self.nodes[id].grad.is_none() {
                continue;
            }
            let op = self.nodes[id].op;
            if matches!(op, Op::Leaf) {
                continue;
            }
            // The output gradient is final here: consumers appear later on
            // the tape and were already processed.
            let gout = self.nodes[id].grad.clone().unwrap();
            match op {
                Op::Leaf => unreachable!(),
                Op::Linear { x, w, b } => {
                    let (batch, d_in) = self.nodes[x].shape;
                    let (d_out, _) = self.nodes[w].shape;
                    if self.requires_grad(x) {
                        // dX = gY·W
                        let mut dx = vec![0.0; batch * d_in];
                        matmul_nn(
                            &gout,
                            (batch, d_out),
                            &self.nodes[w].data,
                            (d_out, d_in),
                            &mut dx,
                        );
                        self.add_grad(x, &dx);
                    }
                    if self.requires_grad(w) {
                        // dW = gYᵀ·X
                        let mut dw = vec![0.0; d_out * d_in];
                        matmul_tn(
                            &gout,
                            (batch, d_out),
                            &self.nodes[x].data,
                            (batch, d_in),
                            &mut dw,
                        );
                        self.add_grad(w, &dw);
                    }
                    if let Some(b) = b {
                        if self.requires_grad(b) {
                            let mut db = vec![0.0; d_out];
                            for row in gout.chunks_exact(d_out) {
                                for (dbj, &gj) in db.iter_mut().zip(row) {
                                    *dbj += gj;
                                }
                            }
                            self.add_grad(b, &db);
                        }
                    }
                }
                Op::Tanh(x) => {
                    let contrib: Vec<f64> = self.nodes[id]
                        .data
                        .iter()
                        .zip(&gout)
                        .map(|(&y, &g)| g * (1.0 - y * y))
                        .collect();
                    self.add_grad(x, &contrib);
                }
                Op::Relu(x) => {
                    let contrib: Vec<f64> = self.nodes[x]
                        .data
                        .iter()
                        .zip(&gout)
                        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                        .collect();
                    self.add_grad(x, &contrib);
                }
                Op::Exp(x) => {
                    let contrib: Vec<f64> = self.nodes[id]
                        .data
                        .iter()
                        .zip(&gout)
                        .map(|(&y, &g)| g * y)
                        .collect();
                    self.add_grad(x, &contrib);
                }
                Op::Ln(x) => {
                    let contrib: Vec<f64> = self.nodes[x]
                        .data
                        .iter()
                        .zip(&gout)
                        .map(|(&v, &g)| g / v)
                        .collect();
                    self.add_grad(x, &contrib);
                }
                Op::Add(a, b) => {
                    self.add_grad(a, &gout);
                    self.add_grad(b, &gout);
                }
                Op::Mul(a, b) => {
                    if self.requires_grad(a) {
                        let contrib: Vec<f64> = self.nodes[b]
                            .data
                            .iter()
                            .zip(&gout)
                            .map(|(&bv, &g)| g * bv)
                            .collect();
                        self.add_grad(a, &contrib);
                    }
                    if self.requires_grad(b) {
                        let contrib: Vec<f64> = self.nodes[a]
                            .data
                            .iter()
                            .zip(&gout)
                            .map(|(&av, &g)| g * av)
                            .collect();
                        self.add_grad(b, &contrib);
                    }
                }
                Op::AddScalar(x, _) => {
                    self.add_grad(x, &gout);
                }
                Op::MulScalar(x, c) => {
                    let contrib: Vec<f64> = gout.iter().map(|&g| g * c).collect();
                    self.add_grad(x, &contrib);
                }
                Op::SqDiff(a, b) => {
                    if self.requires_grad(a) {
                        let contrib: Vec<f64> = self.nodes[a]
                            .data
                            .iter()
                            .zip(&self.nodes[b].data)
                            .zip(&gout)
                            .map(|((&av, &bv), &g)| 2.0 * (av - bv) * g)
                            .collect();
                        self.add_grad(a, &contrib);
                    }
                    if self.requires_grad(b) {
                        let contrib: Vec<f64> = self.nodes[a]
                            .data
                            .iter()
                            .zip(&self.nodes[b].data)
                            .zip(&gout)
                            .map(|((&av, &bv), &g)| -2.0 * (av - bv) * g)
                            .collect();
                        self.add_grad(b, &contrib);
                    }
                }
                Op::SumAll(x) => {
                    let g = gout[0];
                    let contrib = vec![g; self.nodes[x].data.len()];
                    self.add_grad(x, &contrib);
                }
                Op::MeanAll(x) => {
                    let n = self.nodes[x].data.len() as f64;
                    let g = gout[0] / n;
                    let contrib = vec![g; self.nodes[x].data.len()];
                    self.add_grad(x, &contrib);
                }
            }
        }
        Ok(())
    }

    /// Re-evaluates the recorded graph with some leaf values replaced,
    /// without touching the tape. Non-leaf nodes are recomputed in record
    /// order; constants recorded during the original forward (noise draws,
    /// dropout masks, straight-through deltas, gather one-hots) keep their
    /// recorded values. The replayed map is therefore exactly the function
    /// whose derivative [`Tape::backward`] computes — the right object to
    /// probe with finite differences, including through stop-gradient
    /// constructions. Returns the recomputed data of `output`.
    pub fn replay_forward(&self, overrides: &[(NodeId, &[f64])], output: NodeId) -> Result<Vec<f64>> {
        if output >= self.nodes.len() {
            return Err(CoreError::contract(
                "replay_forward",
                format!("output node {output} not on tape of length {}", self.nodes.len()),
            ));
        }
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(output + 1);
        let mut replaced: Vec<Option<&[f64]>> = vec![None; output + 1];
        for &(id, data) in overrides {
            if id > output {
                continue;
            }
            if !matches!(self.nodes[id].op, Op::Leaf) {
                return Err(CoreError::contract(
                    "replay_forward",
                    format!("node {id} is not a leaf and cannot be overridden"),
                ));
            }
            let shape = self.nodes[id].shape;
            if data.len() != shape.0 * shape.1 {
                return Err(CoreError::contract(
                    "replay_forward",
                    format!("{} entries for node {id} of shape {}", data.len(), shape_str(shape)),
                ));
            }
            replaced[id] = Some(data);
        }
        for id in 0..=output {
            let (rows, cols) = self.nodes[id].shape;
            let data = match self.nodes[id].op {
                Op::Leaf => match replaced[id] {
                    Some(d) => d.to_vec(),
                    None => self.nodes[id].data.clone(),
                },
                Op::Linear { x, w, b } => {
                    let (batch, d_in) = self.nodes[x].shape;
                    let (d_out, _) = self.nodes[w].shape;
                    let mut out = vec![0.0; batch * d_out];
                    matmul_nt(&values[x], (batch, d_in), &values[w], (d_out, d_in), &mut out);
                    if let Some(b) = b {
                        for row in out.chunks_exact_mut(d_out) {
                            for (o, &bv) in row.iter_mut().zip(&values[b]) {
                                *o += bv;
                            }
                        }
                    }
                    out
                }
                Op::Tanh(x) => values[x].iter().map(|&v| v.tanh()).collect(),
                Op::Relu(x) => values[x].iter().map(|&v| v.max(0.0)).collect(),
                Op::Exp(x) => values[x].iter().map(|&v| v.exp()).collect(),
                Op::Ln(x) => values[x].iter().map(|&v| v.ln()).collect(),
                Op::Add(a, b) => values[a].iter().zip(&values[b]).map(|(&x, &y)| x + y).collect(),
                Op::Mul(a, b) => values[a].iter().zip(&values[b]).map(|(&x, &y)| x * y).collect(),
                Op::AddScalar(x, c) => values[x].iter().map(|&v| v + c).collect(),
                Op::MulScalar(x, c) => values[x].iter().map(|&v| v * c).collect(),
                Op::SqDiff(a, b) => values[a]
                    .iter()
                    .zip(&values[b])
                    .map(|(&x, &y)| (x - y) * (x - y))
                    .collect(),
                Op::SumAll(x) => vec![values[x].iter().sum()],
                Op::MeanAll(x) => {
                    vec![values[x].iter().sum::<f64>() / values[x].len() as f64]
                }
            };
            debug_assert_eq!(data.len(), rows * cols);
            check_finite("replay_forward", &data)?;
            values.push(data);
        }
        Ok(values.pop().expect("output value was just computed"))
    }
}

/// Adam optimizer state for one parameter array, with bias correction.
/// Defaults: lr 1e-3, β₁ 0.9, β₂ 0.999, ε 1e-8.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One Adam step: advances `t`, updates moments, writes new parameters.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(CoreError::contract(
                "adam_update",
                format!(
                    "length mismatch: params {}, grads {}, state {}",
                    params.len(),
                    grads.len(),
                    self.m.len()
                ),
            ));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        check_finite("adam_update", params)
    }
}

/// Max relative error between an analytic gradient and central finite
/// differences of `f`: max_i |(f(p+h·eᵢ)−f(p−h·eᵢ))/(2h) − grad_i| / max(|grad_i|, 1e-8).
pub fn finite_diff_check(
    f: impl Fn(&[f64]) -> f64,
    params: &[f64],
    grad: &[f64],
    h: f64,
) -> Result<f64> {
    if h <= 0.0 {
        return Err(CoreError::contract("finite_diff_check", "h must be positive"));
    }
    if params.len() != grad.len() {
        return Err(CoreError::contract(
            "finite_diff_check",
            "params and grad lengths differ",
        ));
    }
    let mut p = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let fp = f(&p);
        p[i] = orig - h;
        let fm = f(&p);
        p[i] = orig;
        let numeric = (fp - fm) / (2.0 * h);
        let rel = (numeric - grad[i]).abs() / grad[i].abs().max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
