//! Reverse-mode automatic differentiation.
//!
//! A [`Tape`] records a computation as an append-only list of nodes, each
//! holding its forward value and the operation (with parent ids) that
//! produced it. [`Tape::backward`] sweeps the record once in reverse and
//! returns the gradient of a scalar root with respect to every node.
//!
//! The accumulation order is fixed by node insertion order, so repeated
//! backward passes over the same tape are bit-identical. A tape is owned by
//! one computation; tensors read out of it are plain values and may be
//! shared freely.

use crate::error::{Error, Result};
use crate::tensor::{matmul_nn_acc, matmul_nt_acc, matmul_tn_acc, Tensor};

/// Inputs to `log` below this floor are lifted to it before taking the
/// logarithm, keeping `log D` and `log(1-D)` finite when the discriminator
/// saturates. The gradient is zero in the floored region.
pub const LOG_FLOOR: f64 = 1e-12;

/// Default negative-side slope for leaky ReLU.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

/// Handle to a node on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Reduction flavor shared by `sum` / `mean` / `l2_norm_sq`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceAxis {
    /// Reduce every entry to one scalar.
    All,
    /// Reduce each row of a 2-D tensor, producing one value per row.
    PerRow,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { a: usize, b: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    AddBias { a: usize, bias: usize },
    Relu { a: usize },
    LeakyRelu { a: usize, alpha: f64 },
    Tanh { a: usize },
    Sigmoid { a: usize },
    Log { a: usize },
    Exp { a: usize },
    Neg { a: usize },
    Scale { a: usize, c: f64 },
    AddScalar { a: usize },
    Sum { a: usize },
    Mean { a: usize },
    L2NormSq { a: usize },
    RowSum { a: usize },
    RowMean { a: usize },
    RowL2NormSq { a: usize },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients of one backward pass, indexed by [`NodeId`].
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    /// Gradient of the root with respect to the node's value. Nodes not
    /// reachable from the root have an all-zero gradient of their shape.
    pub fn wrt(&self, id: NodeId) -> &Tensor {
        &self.grads[id.0]
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Inserts a constant/input tensor. Leaves have no parents; gradients
    /// still flow to them.
    pub fn leaf(&mut self, t: Tensor) -> NodeId {
        self.raw_push(t, Op::Leaf)
    }

    fn raw_push(&mut self, value: Tensor, op: Op) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { value, op });
        id
    }

    /// Validates finiteness of an op output before recording it.
    fn push(&mut self, op_name: &'static str, shape: Vec<usize>, data: Vec<f64>, op: Op) -> Result<NodeId> {
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op: op_name });
        }
        let value = Tensor::new(shape, data)?;
        Ok(self.raw_push(value, op))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                detail: format!("[{m}x{k}] . [{k2}x{n}]"),
            });
        }
        let mut out = vec![0.0; m * n];
        matmul_nn_acc(&mut out, self.value(a).data(), self.value(b).data(), m, k, n);
        self.push("matmul", vec![m, n], out, Op::MatMul { a: a.0, b: b.0 })
    }

    fn binary(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::ShapeMismatch {
                op: op_name,
                detail: format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            });
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        self.push(op_name, self.value(a).shape().to_vec(), data, op)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("add", a, b, |x, y| x + y, Op::Add { a: a.0, b: b.0 })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub { a: a.0, b: b.0 })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul { a: a.0, b: b.0 })
    }

    /// `[m×n] + [n]`: adds the bias vector to every row.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (m, n) = self.value(a).dims2()?;
        let blen = self.value(bias).len();
        if self.value(bias).shape().len() != 1 || blen != n {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                detail: format!("[{m}x{n}] + bias of shape {:?}", self.value(bias).shape()),
            });
        }
        let bdata = self.value(bias).data();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let arow = &self.value(a).data()[i * n..(i + 1) * n];
            out.extend(arow.iter().zip(bdata).map(|(x, y)| x + y));
        }
        self.push("add_bias", vec![m, n], out, Op::AddBias { a: a.0, bias: bias.0 })
    }

    fn unary(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        f: impl Fn(f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        let data = self.value(a).data().iter().map(|x| f(*x)).collect();
        self.push(op_name, self.value(a).shape().to_vec(), data, op)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary("relu", a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu { a: a.0 })
    }

    pub fn leaky_relu(&mut self, a: NodeId, alpha: f64) -> Result<NodeId> {
        self.unary(
            "leaky_relu",
            a,
            |x| if x > 0.0 { x } else { alpha * x },
            Op::LeakyRelu { a: a.0, alpha },
        )
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary("tanh", a, f64::tanh, Op::Tanh { a: a.0 })
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary("sigmoid", a, stable_sigmoid, Op::Sigmoid { a: a.0 })
    }

    /// Natural log with the numerical floor: `ln(max(x, LOG_FLOOR))`.
    /// Strictly negative inputs are a caller bug and error out; inputs in
    /// `[0, LOG_FLOOR)` are saturation artifacts and are floored.
    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        if self.value(a).data().iter().any(|&x| x < 0.0) {
            return Err(Error::Domain {
                op: "log",
                detail: "negative input".to_string(),
            });
        }
        self.unary("log", a, |x| x.max(LOG_FLOOR).ln(), Op::Log { a: a.0 })
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary("exp", a, f64::exp, Op::Exp { a: a.0 })
    }

    pub fn neg(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary("neg", a, |x| -x, Op::Neg { a: a.0 })
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.unary("scale", a, |x| c * x, Op::Scale { a: a.0, c })
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.unary("add_scalar", a, |x| x + c, Op::AddScalar { a: a.0 })
    }

    /// `1 - x`, elementwise.
    pub fn one_minus(&mut self, a: NodeId) -> Result<NodeId> {
        let neg = self.neg(a)?;
        self.add_scalar(neg, 1.0)
    }

    pub fn sum(&mut self, a: NodeId, axis: ReduceAxis) -> Result<NodeId> {
        self.reduce("sum", a, axis, |row| row.iter().sum())
    }

    pub fn mean(&mut self, a: NodeId, axis: ReduceAxis) -> Result<NodeId> {
        self.reduce("mean", a, axis, |row| {
            row.iter().sum::<f64>() / row.len() as f64
        })
    }

    /// Sum of squared entries.
    pub fn l2_norm_sq(&mut self, a: NodeId, axis: ReduceAxis) -> Result<NodeId> {
        self.reduce("l2_norm_sq", a, axis, |row| row.iter().map(|x| x * x).sum())
    }

    fn reduce(
        &mut self,
        kind: &'static str,
        a: NodeId,
        axis: ReduceAxis,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<NodeId> {
        match axis {
            ReduceAxis::All => {
                let v = f(self.value(a).data());
                let op = match kind {
                    "sum" => Op::Sum { a: a.0 },
                    "mean" => Op::Mean { a: a.0 },
                    _ => Op::L2NormSq { a: a.0 },
                };
                self.push(kind, vec![1], vec![v], op)
            }
            ReduceAxis::PerRow => {
                let (m, n) = self.value(a).dims2()?;
                let data = (0..m)
                    .map(|i| f(&self.value(a).data()[i * n..(i + 1) * n]))
                    .collect();
                let op = match kind {
                    "sum" => Op::RowSum { a: a.0 },
                    "mean" => Op::RowMean { a: a.0 },
                    _ => Op::RowL2NormSq { a: a.0 },
                };
                self.push(kind, vec![m], data, op)
            }
        }
    }

    /// Reverse accumulation from a scalar root. Returns a fresh gradient set;
    /// the tape itself is untouched, so repeated calls are bit-identical.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        if !self.value(root).is_scalar() {
            return Err(Error::Contract(format!(
                "backward root must be scalar, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let mut grads: Vec<Tensor> = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.shape()))
            .collect();
        grads[root.0].data_mut()[0] = 1.0;
        let mut live = vec![false; self.nodes.len()];
        live[root.0] = true;

        for id in (0..=root.0).rev() {
            if !live[id] {
                continue;
            }
            // Parents always precede `id`, so split once: upstream gradient on
            // the right, parent accumulators on the left.
            let (parent_grads, rest) = grads.split_at_mut(id);
            let g = rest[0].data();
            match self.nodes[id].op {
                Op::Leaf => {}
                Op::MatMul { a, b } => {
                    let (m, k) = self.nodes[a].value.dims2()?;
                    let n = self.nodes[b].value.dims2()?.1;
                    matmul_nt_acc(
                        parent_grads[a].data_mut(),
                        g,
                        self.nodes[b].value.data(),
                        m,
                        n,
                        k,
                    );
                    matmul_tn_acc(
                        parent_grads[b].data_mut(),
                        self.nodes[a].value.data(),
                        g,
                        m,
                        k,
                        n,
                    );
                    live[a] = true;
                    live[b] = true;
                }
                Op::Add { a, b } => {
                    accumulate(parent_grads[a].data_mut(), g, |_, gi| gi);
                    accumulate(parent_grads[b].data_mut(), g, |_, gi| gi);
                    live[a] = true;
                    live[b] = true;
                }
                Op::Sub { a, b } => {
                    accumulate(parent_grads[a].data_mut(), g, |_, gi| gi);
                    accumulate(parent_grads[b].data_mut(), g, |_, gi| -gi);
                    live[a] = true;
                    live[b] = true;
                }
                Op::Mul { a, b } => {
                    // Handle aliased parents (mul(x, x)) by accumulating
                    // sequentially; both passes hit the same slot.
                    let bv: Vec<f64> = self.nodes[b].value.data().to_vec();
                    let av: Vec<f64> = self.nodes[a].value.data().to_vec();
                    for (acc, (gi, bi)) in parent_grads[a].data_mut().iter_mut().zip(g.iter().zip(&bv)) {
                        *acc += gi * bi;
                    }
                    for (acc, (gi, ai)) in parent_grads[b].data_mut().iter_mut().zip(g.iter().zip(&av)) {
                        *acc += gi * ai;
                    }
                    live[a] = true;
                    live[b] = true;
                }
                Op::AddBias { a, bias } => {
                    accumulate(parent_grads[a].data_mut(), g, |_, gi| gi);
                    let n = self.nodes[bias].value.len();
                    let bias_grad = parent_grads[bias].data_mut();
                    for (idx, gi) in g.iter().enumerate() {
                        bias_grad[idx % n] += gi;
                    }
                    live[a] = true;
                    live[bias] = true;
                }
                Op::Relu { a } => {
                    let x = self.nodes[a].value.data();
                    for ((acc, gi), xi) in parent_grads[a].data_mut().iter_mut().zip(g).zip(x) {
                        if *xi > 0.0 {
                            *acc += gi;
                        }
                    }
                    live[a] = true;
                }
                Op::LeakyRelu { a, alpha } => {
                    let x = self.nodes[a].value.data();
                    for ((acc, gi), xi) in parent_grads[a].data_mut().iter_mut().zip(g).zip(x) {
                        *acc += gi * if *xi > 0.0 { 1.0 } else { alpha };
                    }
                    live[a] = true;
                }
                Op::Tanh { a } => {
                    let y = self.nodes[id].value.data();
                    for ((acc, gi), yi) in parent_grads[a].data_mut().iter_mut().zip(g).zip(y) {
                        *acc += gi * (1.0 - yi * yi);
                    }
                    live[a] = true;
                }
                Op::Sigmoid { a } => {
                    let y = self.nodes[id].value.data();
                    for ((acc, gi), yi) in parent_grads[a].data_mut().iter_mut().zip(g).zip(y) {
                        *acc += gi * yi * (1.0 - yi);
                    }
                    live[a] = true;
                }
                Op::Log { a } => {
                    let x = self.nodes[a].value.data();
                    for ((acc, gi), xi) in parent_grads[a].data_mut().iter_mut().zip(g).zip(x) {
                        if *xi >= LOG_FLOOR {
                            *acc += gi / xi;
                        }
                    }
                    live[a] = true;
                }
                Op::Exp { a } => {
                    let y = self.nodes[id].value.data();
                    for ((acc, gi), yi) in parent_grads[a].data_mut().iter_mut().zip(g).zip(y) {
                        *acc += gi * yi;
                    }
                    live[a] = true;
                }
                Op::Neg { a } => {
                    accumulate(parent_grads[a].data_mut(), g, |_, gi| -gi);
                    live[a] = true;
                }
                Op::Scale { a, c } => {
                    accumulate(parent_grads[a].data_mut(), g, |_, gi| c * gi);
                    live[a] = true;
                }
                Op::AddScalar { a } => {
                    accumulate(parent_grads[a].data_mut(), g, |_, gi| gi);
                    live[a] = true;
                }
                Op::Sum { a } => {
                    let g0 = g[0];
                    for acc in parent_grads[a].data_mut() {
                        *acc += g0;
                    }
                    live[a] = true;
                }
                Op::Mean { a } => {
                    let g0 = g[0] / self.nodes[a].value.len() as f64;
                    for acc in parent_grads[a].data_mut() {
                        *acc += g0;
                    }
                    live[a] = true;
                }
                Op::L2NormSq { a } => {
                    let g0 = g[0];
                    let x = self.nodes[a].value.data();
                    for (acc, xi) in parent_grads[a].data_mut().iter_mut().zip(x) {
                        *acc += 2.0 * g0 * xi;
                    }
                    live[a] = true;
                }
                Op::RowSum { a } => {
                    let n = self.nodes[a].value.dims2()?.1;
                    for (idx, acc) in parent_grads[a].data_mut().iter_mut().enumerate() {
                        *acc += g[idx / n];
                    }
                    live[a] = true;
                }
                Op::RowMean { a } => {
                    let n = self.nodes[a].value.dims2()?.1;
                    let inv = 1.0 / n as f64;
                    for (idx, acc) in parent_grads[a].data_mut().iter_mut().enumerate() {
                        *acc += g[idx / n] * inv;
                    }
                    live[a] = true;
                }
                Op::RowL2NormSq { a } => {
                    let n = self.nodes[a].value.dims2()?.1;
                    let x = self.nodes[a].value.data();
                    for (idx, (acc, xi)) in parent_grads[a].data_mut().iter_mut().zip(x).enumerate() {
                        *acc += 2.0 * g[idx / n] * xi;
                    }
                    live[a] = true;
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(acc: &mut [f64], g: &[f64], f: impl Fn(usize, f64) -> f64) {
    for (i, (a, gi)) in acc.iter_mut().zip(g).enumerate() {
        *a += f(i, *gi);
    }
}

/// Sigmoid evaluated without overflowing `exp` for large |x|.
pub(crate) fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(tape: &mut Tape, shape: Vec<usize>, data: Vec<f64>) -> NodeId {
        tape.leaf(Tensor::new(shape, data).unwrap())
    }

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let i2 = leaf(&mut tape, vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let a = leaf(&mut tape, vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let out = tape.matmul(i2, a).unwrap();
        assert_eq!(tape.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_row_by_column() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, vec![1, 2], vec![1.0, 2.0]);
        let b = leaf(&mut tape, vec![2, 1], vec![3.0, 4.0]);
        let out = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(out).data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_mismatch_errors() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, vec![2, 3], vec![0.0; 6]);
        let b = leaf(&mut tape, vec![2, 2], vec![0.0; 4]);
        assert!(tape.matmul(a, b).is_err());
    }

    #[test]
    fn elementwise_values() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![3], vec![0.0, -3.0, 3.0]);
        let s = tape.sigmoid(x).unwrap();
        assert_eq!(tape.value(s).data()[0], 0.5);
        let r = tape.relu(x).unwrap();
        assert_eq!(tape.value(r).data(), &[0.0, 0.0, 3.0]);
        let ls = tape.log(s).unwrap();
        assert!((tape.value(ls).data()[0] - (-std::f64::consts::LN_2)).abs() < 1e-15);
    }

    #[test]
    fn log_rejects_negative_and_floors_zero() {
        let mut tape = Tape::new();
        let bad = leaf(&mut tape, vec![1], vec![-0.5]);
        assert!(tape.log(bad).is_err());
        let zero = leaf(&mut tape, vec![1], vec![0.0]);
        let l = tape.log(zero).unwrap();
        assert_eq!(tape.value(l).data()[0], LOG_FLOOR.ln());
    }

    #[test]
    fn reductions() {
        let mut tape = Tape::new();
        let v = leaf(&mut tape, vec![2], vec![3.0, 4.0]);
        let l2 = tape.l2_norm_sq(v, ReduceAxis::All).unwrap();
        assert_eq!(tape.value(l2).data()[0], 25.0);

        let w = leaf(&mut tape, vec![3], vec![1.0, 2.0, 3.0]);
        let m = tape.mean(w, ReduceAxis::All).unwrap();
        assert_eq!(tape.value(m).data()[0], 2.0);

        let a = leaf(&mut tape, vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let rows = tape.sum(a, ReduceAxis::PerRow).unwrap();
        assert_eq!(tape.value(rows).data(), &[3.0, 7.0]);
    }

    #[test]
    fn backward_square() {
        // d(x·x)/dx at x=3 is 6.
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![1], vec![3.0]);
        let y = tape.mul(x, x).unwrap();
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.wrt(x).data()[0], 6.0);
    }

    #[test]
    fn backward_log_sigmoid_linear() {
        // d/dw log(sigmoid(w*x)) at w=0, x=1 is 1 - sigmoid(0) = 0.5.
        let mut tape = Tape::new();
        let w = leaf(&mut tape, vec![1, 1], vec![0.0]);
        let x = leaf(&mut tape, vec![1, 1], vec![1.0]);
        let wx = tape.matmul(x, w).unwrap();
        let s = tape.sigmoid(wx).unwrap();
        let l = tape.log(s).unwrap();
        let root = tape.sum(l, ReduceAxis::All).unwrap();
        let grads = tape.backward(root).unwrap();
        assert!((grads.wrt(w).data()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![2], vec![1.0, 2.0]);
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn repeated_backward_is_bit_identical() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![2, 2], vec![0.3, -1.2, 0.7, 2.0]);
        let w = leaf(&mut tape, vec![2, 2], vec![0.5, 0.25, -0.75, 1.5]);
        let h = tape.matmul(x, w).unwrap();
        let t = tape.tanh(h).unwrap();
        let root = tape.mean(t, ReduceAxis::All).unwrap();
        let g1 = tape.backward(root).unwrap();
        let g2 = tape.backward(root).unwrap();
        assert_eq!(g1.wrt(w).data(), g2.wrt(w).data());
        assert_eq!(g1.wrt(x).data(), g2.wrt(x).data());
    }

    #[test]
    fn backward_is_linear_in_the_root() {
        // grad(a·f + b·g) == a·grad(f) + b·grad(g), within 1e-12.
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![3], vec![0.4, -0.9, 1.3]);
        let f = tape.l2_norm_sq(x, ReduceAxis::All).unwrap();
        let t = tape.tanh(x).unwrap();
        let g = tape.sum(t, ReduceAxis::All).unwrap();
        let (a, b) = (1.7, -0.3);
        let af = tape.scale(f, a).unwrap();
        let bg = tape.scale(g, b).unwrap();
        let combined = tape.add(af, bg).unwrap();

        let gc = tape.backward(combined).unwrap();
        let gf = tape.backward(f).unwrap();
        let gg = tape.backward(g).unwrap();
        for i in 0..3 {
            let expected = a * gf.wrt(x).data()[i] + b * gg.wrt(x).data()[i];
            assert!((gc.wrt(x).data()[i] - expected).abs() < 1e-12);
        }
    }
}
