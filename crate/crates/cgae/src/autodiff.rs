//! Reverse-mode automatic differentiation on a linear tape.
//!
//! Forward operations append nodes to a [`Tape`]; creation order is a
//! topological order, so replaying the tape backward visits every node
//! exactly once, after all of its consumers. Gradient slots are
//! zero-initialized at the start of each backward pass.
//!
//! The operation set is the minimum needed to express the model: matrix
//! product, the elementwise family (add, sub, mul, exp, log, square),
//! ReLU, scalar scaling/offset, clamp, flat concatenation, reshape and
//! sum-to-scalar. ReLU's subgradient at exactly zero is defined as zero.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a value slot on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul { a: VarId, b: VarId },
    Add { a: VarId, b: VarId },
    Sub { a: VarId, b: VarId },
    Mul { a: VarId, b: VarId },
    Exp { a: VarId },
    Log { a: VarId },
    Square { a: VarId },
    Relu { a: VarId },
    Scale { a: VarId, c: f64 },
    Offset { a: VarId },
    Clamp { a: VarId, lo: f64, hi: f64 },
    Concat { parts: Vec<VarId> },
    Reshape { a: VarId },
    Sum { a: VarId },
}

struct Node {
    value: Tensor,
    grad: Vec<f64>,
    op: Op,
}

/// Ordered record of primitive operations with cached values.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> VarId {
        let grad = vec![0.0; value.len()];
        self.nodes.push(Node { value, grad, op });
        VarId(self.nodes.len() - 1)
    }

    /// Register an input value (parameter or constant).
    pub fn leaf(&mut self, value: Tensor) -> VarId {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, id: VarId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient accumulated for `id` by the last backward pass.
    pub fn grad(&self, id: VarId) -> &[f64] {
        &self.nodes[id.0].grad
    }

    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let value = self.nodes[a.0].value.matmul(&self.nodes[b.0].value)?;
        Ok(self.push(value, Op::Matmul { a, b }))
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let value = self.nodes[a.0].value.add(&self.nodes[b.0].value)?;
        Ok(self.push(value, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let value = self.nodes[a.0].value.sub(&self.nodes[b.0].value)?;
        Ok(self.push(value, Op::Sub { a, b }))
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let value = self.nodes[a.0].value.mul(&self.nodes[b.0].value)?;
        Ok(self.push(value, Op::Mul { a, b }))
    }

    pub fn exp(&mut self, a: VarId) -> VarId {
        let value = self.nodes[a.0].value.exp();
        self.push(value, Op::Exp { a })
    }

    pub fn log(&mut self, a: VarId) -> Result<VarId> {
        let value = self.nodes[a.0].value.log()?;
        Ok(self.push(value, Op::Log { a }))
    }

    pub fn square(&mut self, a: VarId) -> VarId {
        let value = self.nodes[a.0].value.square();
        self.push(value, Op::Square { a })
    }

    pub fn relu(&mut self, a: VarId) -> VarId {
        let value = self.nodes[a.0].value.relu();
        self.push(value, Op::Relu { a })
    }

    pub fn scale(&mut self, a: VarId, c: f64) -> VarId {
        let value = self.nodes[a.0].value.scale(c);
        self.push(value, Op::Scale { a, c })
    }

    /// Add a constant to every entry.
    pub fn offset(&mut self, a: VarId, c: f64) -> VarId {
        let value = self.nodes[a.0].value.map(|v| v + c);
        self.push(value, Op::Offset { a })
    }

    /// Clamp entries to [lo, hi]; gradient passes through the interior
    /// (boundaries inclusive) and is zero outside.
    pub fn clamp(&mut self, a: VarId, lo: f64, hi: f64) -> VarId {
        let value = self.nodes[a.0].value.map(|v| v.clamp(lo, hi));
        self.push(value, Op::Clamp { a, lo, hi })
    }

    /// Concatenate flat views into a single row vector.
    pub fn concat(&mut self, parts: &[VarId]) -> VarId {
        let tensors: Vec<&Tensor> = parts.iter().map(|id| &self.nodes[id.0].value).collect();
        let value = Tensor::concat_flat(&tensors);
        self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
            },
        )
    }

    pub fn reshape(&mut self, a: VarId, shape: &[usize]) -> Result<VarId> {
        let value = self.nodes[a.0].value.reshape(shape)?;
        Ok(self.push(value, Op::Reshape { a }))
    }

    /// Sum every entry into a one-element tensor.
    pub fn sum(&mut self, a: VarId) -> VarId {
        let value = Tensor::scalar(self.nodes[a.0].value.sum());
        self.push(value, Op::Sum { a })
    }

    /// Smallest |x| over all ReLU inputs recorded on the tape. Used by
    /// gradient checks to detect kink proximity.
    pub fn relu_kink_margin(&self) -> Option<f64> {
        let mut margin: Option<f64> = None;
        for node in &self.nodes {
            if let Op::Relu { a } = node.op {
                for &x in self.nodes[a.0].value.data() {
                    let m = x.abs();
                    margin = Some(margin.map_or(m, |cur: f64| cur.min(m)));
                }
            }
        }
        margin
    }

    /// Propagate gradients from a scalar loss back to every slot.
    pub fn backward(&mut self, loss: VarId) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Usage("backward on an empty tape".to_string()));
        }
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::Usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        for node in &mut self.nodes {
            node.grad.iter_mut().for_each(|g| *g = 0.0);
        }
        self.nodes[loss.0].grad[0] = 1.0;

        for idx in (0..self.nodes.len()).rev() {
            let op = self.nodes[idx].op.clone();
            match op {
                Op::Leaf => {}
                Op::Matmul { a, b } => {
                    let g = take_grad(&mut self.nodes, idx);
                    let (m, n) = {
                        let v = &self.nodes[idx].value;
                        (v.rows(), v.cols())
                    };
                    let k = self.nodes[a.0].value.cols();
                    // dA += G * B^T
                    for i in 0..m {
                        for p in 0..k {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += g[i * n + j] * self.nodes[b.0].value.get(p, j);
                            }
                            self.nodes[a.0].grad[i * k + p] += acc;
                        }
                    }
                    // dB += A^T * G
                    for p in 0..k {
                        for j in 0..n {
                            let mut acc = 0.0;
                            for i in 0..m {
                                acc += self.nodes[a.0].value.get(i, p) * g[i * n + j];
                            }
                            self.nodes[b.0].grad[p * n + j] += acc;
                        }
                    }
                    self.nodes[idx].grad = g;
                }
                Op::Add { a, b } => {
                    self.binary_accumulate(idx, a, b, |_, _| (1.0, 1.0));
                }
                Op::Sub { a, b } => {
                    self.binary_accumulate(idx, a, b, |_, _| (1.0, -1.0));
                }
                Op::Mul { a, b } => {
                    self.binary_accumulate(idx, a, b, |x, y| (y, x));
                }
                Op::Exp { a } => {
                    // d/dx e^x = e^x, already cached as the output value.
                    for i in 0..self.nodes[idx].grad.len() {
                        let g = self.nodes[idx].grad[i] * self.nodes[idx].value.data()[i];
                        self.nodes[a.0].grad[i] += g;
                    }
                }
                Op::Log { a } => {
                    for i in 0..self.nodes[idx].grad.len() {
                        let g = self.nodes[idx].grad[i] / self.nodes[a.0].value.data()[i];
                        self.nodes[a.0].grad[i] += g;
                    }
                }
                Op::Square { a } => {
                    for i in 0..self.nodes[idx].grad.len() {
                        let g = 2.0 * self.nodes[a.0].value.data()[i] * self.nodes[idx].grad[i];
                        self.nodes[a.0].grad[i] += g;
                    }
                }
                Op::Relu { a } => {
                    for i in 0..self.nodes[idx].grad.len() {
                        if self.nodes[a.0].value.data()[i] > 0.0 {
                            let g = self.nodes[idx].grad[i];
                            self.nodes[a.0].grad[i] += g;
                        }
                    }
                }
                Op::Scale { a, c } => {
                    for i in 0..self.nodes[idx].grad.len() {
                        let g = c * self.nodes[idx].grad[i];
                        self.nodes[a.0].grad[i] += g;
                    }
                }
                Op::Offset { a } => {
                    for i in 0..self.nodes[idx].grad.len() {
                        let g = self.nodes[idx].grad[i];
                        self.nodes[a.0].grad[i] += g;
                    }
                }
                Op::Clamp { a, lo, hi } => {
                    for i in 0..self.nodes[idx].grad.len() {
                        let x = self.nodes[a.0].value.data()[i];
                        if x >= lo && x <= hi {
                            let g = self.nodes[idx].grad[i];
                            self.nodes[a.0].grad[i] += g;
                        }
                    }
                }
                Op::Concat { parts } => {
                    let mut offset = 0;
                    let g = take_grad(&mut self.nodes, idx);
                    for part in parts {
                        let len = self.nodes[part.0].value.len();
                        for i in 0..len {
                            self.nodes[part.0].grad[i] += g[offset + i];
                        }
                        offset += len;
                    }
                    self.nodes[idx].grad = g;
                }
                Op::Reshape { a } => {
                    for i in 0..self.nodes[idx].grad.len() {
                        let g = self.nodes[idx].grad[i];
                        self.nodes[a.0].grad[i] += g;
                    }
                }
                Op::Sum { a } => {
                    let g = self.nodes[idx].grad[0];
                    for slot in self.nodes[a.0].grad.iter_mut() {
                        *slot += g;
                    }
                }
            }
        }
        Ok(())
    }

    /// Shared chain rule for elementwise binaries, including the
    /// scalar-tensor broadcast (the scalar side receives the summed grad).
    fn binary_accumulate(
        &mut self,
        idx: usize,
        a: VarId,
        b: VarId,
        partials: impl Fn(f64, f64) -> (f64, f64),
    ) {
        let g = take_grad(&mut self.nodes, idx);
        let a_len = self.nodes[a.0].value.len();
        let b_len = self.nodes[b.0].value.len();
        for i in 0..g.len() {
            let x = self.nodes[a.0].value.data()[if a_len == 1 { 0 } else { i }];
            let y = self.nodes[b.0].value.data()[if b_len == 1 { 0 } else { i }];
            let (da, db) = partials(x, y);
            self.nodes[a.0].grad[if a_len == 1 { 0 } else { i }] += da * g[i];
            self.nodes[b.0].grad[if b_len == 1 { 0 } else { i }] += db * g[i];
        }
        self.nodes[idx].grad = g;
    }
}

/// Temporarily move a node's gradient out so other nodes can be mutated.
fn take_grad(nodes: &mut [Node], idx: usize) -> Vec<f64> {
    std::mem::take(&mut nodes[idx].grad)
}

/// One SGD update: `p <- p - eta * g` for every entry. Objectives framed
/// as ascent must be negated into losses before reaching this point.
pub fn sgd_step(param: &mut Tensor, grad: &[f64], eta: f64, name: &str) -> Result<()> {
    debug_assert_eq!(param.len(), grad.len());
    if let Some(bad) = grad.iter().find(|g| !g.is_finite()) {
        return Err(Error::Training {
            epoch: 0,
            example: 0,
            detail: format!("non-finite gradient entry {bad} for parameter {name}"),
        });
    }
    for (p, g) in param.data_mut().iter_mut().zip(grad) {
        *p -= eta * g;
    }
    Ok(())
}
