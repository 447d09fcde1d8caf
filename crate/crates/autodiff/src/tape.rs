//! Define-by-run tape: every primitive appends one node holding its output
//! value and the information its backward rule needs.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{AutodiffError, Result};
use crate::ops::lstm::LstmSaved;
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule for an operation defined outside this crate.
///
/// The forward value is computed by the caller and handed to
/// [`Tape::custom`]. `backward` returns one gradient per input, in input
/// order; `None` marks an input the op does not differentiate.
pub trait CustomBackward: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad_output: &[f64]) -> Vec<Option<Vec<f64>>>;
}

pub(crate) enum Op {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    AddBias {
        x: Var,
        bias: Var,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        axis: usize,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Conv1d {
        input: Var,
        kernels: Var,
        stride: usize,
    },
    Conv1dTranspose {
        input: Var,
        kernels: Var,
        stride: usize,
    },
    Lstm(Box<LstmSaved>),
    Reshape(Var),
    Permute {
        x: Var,
        axes: Vec<usize>,
    },
    Narrow {
        x: Var,
        axis: usize,
        start: usize,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    ResizeLast {
        x: Var,
    },
    Sum(Var),
    Custom {
        inputs: Vec<Var>,
        func: Box<dyn CustomBackward>,
    },
}

pub(crate) struct Node {
    pub value: Tensor,
    pub op: Op,
    /// True when this node is, or depends on, a tensor requiring gradients.
    pub tracked: bool,
}

/// Recorded computation. A tape belongs to one thread at a time.
#[derive(Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
    counters: BTreeMap<&'static str, usize>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.nodes.len())
            .field("counters", &self.counters)
            .finish()
    }
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

    /// Records a leaf. Gradients are tracked iff `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        let tracked = tensor.requires_grad();
        self.nodes.push(Node {
            value: tensor,
            op: Op::Leaf,
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant leaf (no gradient).
    pub fn constant(&mut self, tensor: Tensor) -> Var {
        self.leaf(tensor.with_requires_grad(false))
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, tensor: Tensor) -> Var {
        self.leaf(tensor.with_requires_grad(true))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    /// Gradient of a leaf after [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<f64>> {
        self.nodes[v.0].value.take_grad()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.value.zero_grad();
        }
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// Increments a named instrumentation counter.
    pub fn mark(&mut self, label: &'static str) {
        *self.counters.entry(label).or_default() += 1;
    }

    /// Number of times `label` was marked or an op of that name recorded.
    pub fn count(&self, label: &str) -> usize {
        self.counters.get(label).copied().unwrap_or(0)
    }

    pub(crate) fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let tracked = inputs.iter().any(|v| self.nodes[v.0].tracked);
        self.mark(name);
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    /// Records an externally computed op with its own backward rule.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor, func: Box<dyn CustomBackward>) -> Var {
        let name = func.name();
        self.push(
            name,
            output,
            Op::Custom {
                inputs: inputs.to_vec(),
                func,
            },
            inputs,
        )
    }

    /// Reverse sweep from a scalar `loss`. Leaf gradients are added to any
    /// gradient already stored on the leaf.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.shape(loss).to_vec();
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(AutodiffError::NotScalar(shape));
        }
        let mut grads = Grads::new(&self.nodes, loss.0);
        grads.slots[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(grad_out) = grads.slots[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if let Op::Leaf = node.op {
                grads.slots[idx] = Some(grad_out);
                continue;
            }
            self.backward_node(idx, &grad_out, &mut grads);
        }
        for (idx, slot) in grads.slots.into_iter().enumerate() {
            if let Some(g) = slot {
                let value = &mut self.nodes[idx].value;
                if value.requires_grad() {
                    value.accumulate_grad(&g);
                }
            }
        }
        Ok(())
    }

    fn backward_node(&self, idx: usize, g: &[f64], grads: &mut Grads) {
        let node = &self.nodes[idx];
        let out = &node.value;
        use crate::ops::*;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, batch, m, k, n } => matmul::backward(self, *a, *b, (*batch, *m, *k, *n), g, grads),
            Op::Add(a, b) => {
                grads.add(*a, g);
                grads.add(*b, g);
            }
            Op::Sub(a, b) => {
                grads.add(*a, g);
                if let Some(slot) = grads.slot(*b) {
                    slot.iter_mut().zip(g).for_each(|(s, g)| *s -= g);
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.data(*a), self.data(*b));
                if let Some(slot) = grads.slot(*a) {
                    for ((s, g), y) in slot.iter_mut().zip(g).zip(vb) {
                        *s += g * y;
                    }
                }
                if let Some(slot) = grads.slot(*b) {
                    for ((s, g), x) in slot.iter_mut().zip(g).zip(va) {
                        *s += g * x;
                    }
                }
            }
            Op::Scale(a, c) => {
                if let Some(slot) = grads.slot(*a) {
                    slot.iter_mut().zip(g).for_each(|(s, g)| *s += c * g);
                }
            }
            Op::Relu(a) => {
                let x = self.data(*a);
                if let Some(slot) = grads.slot(*a) {
                    for ((s, g), x) in slot.iter_mut().zip(g).zip(x) {
                        if *x > 0.0 {
                            *s += g;
                        }
                    }
                }
            }
            Op::Sigmoid(a) => {
                if let Some(slot) = grads.slot(*a) {
                    for ((s, g), y) in slot.iter_mut().zip(g).zip(out.data()) {
                        *s += g * y * (1.0 - y);
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(slot) = grads.slot(*a) {
                    for ((s, g), y) in slot.iter_mut().zip(g).zip(out.data()) {
                        *s += g * (1.0 - y * y);
                    }
                }
            }
            Op::AddBias { x, bias } => {
                grads.add(*x, g);
                if let Some(slot) = grads.slot(*bias) {
                    let n = slot.len();
                    for row in g.chunks_exact(n) {
                        slot.iter_mut().zip(row).for_each(|(s, g)| *s += g);
                    }
                }
            }
            Op::Softmax { x, axis } => reduce::softmax_backward(out, *x, *axis, g, grads),
            Op::LayerNorm {
                x,
                gain,
                bias,
                axis,
                xhat,
                rstd,
            } => reduce::layer_norm_backward(self, (*x, *gain, *bias), *axis, xhat, rstd, g, grads),
            Op::Conv1d { input, kernels, stride } => conv::conv1d_backward(self, *input, *kernels, *stride, g, grads),
            Op::Conv1dTranspose { input, kernels, stride } => {
                conv::conv1d_transpose_backward(self, *input, *kernels, *stride, g, grads)
            }
            Op::Lstm(saved) => lstm::backward(self, saved, g, grads),
            Op::Reshape(x) => grads.add(*x, g),
            Op::Permute { x, axes } => shape::permute_backward(out, *x, axes, g, grads),
            Op::Narrow { x, axis, start } => shape::narrow_backward(self, out, *x, *axis, *start, g, grads),
            Op::Concat { inputs, axis } => shape::concat_backward(self, out, inputs, *axis, g, grads),
            Op::ResizeLast { x } => shape::resize_last_backward(self, out, *x, g, grads),
            Op::Sum(x) => {
                if let Some(slot) = grads.slot(*x) {
                    slot.iter_mut().for_each(|s| *s += g[0]);
                }
            }
            Op::Custom { inputs, func } => {
                let values: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
                let contribs = func.backward(&values, out, g);
                for (v, c) in inputs.iter().zip(contribs) {
                    if let Some(c) = c {
                        grads.add(*v, &c);
                    }
                }
            }
        }
    }
}

/// Per-node gradient buffers used during one backward sweep.
pub(crate) struct Grads {
    pub slots: Vec<Option<Vec<f64>>>,
    tracked: Vec<bool>,
    sizes: Vec<usize>,
}

impl Grads {
    fn new(nodes: &[Node], upto: usize) -> Self {
        let n = upto + 1;
        Self {
            slots: vec![None; n],
            tracked: nodes[..n].iter().map(|n| n.tracked).collect(),
            sizes: nodes[..n].iter().map(|n| n.value.numel()).collect(),
        }
    }

    pub fn needs(&self, v: Var) -> bool {
        self.tracked[v.0]
    }

    /// Mutable gradient buffer for `v`, zero-initialised on first access;
    /// `None` when `v` does not lead to any tracked leaf.
    pub fn slot(&mut self, v: Var) -> Option<&mut [f64]> {
        if !self.tracked[v.0] {
            return None;
        }
        let size = self.sizes[v.0];
        Some(self.slots[v.0].get_or_insert_with(|| vec![0.0; size]))
    }

    pub fn add(&mut self, v: Var, g: &[f64]) {
        if let Some(slot) = self.slot(v) {
            slot.iter_mut().zip(g).for_each(|(s, g)| *s += g);
        }
    }
}
