use super::ops::Op;
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(super) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(super) struct Node {
    pub value: Tensor,
    pub op: Op,
    pub requires_grad: bool,
}

/// A Wengert list: every forward operation is appended in execution order and
/// [`Tape::backward`] replays the list in reverse.
///
/// Recorded values are immutable. A tape can be differentiated once; build a
/// fresh tape (or call [`Tape::reset`]) for the next step.
#[derive(Default)]
pub struct Tape {
    pub(super) nodes: Vec<Node>,
    spent: bool,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
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

    pub fn reset(&mut self) {
        self.nodes.clear();
        self.spent = false;
    }

    /// Records a leaf. Gradients are accumulated for it iff `requires_grad`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    pub(super) fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Reverse-mode sweep from a single-element output.
    pub fn backward(&mut self, output: Var) -> Result<Gradients> {
        if self.spent {
            return Err(Error::BackwardTwice);
        }
        let out_shape = self.nodes[output.0].value.shape().to_vec();
        if self.nodes[output.0].value.len() != 1 {
            return Err(Error::NonScalarLoss(out_shape));
        }
        self.spent = true;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Tensor::full(out_shape, 1.0));
        for idx in (0..=output.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            if matches!(self.nodes[idx].op, Op::Leaf) {
                grads[idx] = Some(upstream);
                continue;
            }
            self.backward_node(idx, &upstream, &mut grads);
            // Only leaves keep their gradients; intermediates are released.
        }
        Ok(Gradients { grads })
    }

    /// Adds `delta` into the gradient slot of `var` if it participates.
    pub(super) fn accumulate(
        &self,
        grads: &mut [Option<Tensor>],
        var: Var,
        delta: impl FnOnce(&Tensor) -> Tensor,
    ) {
        if !self.nodes[var.0].requires_grad {
            return;
        }
        let d = delta(&self.nodes[var.0].value);
        match &mut grads[var.0] {
            Some(g) => {
                for (a, b) in g.data_mut().iter_mut().zip(d.data()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(d),
        }
    }

    /// In-place variant of [`Tape::accumulate`] for kernels that scatter.
    pub(super) fn accumulate_with(
        &self,
        grads: &mut [Option<Tensor>],
        var: Var,
        fill: impl FnOnce(&mut [f64]),
    ) {
        if !self.nodes[var.0].requires_grad {
            return;
        }
        let slot = &mut grads[var.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(self.nodes[var.0].value.shape().to_vec()));
        }
        fill(slot.as_mut().expect("slot initialised").data_mut());
    }
}
