use std::sync::atomic::{AtomicU64, Ordering};

use super::{AutodiffError, Tensor};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    pub(crate) id: usize,
    pub(crate) tape: u64,
}

/// Inputs handed to a node's backward rule.
pub(crate) struct BackwardCtx<'a> {
    pub grad: &'a Tensor,
    pub inputs: Vec<&'a Tensor>,
    /// Whether each input wants a gradient; rules may skip work for `false`.
    pub needs: Vec<bool>,
}

pub(crate) type BackwardFn = Box<dyn Fn(&BackwardCtx<'_>) -> Vec<Option<Tensor>>>;

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    requires_grad: bool,
    backward: Option<BackwardFn>,
    grad: Option<Tensor>,
}

/// Linear record of operations. Record order is a topological order, so
/// backward is a single reverse sweep.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    backpropagated: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            backpropagated: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, node: Node) -> Var {
        self.nodes.push(node);
        Var {
            id: self.nodes.len() - 1,
            tape: self.id,
        }
    }

    /// Records an input. `requires_grad` marks trainable leaves.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(Node {
            value,
            parents: Vec::new(),
            requires_grad,
            backward: None,
            grad: None,
        })
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Copy of `v`'s value with no path back to `v`.
    pub fn detach(&mut self, v: Var) -> Result<Var, AutodiffError> {
        let value = self.value(v)?.clone();
        Ok(self.constant(value))
    }

    pub(crate) fn check(&self, v: Var) -> Result<usize, AutodiffError> {
        if v.tape != self.id || v.id >= self.nodes.len() {
            return Err(AutodiffError::ForeignVar);
        }
        Ok(v.id)
    }

    pub fn value(&self, v: Var) -> Result<&Tensor, AutodiffError> {
        Ok(&self.nodes[self.check(v)?].value)
    }

    pub fn requires_grad(&self, v: Var) -> Result<bool, AutodiffError> {
        Ok(self.nodes[self.check(v)?].requires_grad)
    }

    /// Gradient accumulated by the last [`Tape::backward`]. Trainable leaves
    /// always have one after backward (zeros when unreachable from the seed).
    pub fn grad(&self, v: Var) -> Result<Option<&Tensor>, AutodiffError> {
        Ok(self.nodes[self.check(v)?].grad.as_ref())
    }

    /// Records an operation. The output requires grad iff any input does; when
    /// none does, the backward rule is dropped.
    pub(crate) fn record(&mut self, value: Tensor, parents: &[Var], backward: BackwardFn) -> Result<Var, AutodiffError> {
        let mut ids = Vec::with_capacity(parents.len());
        let mut requires_grad = false;
        for &p in parents {
            let id = self.check(p)?;
            requires_grad |= self.nodes[id].requires_grad;
            ids.push(id);
        }
        Ok(self.push(Node {
            value,
            parents: ids,
            requires_grad,
            backward: requires_grad.then_some(backward),
            grad: None,
        }))
    }

    /// Propagates d(seed)/d(node) to every node that requires grad.
    pub fn backward(&mut self, seed: Var) -> Result<(), AutodiffError> {
        let seed_id = self.check(seed)?;
        if self.backpropagated {
            return Err(AutodiffError::AlreadyBackpropagated);
        }
        let seed_node = &self.nodes[seed_id];
        if !seed_node.value.is_scalar() {
            return Err(AutodiffError::NonScalarSeed(seed_node.value.shape().to_vec()));
        }
        if !seed_node.requires_grad {
            return Err(AutodiffError::Detached);
        }
        self.backpropagated = true;
        let shape = seed_node.value.shape().to_vec();
        self.nodes[seed_id].grad = Some(Tensor::full(&shape, 1.0));

        for i in (0..=seed_id).rev() {
            let Some(grad) = self.nodes[i].grad.as_ref() else {
                continue;
            };
            let Some(rule) = self.nodes[i].backward.as_ref() else {
                continue;
            };
            let node = &self.nodes[i];
            let ctx = BackwardCtx {
                grad,
                inputs: node.parents.iter().map(|&p| &self.nodes[p].value).collect(),
                needs: node
                    .parents
                    .iter()
                    .map(|&p| self.nodes[p].requires_grad)
                    .collect(),
            };
            let grads = rule(&ctx);
            debug_assert_eq!(grads.len(), node.parents.len());
            let parents = node.parents.clone();
            for (p, g) in parents.into_iter().zip(grads) {
                let Some(g) = g else { continue };
                let target = &mut self.nodes[p];
                if !target.requires_grad {
                    continue;
                }
                debug_assert_eq!(g.shape(), target.value.shape());
                match target.grad.as_mut() {
                    Some(acc) => acc.add_assign(&g),
                    None => target.grad = Some(g),
                }
            }
        }
        for node in &mut self.nodes {
            if node.requires_grad && node.backward.is_none() && node.grad.is_none() {
                node.grad = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(())
    }

    /// Clears all gradients so backward may run again.
    pub fn reset(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.backpropagated = false;
    }
}
