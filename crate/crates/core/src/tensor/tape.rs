use std::collections::HashMap;
use std::sync::Arc;

use super::{checked_numel, Scalar, Tensor};
use crate::error::{contract_err, Result};

pub type VarId = usize;

/// A value produced on (or registered with) a [`Tape`].
///
/// Cloning is cheap: the storage is shared. A var is *tracked* when gradients
/// flow to it.
#[derive(Debug, Clone)]
pub struct Var<T> {
    id: Option<VarId>,
    dims: Vec<usize>,
    data: Arc<Vec<T>>,
}

impl<T: Scalar> Var<T> {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn id(&self) -> Option<VarId> {
        self.id
    }

    pub fn is_tracked(&self) -> bool {
        self.id.is_some()
    }

    pub(crate) fn shared(&self) -> Arc<Vec<T>> {
        Arc::clone(&self.data)
    }

    /// Single value of a one-element var.
    pub fn item(&self) -> T {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn to_tensor(&self) -> Tensor<T> {
        Tensor::from_vec(&self.dims, (*self.data).clone()).expect("var dims are validated")
    }
}

/// Local derivative of one recorded operation.
///
/// Receives the gradient of the operation's output and returns one entry per
/// input; entries whose `needs` flag is false may be `None`.
pub trait BackwardOp<T>: Send {
    fn backward(&self, grad_out: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>>;
}

pub struct TapeNode<T> {
    pub op_kind: &'static str,
    pub inputs: Vec<Option<VarId>>,
    pub output: VarId,
    saved: Box<dyn BackwardOp<T>>,
}

/// Append-only record of differentiable operations, replayed in reverse by
/// [`Tape::backward`].
pub struct Tape<T> {
    nodes: Vec<TapeNode<T>>,
    next_id: VarId,
    grad_enabled: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            next_id: 0,
            grad_enabled: true,
        }
    }

    /// A tape that never records; every var it produces is untracked.
    pub fn no_grad() -> Self {
        Self {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[TapeNode<T>] {
        &self.nodes
    }

    fn fresh_id(&mut self) -> VarId {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Registers a tensor; it is tracked when it requires grad and the tape records.
    pub fn leaf(&mut self, t: &Tensor<T>) -> Var<T> {
        let id = (self.grad_enabled && t.requires_grad()).then(|| self.fresh_id());
        Var {
            id,
            dims: t.dims().to_vec(),
            data: t.shared_data(),
        }
    }

    pub fn constant(&mut self, t: &Tensor<T>) -> Var<T> {
        Var {
            id: None,
            dims: t.dims().to_vec(),
            data: t.shared_data(),
        }
    }

    /// Wraps a freshly computed value as an untracked var.
    pub(crate) fn value(dims: Vec<usize>, data: Vec<T>) -> Var<T> {
        debug_assert_eq!(checked_numel(&dims).ok(), Some(data.len()));
        Var {
            id: None,
            dims,
            data: Arc::new(data),
        }
    }

    /// Records an operation. `saved` is only invoked when some input is tracked.
    pub(crate) fn record<F>(
        &mut self,
        op_kind: &'static str,
        inputs: &[&Var<T>],
        dims: Vec<usize>,
        data: Vec<T>,
        saved: F,
    ) -> Var<T>
    where
        F: FnOnce() -> Box<dyn BackwardOp<T>>,
    {
        let mut out = Self::value(dims, data);
        if self.grad_enabled && inputs.iter().any(|v| v.is_tracked()) {
            let output = self.fresh_id();
            self.nodes.push(TapeNode {
                op_kind,
                inputs: inputs.iter().map(|v| v.id).collect(),
                output,
                saved: saved(),
            });
            out.id = Some(output);
        }
        out
    }

    /// Propagates d(loss)/d(var) to every tracked var reachable from `loss`,
    /// accumulating over multiple consumers, then clears the tape.
    pub fn backward(&mut self, loss: &Var<T>) -> Result<Gradients<T>> {
        if loss.numel() != 1 {
            return Err(contract_err!(
                "backward needs a scalar loss, got dims {:?}",
                loss.dims()
            ));
        }
        if self.nodes.is_empty() {
            return Err(contract_err!("backward called on an empty tape"));
        }
        let Some(loss_id) = loss.id else {
            return Err(contract_err!("loss does not depend on any tracked tensor"));
        };

        let mut grads: HashMap<VarId, Vec<T>> = HashMap::new();
        grads.insert(loss_id, vec![T::one()]);
        let nodes = std::mem::take(&mut self.nodes);
        for node in nodes.iter().rev() {
            let Some(g) = grads.remove(&node.output) else {
                continue;
            };
            let needs: Vec<bool> = node.inputs.iter().map(Option::is_some).collect();
            let input_grads = node.saved.backward(&g, &needs);
            debug_assert_eq!(input_grads.len(), node.inputs.len(), "{}", node.op_kind);
            for (id, ig) in node.inputs.iter().zip(input_grads) {
                if let (Some(id), Some(ig)) = (id, ig) {
                    match grads.get_mut(id) {
                        Some(acc) => acc.iter_mut().zip(&ig).for_each(|(a, &b)| *a += b),
                        None => {
                            grads.insert(*id, ig);
                        }
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Gradients produced by one backward pass, keyed by var.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: HashMap<VarId, Vec<T>>,
}

impl<T> Gradients<T> {
    pub fn get(&self, v: &Var<T>) -> Option<&[T]> {
        v.id.and_then(|id| self.grads.get(&id)).map(Vec::as_slice)
    }

    pub fn take(&mut self, v: &Var<T>) -> Option<Vec<T>> {
        v.id.and_then(|id| self.grads.remove(&id))
    }
}
