//! Dense row-major `f64` tensors with reverse-mode differentiation.
//!
//! Every op that sees a tracked input records a [`TapeNode`] on its output
//! holding the input handles and a backward rule. Nodes carry a global
//! creation id, so sorting reachable nodes by descending id yields a valid
//! reverse topological order for [`Tensor::backward`].
//!
//! Leaves created with [`Tensor::param`] accumulate gradients across
//! backward calls until [`Tensor::zero_grad`].

mod gemm;
mod nn;
mod ops;
pub mod rng;

use std::collections::HashMap;
use std::fmt;
use std::cell::Cell;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};

pub use nn::{BatchNormStats, BN_EPS, BN_MOMENTUM};

static NEXT_ID: AtomicU64 = AtomicU64::new(0);
thread_local! {
    static CHECKED: Cell<bool> = const { Cell::new(false) };
}

/// Turn checked mode on or off for the calling thread. In checked mode every
/// op rejects non-finite outputs with [`Error::NonFinite`].
pub fn set_checked(on: bool) {
    CHECKED.with(|c| c.set(on));
}

pub fn is_checked() -> bool {
    CHECKED.with(|c| c.get())
}

pub(crate) struct BackwardCtx<'a> {
    pub grad: &'a [f64],
    pub inputs: &'a [Tensor],
    pub output: &'a Tensor,
}

type BackwardFn = Box<dyn Fn(&BackwardCtx<'_>) -> Vec<Option<Vec<f64>>> + Send + Sync>;

/// One recorded operation: its name, the tensors it consumed and the rule
/// mapping the output gradient to input gradients.
pub struct TapeNode {
    op: &'static str,
    inputs: Vec<Tensor>,
    backward: BackwardFn,
}

impl fmt::Debug for TapeNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TapeNode")
            .field("op", &self.op)
            .field("inputs", &self.inputs.len())
            .finish()
    }
}

struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<f64>>>,
    node: Option<TapeNode>,
}

/// Cheaply clonable handle to an immutable tensor value.
#[derive(Clone)]
pub struct Tensor(Arc<Inner>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("op", &self.0.node.as_ref().map(|n| n.op))
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn build(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, node: Option<TapeNode>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor(Arc::new(Inner {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data,
            requires_grad,
            grad: Mutex::new(None),
            node,
        }))
    }

    /// Untracked constant.
    pub fn new(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(Error::shape(
                "new",
                format!("{} values for shape {:?}", data.len(), shape),
            ));
        }
        Ok(Self::build(shape.to_vec(), data, false, None))
    }

    /// Tracked leaf whose gradient is accumulated by [`Tensor::backward`].
    pub fn param(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        let t = Self::new(data, shape)?;
        Ok(Self::build(t.shape().to_vec(), t.0.data.clone(), true, None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::build(shape.to_vec(), vec![0.0; numel(shape)], false, None)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self::build(shape.to_vec(), vec![value; numel(shape)], false, None)
    }

    pub fn scalar(value: f64) -> Self {
        Self::build(Vec::new(), vec![value], false, None)
    }

    pub fn from_slice(data: &[f64]) -> Self {
        Self::build(vec![data.len()], data.to_vec(), false, None)
    }

    /// Copy of this value as a fresh tracked leaf.
    pub fn as_param(&self) -> Self {
        Self::build(self.shape().to_vec(), self.0.data.clone(), true, None)
    }

    /// Copy of this value with no tape history.
    pub fn detach(&self) -> Self {
        Self::build(self.shape().to_vec(), self.0.data.clone(), false, None)
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        match Arc::try_unwrap(self.0) {
            Ok(inner) => inner.data,
            Err(shared) => shared.data.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.0.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.0.shape.len()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.len(), 1, "item() on tensor of shape {:?}", self.shape());
        self.0.data[0]
    }

    /// True when this tensor is a tracked leaf or was computed from one.
    pub fn is_tracked(&self) -> bool {
        self.0.requires_grad || self.0.node.is_some()
    }

    pub fn is_leaf(&self) -> bool {
        self.0.node.is_none()
    }

    pub fn op_name(&self) -> Option<&'static str> {
        self.0.node.as_ref().map(|n| n.op)
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.lock().expect("grad lock").clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock().expect("grad lock") = None;
    }

    pub fn same(&self, other: &Tensor) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    /// Assemble an op result, recording a tape node when any input is tracked.
    pub(crate) fn from_op<F>(
        op: &'static str,
        shape: Vec<usize>,
        data: Vec<f64>,
        inputs: &[&Tensor],
        backward: F,
    ) -> Result<Self>
    where
        F: Fn(&BackwardCtx<'_>) -> Vec<Option<Vec<f64>>> + Send + Sync + 'static,
    {
        if is_checked() && data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op });
        }
        let tracked = inputs.iter().any(|t| t.is_tracked());
        let node = tracked.then(|| TapeNode {
            op,
            inputs: inputs.iter().map(|t| (*t).clone()).collect(),
            backward: Box::new(backward),
        });
        Ok(Self::build(shape, data, false, node))
    }

    /// Reverse-mode sweep from a scalar loss. Gradients of tracked leaves are
    /// added to whatever they already hold.
    pub fn backward(&self) -> Result<()> {
        if self.len() != 1 {
            return Err(Error::NonScalarLoss(self.shape().to_vec()));
        }
        if !self.is_tracked() {
            return Err(Error::shape("backward", "loss is not tracked"));
        }

        let mut order: Vec<Tensor> = Vec::new();
        let mut seen: HashMap<u64, ()> = HashMap::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if seen.insert(t.0.id, ()).is_some() {
                continue;
            }
            if let Some(node) = &t.0.node {
                for inp in &node.inputs {
                    if inp.is_tracked() && !seen.contains_key(&inp.0.id) {
                        stack.push(inp.clone());
                    }
                }
            }
            order.push(t);
        }
        order.sort_by(|a, b| b.0.id.cmp(&a.0.id));

        let mut pending: HashMap<u64, Vec<f64>> = HashMap::new();
        pending.insert(self.0.id, vec![1.0]);
        for t in &order {
            let Some(grad) = pending.remove(&t.0.id) else {
                continue;
            };
            match &t.0.node {
                None => {
                    if t.0.requires_grad {
                        let mut slot = t.0.grad.lock().expect("grad lock");
                        match slot.as_mut() {
                            Some(acc) => acc.iter_mut().zip(&grad).for_each(|(a, g)| *a += g),
                            None => *slot = Some(grad),
                        }
                    }
                }
                Some(node) => {
                    let ctx = BackwardCtx {
                        grad: &grad,
                        inputs: &node.inputs,
                        output: t,
                    };
                    let grads = (node.backward)(&ctx);
                    debug_assert_eq!(grads.len(), node.inputs.len(), "op {}", node.op);
                    for (inp, g) in node.inputs.iter().zip(grads) {
                        let Some(g) = g else { continue };
                        if !inp.is_tracked() {
                            continue;
                        }
                        debug_assert_eq!(g.len(), inp.len(), "op {}", node.op);
                        match pending.get_mut(&inp.0.id) {
                            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                            None => {
                                pending.insert(inp.0.id, g);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Row-major strides for `shape`.
pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}
