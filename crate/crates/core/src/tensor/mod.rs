//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is an immutable node in a dynamically built computation
//! graph. Non-leaf nodes remember their parents and a backward closure;
//! [`Tensor::backward`] runs one reverse topological sweep, accumulating
//! gradients additively across fan-out.

mod conv;
mod ops;

pub use conv::{resize_bilinear, ResampleMode};

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use crate::error::Result;
use crate::{contract_err, dim_err};

type BackFn = Box<dyn Fn(&[f64]) -> Vec<Vec<f64>>>;

struct BackOp {
    parents: Vec<Tensor>,
    back: BackFn,
}

struct Inner {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<f64>>>,
    op: Option<BackOp>,
}

/// Dense row-major f64 tensor, cheaply clonable (shared buffer).
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<Inner>,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        if numel(shape) != data.len() {
            return Err(dim_err!(
                "shape {:?} implies {} elements, buffer has {}",
                shape,
                numel(shape),
                data.len()
            ));
        }
        Ok(Tensor::raw(shape.to_vec(), data, false, None))
    }

    /// Leaf tensor that participates in gradient computation.
    pub fn leaf(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let t = Tensor::new(shape, data)?;
        Ok(Tensor::raw(t.shape().to_vec(), t.inner.data.clone(), true, None))
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::raw(shape.to_vec(), vec![0.0; numel(shape)], false, None)
    }

    pub fn full(shape: &[usize], v: f64) -> Tensor {
        Tensor::raw(shape.to_vec(), vec![v; numel(shape)], false, None)
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::raw(vec![1], vec![v], false, None)
    }

    fn raw(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, op: Option<BackOp>) -> Tensor {
        Tensor {
            inner: Rc::new(Inner {
                shape,
                data,
                requires_grad,
                grad: RefCell::new(None),
                op,
            }),
        }
    }

    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        back: BackFn,
    ) -> Tensor {
        debug_assert_eq!(numel(&shape), data.len());
        let requires_grad = parents.iter().any(|p| p.inner.requires_grad);
        let op = if requires_grad {
            Some(BackOp { parents, back })
        } else {
            None
        };
        Tensor::raw(shape, data, requires_grad, op)
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn len(&self) -> usize {
        self.inner.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.inner.data
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// Scalar value; errors when the tensor has more than one element.
    pub fn item(&self) -> Result<f64> {
        if self.len() == 1 {
            Ok(self.inner.data[0])
        } else {
            Err(contract_err!("item() on tensor of shape {:?}", self.shape()))
        }
    }

    /// A copy of the accumulated gradient, if backward populated one.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow().clone()
    }

    pub fn clear_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// Fresh leaf with the same contents (detached from any graph).
    pub fn detach(&self) -> Tensor {
        Tensor::raw(self.shape().to_vec(), self.inner.data.clone(), false, None)
    }

    fn id(&self) -> usize {
        Rc::as_ptr(&self.inner) as *const u8 as usize
    }

    /// Reverse-mode sweep from a scalar loss. Populates `grad` on every
    /// reachable tensor with `requires_grad`.
    pub fn backward(&self) -> Result<()> {
        if self.len() != 1 {
            return Err(contract_err!(
                "backward() needs a scalar loss, got shape {:?}",
                self.shape()
            ));
        }
        if !self.inner.requires_grad {
            return Err(contract_err!(
                "backward() on a tensor with no gradient path"
            ));
        }

        // Topological order over the requires_grad subgraph.
        let mut order: Vec<Tensor> = Vec::new();
        let mut seen: BTreeSet<usize> = BTreeSet::new();
        let mut stack: Vec<(Tensor, usize)> = vec![(self.clone(), 0)];
        seen.insert(self.id());
        while let Some((node, next_child)) = stack.pop() {
            let parents: &[Tensor] = match &node.inner.op {
                Some(op) => &op.parents,
                None => &[],
            };
            if next_child < parents.len() {
                let child = parents[next_child].clone();
                stack.push((node, next_child + 1));
                if child.inner.requires_grad && seen.insert(child.id()) {
                    stack.push((child, 0));
                }
            } else {
                order.push(node);
            }
        }

        let mut grads: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        grads.insert(self.id(), vec![1.0]);

        // `order` ends with self; walk it in reverse (outputs before inputs).
        for node in order.iter().rev() {
            let g = match grads.get(&node.id()) {
                Some(g) => g.clone(),
                None => continue,
            };
            if let Some(op) = &node.inner.op {
                let parts = (op.back)(&g);
                debug_assert_eq!(parts.len(), op.parents.len());
                for (parent, part) in op.parents.iter().zip(parts) {
                    if !parent.inner.requires_grad {
                        continue;
                    }
                    debug_assert_eq!(part.len(), parent.len());
                    let entry = grads
                        .entry(parent.id())
                        .or_insert_with(|| vec![0.0; parent.len()]);
                    for (a, b) in entry.iter_mut().zip(&part) {
                        *a += b;
                    }
                }
            }
        }

        // accumulate into any grad left from earlier sweeps (per-sample
        // backward calls build up batch gradients this way)
        for node in &order {
            if let Some(g) = grads.remove(&node.id()) {
                let mut slot = node.inner.grad.borrow_mut();
                match slot.as_mut() {
                    Some(existing) => {
                        for (a, b) in existing.iter_mut().zip(&g) {
                            *a += b;
                        }
                    }
                    None => *slot = Some(g),
                }
            }
        }
        Ok(())
    }
}

impl core::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("data", &self.inner.data)
            .finish()
    }
}

// ---- shape helpers shared by the op implementations ----

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![0usize; shape.len()];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        s[i] = acc;
        acc *= shape[i];
    }
    s
}

/// NumPy-style broadcast of two shapes (right-aligned).
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        if da == db || da == 1 || db == 1 {
            out[i] = da.max(db);
        } else {
            return Err(dim_err!(
                "cannot broadcast {:?} with {:?} (axis {} sizes {} vs {})",
                a,
                b,
                i,
                da,
                db
            ));
        }
    }
    Ok(out)
}

/// Strides for reading `shape` as if broadcast to `out_shape`
/// (0 stride on expanded axes).
pub(crate) fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let rank = out_shape.len();
    let pad = rank - shape.len();
    let base = strides_of(shape);
    let mut s = vec![0usize; rank];
    for i in 0..rank {
        if i >= pad && shape[i - pad] != 1 {
            s[i] = base[i - pad];
        }
    }
    s
}

/// Sum `grad` (laid out as `out_shape`) back down to `shape`.
pub(crate) fn reduce_broadcast(grad: &[f64], out_shape: &[usize], shape: &[usize]) -> Vec<f64> {
    let n = numel(shape);
    let mut out = vec![0.0; n];
    let bstr = broadcast_strides(shape, out_shape);
    let ostr = strides_of(out_shape);
    for (lin, g) in grad.iter().enumerate() {
        let mut src = 0usize;
        for (i, os) in ostr.iter().enumerate() {
            let idx = (lin / os) % out_shape[i];
            src += idx * bstr[i];
        }
        out[src] += g;
    }
    out
}
