use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use crate::error::{AutogradError, Result};
use crate::scalar::Scalar;

/// Computes the partial derivatives of one node with respect to each parent,
/// given the gradient flowing into the node. `None` means "no contribution".
pub(crate) type BackwardFn<E> = Box<dyn Fn(&[E]) -> Vec<Option<Vec<E>>>>;

/// Record of the op that produced a tensor.
pub struct ComputationNode<E: Scalar> {
    pub(crate) op: &'static str,
    pub(crate) parents: Vec<Tensor<E>>,
    pub(crate) backward: BackwardFn<E>,
}

struct Inner<E: Scalar> {
    shape: Vec<usize>,
    data: Vec<E>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<E>>>,
    node: Option<ComputationNode<E>>,
}

/// Dense row-major tensor with optional gradient tracking.
///
/// Cloning is cheap and shares storage. Values are immutable once created;
/// only the gradient buffer of a leaf changes (during [`Tensor::backward`]).
pub struct Tensor<E: Scalar = f32>(Rc<Inner<E>>);

impl<E: Scalar> Clone for Tensor<E> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<E: Scalar> fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = self.0.node.as_ref().map(|n| n.op).unwrap_or("leaf");
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("op", &op)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

pub(crate) fn ensure_finite<E: Scalar>(op: &'static str, data: &[E]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(AutogradError::NonFinite { op })
    }
}

impl<E: Scalar> Tensor<E> {
    /// Constant leaf (no gradient).
    pub fn new(data: Vec<E>, shape: &[usize]) -> Result<Self> {
        Self::leaf(data, shape, false)
    }

    /// Trainable leaf.
    pub fn param(data: Vec<E>, shape: &[usize]) -> Result<Self> {
        Self::leaf(data, shape, true)
    }

    pub fn leaf(data: Vec<E>, shape: &[usize], requires_grad: bool) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(AutogradError::DataLength {
                len: data.len(),
                shape: shape.to_vec(),
            });
        }
        ensure_finite("leaf", &data)?;
        Ok(Self::raw(data, shape.to_vec(), requires_grad, None))
    }

    pub fn scalar(v: E) -> Self {
        Self::raw(vec![v], vec![1], false, None)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::raw(vec![E::zero(); numel(shape)], shape.to_vec(), false, None)
    }

    pub fn full(shape: &[usize], v: E) -> Self {
        Self::raw(vec![v; numel(shape)], shape.to_vec(), false, None)
    }

    fn raw(data: Vec<E>, shape: Vec<usize>, requires_grad: bool, node: Option<ComputationNode<E>>) -> Self {
        Tensor(Rc::new(Inner {
            shape,
            data,
            requires_grad,
            grad: RefCell::new(None),
            node,
        }))
    }

    /// Builds the result of an op. Gradient tracking is recorded only when a
    /// parent requires it.
    pub(crate) fn from_op(
        op: &'static str,
        data: Vec<E>,
        shape: Vec<usize>,
        parents: Vec<Tensor<E>>,
        backward: BackwardFn<E>,
    ) -> Result<Self> {
        debug_assert_eq!(numel(&shape), data.len(), "{op}: bad output size");
        ensure_finite(op, &data)?;
        let requires_grad = parents.iter().any(Tensor::requires_grad);
        let node = requires_grad.then(|| ComputationNode {
            op,
            parents,
            backward,
        });
        Ok(Self::raw(data, shape, requires_grad, node))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn data(&self) -> &[E] {
        &self.0.data
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.node.is_none()
    }

    /// Name of the op that produced this tensor, `"leaf"` for leaves.
    pub fn op_name(&self) -> &'static str {
        self.0.node.as_ref().map(|n| n.op).unwrap_or("leaf")
    }

    pub fn item(&self) -> E {
        self.0.data[0]
    }

    pub fn to_vec(&self) -> Vec<E> {
        self.0.data.clone()
    }

    pub fn grad(&self) -> Option<Vec<E>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Same values, cut from the graph.
    pub fn detach(&self) -> Self {
        Self::raw(self.0.data.clone(), self.0.shape.clone(), false, None)
    }

    /// Fresh leaf sharing nothing with the graph, tracking gradients.
    pub fn detach_requiring_grad(&self) -> Self {
        Self::raw(self.0.data.clone(), self.0.shape.clone(), true, None)
    }

    pub fn cast<F: Scalar>(&self) -> Tensor<F> {
        let data = self.0.data.iter().map(|v| F::of(v.as_f64())).collect();
        Tensor::raw(data, self.0.shape.clone(), self.0.requires_grad, None)
    }

    pub fn same_tensor(&self, other: &Tensor<E>) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    fn key(&self) -> *const Inner<E> {
        Rc::as_ptr(&self.0)
    }

    /// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
    /// calls until [`Tensor::zero_grad`].
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(AutogradError::NonScalarLoss(self.shape().to_vec()));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.topological_order();
        let mut grads: HashMap<*const Inner<E>, Vec<E>> = HashMap::new();
        grads.insert(self.key(), vec![E::one()]);
        for t in order.iter().rev() {
            let Some(g) = grads.remove(&t.key()) else {
                continue;
            };
            match &t.0.node {
                None => {
                    if t.requires_grad() {
                        let mut slot = t.0.grad.borrow_mut();
                        match slot.as_mut() {
                            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                            None => *slot = Some(g),
                        }
                    }
                }
                Some(node) => {
                    let parent_grads = (node.backward)(&g);
                    debug_assert_eq!(parent_grads.len(), node.parents.len());
                    for (parent, pg) in node.parents.iter().zip(parent_grads) {
                        let Some(pg) = pg else { continue };
                        if !parent.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(pg.len(), parent.numel(), "{}: bad grad size", node.op);
                        ensure_finite(node.op, &pg)?;
                        match grads.get_mut(&parent.key()) {
                            Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, &b)| *a += b),
                            None => {
                                grads.insert(parent.key(), pg);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Nodes reachable from `self` through gradient-tracking edges, parents
    /// before children.
    fn topological_order(&self) -> Vec<Tensor<E>> {
        let mut order = Vec::new();
        let mut visited = std::collections::HashSet::new();
        // (tensor, children already pushed)
        let mut stack = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.key()) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(node) = &t.0.node {
                for p in &node.parents {
                    if p.requires_grad() && !visited.contains(&p.key()) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }
        order
    }
}

impl<E: Scalar> Drop for Inner<E> {
    // Long op chains would otherwise drop recursively.
    fn drop(&mut self) {
        let mut pending: Vec<Tensor<E>> = self.node.take().map(|n| n.parents).unwrap_or_default();
        while let Some(t) = pending.pop() {
            if let Ok(mut inner) = Rc::try_unwrap(t.0) {
                if let Some(n) = inner.node.take() {
                    pending.extend(n.parents);
                }
            }
        }
    }
}
