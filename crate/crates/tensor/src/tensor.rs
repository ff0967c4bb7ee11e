use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::{numel, Scalar};

static NEXT_ID: AtomicUsize = AtomicUsize::new(0);

fn next_id() -> usize {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Backward closure: receives the gradient flowing into the node's output
/// and the output values, returns one optional gradient per input.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&[T], &[T]) -> Vec<Option<Vec<T>>>>;

struct GradFn<T: Scalar> {
    inputs: Vec<Tensor<T>>,
    backward: BackwardFn<T>,
}

struct Node<T: Scalar> {
    id: usize,
    shape: Vec<usize>,
    data: Rc<Vec<T>>,
    requires_grad: bool,
    grad_fn: Option<GradFn<T>>,
}

/// An immutable, reference-counted, row-major tensor that records the
/// operations producing it.
pub struct Tensor<T: Scalar = f32> {
    node: Rc<Node<T>>,
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            node: Rc::clone(&self.node),
        }
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.node.id)
            .field("shape", &self.node.shape)
            .field("requires_grad", &self.node.requires_grad)
            .finish()
    }
}

impl<T: Scalar> Tensor<T> {
    /// Constant tensor (no gradient tracking).
    pub fn from_vec(data: Vec<T>, shape: &[usize]) -> Self {
        assert_eq!(
            data.len(),
            numel(shape),
            "data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Self::leaf(Rc::new(data), shape.to_vec(), false)
    }

    /// Leaf tensor whose gradient is tracked.
    pub fn var(data: Vec<T>, shape: &[usize]) -> Self {
        assert_eq!(
            data.len(),
            numel(shape),
            "data length does not match shape {shape:?}"
        );
        Self::leaf(Rc::new(data), shape.to_vec(), true)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::from_vec(vec![T::zero(); numel(shape)], shape)
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self::from_vec(vec![value; numel(shape)], shape)
    }

    pub fn scalar(value: T) -> Self {
        Self::from_vec(vec![value], &[])
    }

    fn leaf(data: Rc<Vec<T>>, shape: Vec<usize>, requires_grad: bool) -> Self {
        Tensor {
            node: Rc::new(Node {
                id: next_id(),
                shape,
                data,
                requires_grad,
                grad_fn: None,
            }),
        }
    }

    /// Builds the result of a differentiable operation.
    ///
    /// `backward(grad_out, out)` must return one entry per input, in order;
    /// entries for inputs that do not require gradients may be `None`. When
    /// no input requires a gradient the closure is dropped and the result is
    /// a constant.
    pub fn from_op<F>(inputs: &[&Tensor<T>], shape: &[usize], data: Vec<T>, backward: F) -> Self
    where
        F: Fn(&[T], &[T]) -> Vec<Option<Vec<T>>> + 'static,
    {
        assert_eq!(
            data.len(),
            numel(shape),
            "op output does not match shape {shape:?}"
        );
        let requires_grad = inputs.iter().any(|t| t.requires_grad());
        let grad_fn = requires_grad.then(|| GradFn {
            inputs: inputs.iter().map(|t| (*t).clone()).collect(),
            backward: Box::new(backward) as BackwardFn<T>,
        });
        Tensor {
            node: Rc::new(Node {
                id: next_id(),
                shape: shape.to_vec(),
                data: Rc::new(data),
                requires_grad,
                grad_fn,
            }),
        }
    }

    pub fn id(&self) -> usize {
        self.node.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn dims4(&self) -> (usize, usize, usize, usize) {
        match *self.shape() {
            [a, b, c, d] => (a, b, c, d),
            ref s => panic!("expected a rank-4 tensor, got shape {s:?}"),
        }
    }

    pub fn numel(&self) -> usize {
        self.node.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.node.data
    }

    pub(crate) fn data_rc(&self) -> Rc<Vec<T>> {
        Rc::clone(&self.node.data)
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.node.data.to_vec()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(
            self.numel(),
            1,
            "item() on tensor of shape {:?}",
            self.shape()
        );
        self.node.data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    /// Same values, cut from the graph. Shares storage.
    pub fn detach(&self) -> Self {
        Self::leaf(self.data_rc(), self.shape().to_vec(), false)
    }

    /// Same values as a fresh gradient-tracked leaf. Shares storage.
    pub fn detach_var(&self) -> Self {
        Self::leaf(self.data_rc(), self.shape().to_vec(), true)
    }

    /// Reinterprets the shape. Shares storage.
    pub fn reshape(&self, shape: &[usize]) -> Self {
        assert_eq!(
            numel(shape),
            self.numel(),
            "cannot reshape {:?} to {shape:?}",
            self.shape()
        );
        let requires_grad = self.requires_grad();
        let grad_fn = requires_grad.then(|| GradFn {
            inputs: vec![self.clone()],
            backward: Box::new(|g: &[T], _: &[T]| vec![Some(g.to_vec())]) as BackwardFn<T>,
        });
        Tensor {
            node: Rc::new(Node {
                id: next_id(),
                shape: shape.to_vec(),
                data: self.data_rc(),
                requires_grad,
                grad_fn,
            }),
        }
    }

    /// Back-propagates from this tensor with an all-ones seed.
    pub fn backward(&self) -> Gradients<T> {
        self.backward_with(vec![T::one(); self.numel()])
    }

    /// Back-propagates from this tensor with an explicit output gradient.
    pub fn backward_with(&self, seed: Vec<T>) -> Gradients<T> {
        assert_eq!(seed.len(), self.numel(), "seed gradient has wrong length");
        let mut out = Gradients {
            grads: HashMap::new(),
        };
        if !self.requires_grad() {
            return out;
        }
        // Inputs are always created before outputs, so descending id order is
        // a valid reverse topological order.
        let mut nodes: Vec<Tensor<T>> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        seen.insert(self.id());
        while let Some(t) = stack.pop() {
            if let Some(gf) = &t.node.grad_fn {
                for input in &gf.inputs {
                    if input.requires_grad() && seen.insert(input.id()) {
                        stack.push(input.clone());
                    }
                }
            }
            nodes.push(t);
        }
        nodes.sort_unstable_by_key(|t| std::cmp::Reverse(t.id()));

        let mut pending: HashMap<usize, Vec<T>> = HashMap::new();
        pending.insert(self.id(), seed);
        for t in nodes {
            let Some(grad) = pending.remove(&t.id()) else {
                continue;
            };
            match &t.node.grad_fn {
                None => {
                    out.grads.insert(t.id(), grad);
                }
                Some(gf) => {
                    let input_grads = (gf.backward)(&grad, t.data());
                    debug_assert_eq!(input_grads.len(), gf.inputs.len());
                    for (input, g) in gf.inputs.iter().zip(input_grads) {
                        let Some(g) = g else { continue };
                        if !input.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(g.len(), input.numel());
                        match pending.get_mut(&input.id()) {
                            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
                            None => {
                                pending.insert(input.id(), g);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Gradients of leaf tensors produced by [`Tensor::backward`].
#[derive(Debug, Default)]
pub struct Gradients<T: Scalar = f32> {
    grads: HashMap<usize, Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, t: &Tensor<T>) -> Option<&[T]> {
        self.grads.get(&t.id()).map(|v| v.as_slice())
    }

    pub fn take(&mut self, t: &Tensor<T>) -> Option<Vec<T>> {
        self.grads.remove(&t.id())
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}
