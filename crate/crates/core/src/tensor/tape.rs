use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Backward rule: receives the output gradient and a mask of which parents need
/// a gradient; returns one optional gradient per parent.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&[T], &[bool]) -> Vec<Option<Vec<T>>>>;

struct Node<T: Scalar> {
    shape: Vec<usize>,
    value: Rc<Vec<T>>,
    requires_grad: bool,
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
}

/// Wengert list of recorded operations. Nodes are appended in evaluation order,
/// so the node index is already a topological order.
pub struct Tape<T: Scalar = f32> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T: Scalar = f32> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T: Scalar> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Register a tensor as a leaf; it receives a gradient iff `requires_grad`.
    pub fn leaf(&self, t: &Tensor<T>) -> Var<'_, T> {
        self.push(t.shape().to_vec(), Rc::new(t.data().to_vec()), t.requires_grad, Vec::new(), None)
    }

    pub fn constant(&self, shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Var<'_, T>> {
        let t = Tensor::new(shape, data)?;
        Ok(self.leaf(&t))
    }

    pub fn variable(&self, shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Var<'_, T>> {
        let t = Tensor::new(shape, data)?.with_grad();
        Ok(self.leaf(&t))
    }

    fn push(
        &self,
        shape: Vec<usize>,
        value: Rc<Vec<T>>,
        requires_grad: bool,
        parents: Vec<usize>,
        backward: Option<BackwardFn<T>>,
    ) -> Var<'_, T> {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            shape,
            value,
            requires_grad,
            parents,
            backward,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Append an op result. The backward rule is dropped when no parent needs a
    /// gradient, so inference graphs keep no closures alive.
    pub(crate) fn record<'t>(
        &'t self,
        shape: Vec<usize>,
        data: Vec<T>,
        parents: &[Var<'t, T>],
        backward: impl Fn(&[T], &[bool]) -> Vec<Option<Vec<T>>> + 'static,
    ) -> Var<'t, T> {
        debug_assert!(
            !cfg!(feature = "check-finite") || data.iter().all(|v| v.is_finite()),
            "non-finite forward output"
        );
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        let ids = parents.iter().map(|p| p.id).collect();
        let backward: Option<BackwardFn<T>> = if requires_grad {
            Some(Box::new(backward))
        } else {
            None
        };
        self.push(shape, Rc::new(data), requires_grad, ids, backward)
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var<'_, T>) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let out = &nodes[output.id];
        if out.value.len() != 1 {
            return Err(Error::invalid(
                "backward",
                format!("output must be a scalar, got shape {:?}", out.shape),
            ));
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::new();
        grads.resize_with(output.id + 1, || None);
        grads[output.id] = Some(vec![T::ONE]);
        let mut leaves = HashMap::new();

        for id in (0..=output.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(rule) = &node.backward else {
                leaves.insert(id, g);
                continue;
            };
            let mask: Vec<bool> = node.parents.iter().map(|&p| nodes[p].requires_grad).collect();
            let parent_grads = rule(&g, &mask);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for ((&p, pg), need) in node.parents.iter().zip(parent_grads).zip(&mask) {
                let (Some(pg), true) = (pg, *need) else { continue };
                debug_assert_eq!(pg.len(), nodes[p].value.len(), "gradient size for node {p}");
                match &mut grads[p] {
                    Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += *b),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Ok(Gradients { by_node: leaves })
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].shape.clone()
    }

    pub fn value(&self) -> Rc<Vec<T>> {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    pub fn numel(&self) -> usize {
        self.tape.nodes.borrow()[self.id].value.len()
    }

    pub fn to_tensor(&self) -> Tensor<T> {
        Tensor::new(self.shape(), self.value().as_ref().clone()).expect("node shape matches payload")
    }

    /// Value of a single-element node.
    pub fn item(&self) -> T {
        self.value()[0]
    }
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Gradients<T: Scalar = f32> {
    by_node: HashMap<usize, Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var<'_, T>) -> Option<&[T]> {
        self.by_node.get(&v.id).map(Vec::as_slice)
    }

    pub fn take(&mut self, v: Var<'_, T>) -> Option<Vec<T>> {
        self.by_node.remove(&v.id)
    }

    pub fn len(&self) -> usize {
        self.by_node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_node.is_empty()
    }
}
