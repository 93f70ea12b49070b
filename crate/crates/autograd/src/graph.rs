use std::cell::{Ref, RefCell};
use std::rc::Rc;

use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Unary {
    Exp,
    Log,
    Sqrt,
    Sigmoid,
    Silu,
    Gelu,
    Elu,
    Relu,
    Tanh,
    Square,
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Unary(usize, Unary),
    Sum { src: usize, axis: usize },
    Max { src: usize, axis: usize, argmax: Rc<Vec<usize>> },
    SumAll(usize),
    Reshape(usize),
    Permute { src: usize, perm: Vec<usize> },
    Concat { srcs: Vec<usize>, axis: usize },
    Narrow { src: usize, axis: usize, start: usize },
    MatMul(usize, usize),
    Bmm(usize, usize),
    Conv1d { x: usize, w: usize, geom: crate::tensor::ConvGeom },
    Softmax(usize),
    LogSoftmax(usize),
    IndexSelect { src: usize, index: Rc<Vec<usize>> },
}

pub(crate) struct Node {
    pub value: Rc<Tensor>,
    pub op: Op,
    pub requires_grad: bool,
}

/// Recording tape. One graph per forward/backward pass.
#[derive(Default)]
pub struct Graph {
    pub(crate) nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    pub(crate) graph: &'g Graph,
    pub(crate) id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Differentiable input.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    pub(crate) fn value_rc(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    pub(crate) fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Reverse sweep from a single-element `output`.
    pub fn backward(&self, output: Var<'_>) -> Grads {
        assert!(std::ptr::eq(output.graph, self), "variable belongs to another graph");
        let nodes = self.nodes.borrow();
        assert_eq!(
            nodes[output.id].value.numel(),
            1,
            "backward needs a scalar output"
        );
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[output.id] = Some(Tensor::full(nodes[output.id].value.shape(), 1.0));
        for id in (0..=output.id).rev() {
            if !nodes[id].requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            crate::ops::backprop(&nodes, id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Grads { grads }
    }
}

/// Gradients from one reverse sweep, indexed by variable.
pub struct Grads {
    grads: Vec<Option<Tensor>>,
}

impl Grads {
    /// `None` when the variable does not influence the output.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var<'_>) -> Option<Tensor> {
        self.grads.get_mut(var.id).and_then(Option::take)
    }
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn value(&self) -> Ref<'g, Tensor> {
        Ref::map(self.graph.nodes.borrow(), |n| n[self.id].value.as_ref())
    }

    pub fn to_tensor(&self) -> Tensor {
        self.graph.value_rc(self.id).as_ref().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }
}
