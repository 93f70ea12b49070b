use std::collections::HashMap;

use crate::graph::{Grads, Graph, Var};
use crate::tensor::Tensor;

/// Index of a tensor inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Ordered collection of named trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    lookup: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics on a duplicate name; parameter layouts are fixed by model code.
    pub fn register(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.lookup.contains_key(&name),
            "parameter {name} registered twice"
        );
        self.lookup.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar count.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.lookup.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Creates one leaf per parameter on `graph`.
    pub fn bind<'g>(&self, graph: &'g Graph) -> Bound<'g> {
        Bound {
            vars: self.tensors.iter().map(|t| graph.leaf(t.clone())).collect(),
        }
    }

    /// Like [`bind`](Self::bind) but without gradient tracking.
    pub fn bind_frozen<'g>(&self, graph: &'g Graph) -> Bound<'g> {
        Bound {
            vars: self
                .tensors
                .iter()
                .map(|t| graph.constant(t.clone()))
                .collect(),
        }
    }
}

/// Parameters materialized on a graph.
pub struct Bound<'g> {
    vars: Vec<Var<'g>>,
}

impl<'g> Bound<'g> {
    pub fn get(&self, id: ParamId) -> Var<'g> {
        self.vars[id.0]
    }

    /// Gradient per parameter, zero where the output did not depend on it.
    pub fn gradients(&self, grads: &mut Grads) -> Vec<Tensor> {
        self.vars
            .iter()
            .map(|v| grads.take(*v).unwrap_or_else(|| Tensor::zeros(&v.shape())))
            .collect()
    }
}
