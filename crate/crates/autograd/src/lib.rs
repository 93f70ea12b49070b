//! Tape-based reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records every operation applied to its [`Var`] handles. Calling
//! [`Graph::backward`] on a scalar node walks the tape in reverse and returns
//! the accumulated [`Grads`]. Parameters live outside the graph in a
//! [`ParamSet`]; each optimization step binds them onto a fresh graph.
//!
//! ```
//! use eegdit_autograd::{Graph, Tensor};
//!
//! let g = Graph::new();
//! let x = g.leaf(Tensor::from_vec(vec![3.0], &[1]));
//! let y = x.mul(x).sum_all();
//! let grads = g.backward(y);
//! assert_eq!(grads.get(x).unwrap().data(), &[6.0]);
//! ```

pub mod check;
mod graph;
mod ops;
mod optim;
mod params;
mod tensor;

pub use graph::{Grads, Graph, Var};
pub use optim::{AdamW, AdamWConfig};
pub use params::{Bound, ParamId, ParamSet};
pub use tensor::{broadcast_shape, Tensor};
