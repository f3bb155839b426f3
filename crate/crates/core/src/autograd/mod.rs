//! Minimal reverse-mode differentiation for the layers the FCNs use.
//!
//! A [`Graph`] records every operation applied to its [`Var`] handles.
//! Nodes are appended after their parents, so reverse insertion order is a
//! valid topological order for [`Graph::backward`].
//!
//! ```
//! use neoseize::autograd::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.param(Tensor::new(vec![3], vec![-1.0, 0.5, 2.0]).unwrap());
//! let y = g.relu(x);
//! let loss = g.sum(y);
//! g.backward(loss).unwrap();
//! assert_eq!(g.grad(x).unwrap(), &[0.0, 1.0, 1.0]);
//! ```

mod conv;
mod gradcheck;
mod graph;
mod optim;
mod tensor;

pub(crate) use conv::im2col_same;
pub use conv::{conv1d_output_len, Padding};
pub use gradcheck::{grad_check, GradCheckOptions};
pub use graph::{BnMode, BnStats, Graph, PoolKind, Var};
pub use optim::{sgd_nesterov_step, OptimizerState};
pub use tensor::Tensor;
