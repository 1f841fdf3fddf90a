//! Reverse-mode differentiation over dense `f64` tensors, plus the layers,
//! optimizer and gradient checker used by every learned component.

pub mod checkpoint;
mod gradcheck;
mod graph;
mod layers;
mod optim;
mod params;
mod tensor;

pub use gradcheck::{finite_diff_check, relative_error};
pub use graph::{Graph, Var};
pub use layers::{gaussian_nll, linear, GruCell, Linear, LstmCell, LN_2PI};
pub(crate) use layers::gaussian_nll_elements;
pub use optim::{adam_step, clip_global_norm, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use params::{Gradients, ParamId, ParamStore};
pub use tensor::Tensor;
