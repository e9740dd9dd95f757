//! Reverse-mode differentiable primitives for the encoder-decoder.

pub mod dense;
mod gradcheck;
mod graph;
pub mod ops;
mod tensor;

pub use gradcheck::{grad_check, grad_check_with, relative_error, GradCheckReport, Stencil, SUBSAMPLE_CAP};
pub use graph::{Gradients, Graph, Var};
pub use ops::{bissm_param_names, AttentionParams, BiSsmVars, FeedForwardParams, NormKind, LAYER_NORM_EPS};
pub use tensor::{ParameterStore, Tensor};
