pub mod bench;
pub mod data;
pub mod error;
pub mod model;
pub mod nn;
pub mod numerics;
mod scalar;
pub mod ssm;
pub mod train;

pub use error::{Error, Result};
pub use model::{Model, ModelConfig};
pub use scalar::{DType, Scalar};

pub type Model32 = Model<f32>;
pub type Model64 = Model<f64>;
pub type Tensor32 = nn::Tensor<f32>;
pub type Tensor64 = nn::Tensor<f64>;
