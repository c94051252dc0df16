//! Multilayer perceptron with explicit backpropagation, the Adam optimizer
//! and the two supervised losses used by the baseline.

mod adam;
mod loss;
mod mlp;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{loss_mape, loss_mse, MAPE_GUARD};
pub use mlp::{
    mlp_backward, mlp_forward, mlp_predict, Activation, ForwardTrace, InputNormalization, MlpModel, OutputMap, ParamGrads,
    MODEL_FORMAT_VERSION,
};

use crate::linalg::LinalgError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NeuralError {
    #[error(transparent)]
    Shape(#[from] LinalgError),
    #[error("invalid network: {0}")]
    Architecture(String),
    #[error("MAPE undefined: |y_true[{index}]| = {value} is below the guard")]
    MapeGuard { index: usize, value: f64 },
    #[error("model file: {0}")]
    Format(String),
}
