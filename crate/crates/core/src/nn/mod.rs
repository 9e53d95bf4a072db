//! Minimal tensor and differentiable-layer core.
//!
//! Layers own their parameters and cache what backward needs during
//! forward. Reverse-mode gradients flow by calling `backward` on layers in
//! the opposite order of `forward`.

pub mod checkpoint;
pub mod conv;
pub mod dense;
pub mod gradcheck;
mod layer;
pub mod loss;
pub mod lstm;
pub mod optim;
mod tensor;

pub use checkpoint::Checkpoint;
pub use conv::{conv1d_forward, conv1d_out_len, maxpool1d, same_padding, upsample_nearest, Conv1d, ConvSpec, MaxPool1d, Upsample};
pub use dense::{dense, dropout, relu_vec, sigmoid, sigmoid_vec, softmax, tanh_vec, Activation, ActivationKind, Dense, Dropout};
pub use layer::{parameter_count, zero_grads, Layer, Param, Sequential};
pub use loss::{bce_grad, bce_logit_grad, bce_loss, mse_grad, mse_loss, BCE_EPS};
pub use lstm::{lstm_many_to_one, lstm_step, lstm_step_full, Lstm, LstmCell, StepState};
pub use optim::{adam_step, epoch_batches, Adam, AdamConfig};
pub use tensor::Tensor;
