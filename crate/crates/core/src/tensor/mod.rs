//! Dense matrices, a reverse-mode tape, layers and optimization.

pub mod adam;
pub mod gradcheck;
pub mod matrix;
pub mod nn;
pub mod param;
pub mod tape;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use matrix::Matrix;
pub use nn::{conv1d, cross_attention, linear, AttentionOutput, Conv1d, CrossAttention, Linear};
pub use param::{load_checkpoint, save_checkpoint, ParamId, ParamStore, Parameter};
pub use tape::{softmax_rows_value, Grads, Tape, Var};
