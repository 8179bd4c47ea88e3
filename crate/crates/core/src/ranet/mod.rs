//! The allocation network.
//!
//! Two dense stacks read the same normalised dB-scale gains. The total-power
//! head ends in `P_T · sigmoid(·)`, one output per DUE; the split head ends
//! in `N` softmax groups of `M` channel shares. Their product is the power
//! allocation, so the transmit power budget holds for any parameters.
//!
//! Training minimises a goal-specific objective plus
//! `λ₁ Σ_k tanh([I^k − I_T]^+ / s) + λ₂ Σ_i tanh([R_T − SE_i]^+)`.
//! Note the QoS term penalises *shortfall* below `R_T`; the alternative
//! sign `[SE_i − R_T]^+` is available as [`QosPenalty::Literal`] but
//! penalises satisfying the constraint and should not be used for real runs.

mod features;
mod io;
mod loss;
mod model;
mod train;

pub use features::{gains_db, preprocess, preprocess_batch, NormStats, STD_FLOOR};
pub use io::{load_model, read_model, save_model, write_model, MODEL_FORMAT_VERSION};
pub use loss::{loss, loss_grad_check, BatchConstants, InterferenceScale, LossConfig, LossGraph, LossNodes, QosPenalty, EE_LOSS_SCALE};
pub use model::{forward_alloc, forward_alloc_batch, forward_heads, infer, infer_batch, ArchConfig, RaModel, TrainingMeta};
pub use train::{lr_at_epoch, train, train_with_progress, EpochStats, TrainHyper, TrainReport};
