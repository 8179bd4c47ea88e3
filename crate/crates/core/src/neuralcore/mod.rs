//! Minimal reverse-mode automatic differentiation over row-major `f64`
//! matrices, plus the pieces needed to train dense networks: Xavier
//! initialisation, Adam and a finite-difference gradient checker.
//!
//! Rows are batch samples and columns are features throughout, so a dense
//! layer computes `x · W + b` with `W` stored `fan_in × fan_out`.

mod adam;
mod gradcheck;
mod matrix;
mod mlp;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckReport, ABS_FLOOR};
pub use matrix::Matrix;
pub use mlp::{xavier_bound, xavier_init, DenseParams, ParamSet};
pub use tape::{Gradients, NodeId, Tape};
pub(crate) use tape::{group_softmax, sigmoid_matrix};
