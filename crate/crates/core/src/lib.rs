//! End-to-end learned power allocation for underlay device-to-device (D2D)
//! networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`chanmodel`]: topologies, path loss + Rayleigh fading, datasets.
//! - [`linkmetrics`]: SINR, spectral/energy efficiency, constraint checks.
//! - [`neuralcore`]: a small matrix-valued reverse-mode autodiff tape,
//!   dense layers, Xavier initialisation, Adam and gradient checking.
//! - [`ranet`]: the allocation network (a total-power head and a
//!   per-channel split head), its penalty losses and the training loop.
//! - [`oracle`]: exhaustive grid search used as the optimality reference.
//! - [`evalharness`]: area-size sweeps, outage/timing statistics, CSV and
//!   SVG export.

pub mod chanmodel;
pub mod error;
pub mod evalharness;
pub mod linkmetrics;
pub mod neuralcore;
pub mod oracle;
pub mod ranet;

pub use chanmodel::{
    dbm_to_watt, generate_dataset, load_dataset, save_dataset, watt_to_dbm, ChannelInstance,
    Dataset, SystemConfig, Topology,
};
pub use error::{Error, Result};
pub use linkmetrics::{Goal, LinkReport, PowerAllocation};
pub use oracle::{grid_search, GridSpec, OracleSolution};
pub use ranet::{infer, train, ArchConfig, NormStats, RaModel, TrainHyper};

/// Tool version reported by the CLI and recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
