use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::median_p95;
use crate::chanmodel::ChannelInstance;
use crate::error::{Error, Result};
use crate::oracle::{grid_search_with, GridSpec, OracleOptions};
use crate::ranet::{infer, RaModel};

/// Fewest instances a timing run accepts.
pub const MIN_TIMING_INSTANCES: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub n_instances: usize,
    pub repetitions: usize,
    pub dnn_median_ms: f64,
    pub dnn_p95_ms: f64,
    pub oracle_median_ms: f64,
    pub oracle_p95_ms: f64,
    /// `oracle_median_ms / dnn_median_ms`.
    pub speedup: f64,
    pub grid: GridSpec,
}

/// Per-instance wall time of `infer` (mean over `repetitions` calls) and of
/// one single-threaded grid search for the model's goal, on the same
/// instances.
pub fn timing_benchmark(
    model: &RaModel,
    instances: &[ChannelInstance],
    grid: &GridSpec,
    repetitions: usize,
) -> Result<TimingReport> {
    if instances.len() < MIN_TIMING_INSTANCES {
        return Err(Error::InvalidArgument(format!(
            "timing needs at least {MIN_TIMING_INSTANCES} instances, got {}",
            instances.len()
        )));
    }
    let reps = repetitions.max(1);
    let opts = OracleOptions::default();
    // warm-up
    black_box(infer(model, &instances[0])?);
    let mut dnn = Vec::with_capacity(instances.len());
    let mut oracle = Vec::with_capacity(instances.len());
    for inst in instances {
        let start = Instant::now();
        for _ in 0..reps {
            black_box(infer(model, black_box(inst))?);
        }
        dnn.push(start.elapsed().as_secs_f64() * 1e3 / reps as f64);
        let start = Instant::now();
        black_box(grid_search_with(inst, model.goal, grid, &model.system, &opts)?);
        oracle.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let (dnn_median_ms, dnn_p95_ms) = median_p95(&dnn).expect("non-empty");
    let (oracle_median_ms, oracle_p95_ms) = median_p95(&oracle).expect("non-empty");
    Ok(TimingReport {
        n_instances: instances.len(),
        repetitions: reps,
        dnn_median_ms,
        dnn_p95_ms,
        oracle_median_ms,
        oracle_p95_ms,
        speedup: oracle_median_ms / dnn_median_ms,
        grid: *grid,
    })
}
