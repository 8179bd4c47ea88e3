//! Area-size sweeps: train one model per goal, compare it with the grid
//! oracle on fresh test instances, and export a CSV table plus SVG charts.

mod export;
mod metrics;
mod sweep;
mod timing;

pub use export::{export_results, read_sweep_csv, write_sweep_csv, CSV_COLUMNS};
pub use metrics::{median_p95, outage_rate, violation_summary, InstanceRecord, ViolationSummary};
pub use sweep::{
    derive_seed, evaluate_cell, instance_records, run_sweep, run_sweep_with, solve_oracle, SweepConfig, SweepEvent,
    SweepResults, SweepRow, SweepSeeds,
};
pub use timing::{timing_benchmark, TimingReport, MIN_TIMING_INSTANCES};
