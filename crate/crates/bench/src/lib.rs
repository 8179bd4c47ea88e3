//! Shared fixtures for the criterion benches.

use d2dra::{generate_dataset, ArchConfig, Dataset, Goal, NormStats, RaModel, SystemConfig};

/// Default system at area size `d_m`.
pub fn system(d_m: f64) -> SystemConfig {
    SystemConfig::default().with_area(d_m)
}

pub fn dataset(count: usize, seed: u64) -> Dataset {
    generate_dataset(&system(500.0), count, seed).expect("default system is valid")
}

/// Untrained model of the default shape; timing does not depend on the
/// weights.
pub fn model(goal: Goal, seed: u64) -> RaModel {
    let sys = system(500.0);
    let norm = NormStats::fit(dataset(1000, seed).instances()).expect("non-empty");
    RaModel::xavier(&sys, &ArchConfig::for_system(&sys), goal, norm, seed).expect("default arch is valid")
}
