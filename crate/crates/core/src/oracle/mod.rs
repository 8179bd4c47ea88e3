//! Exhaustive grid search over per-DUE (total power × channel split)
//! candidates, used as the optimality reference.

mod cache;
mod grid;
mod search;

pub use cache::{load_or_solve, read_cache, solve_dataset, write_cache, OracleCache, CACHE_FORMAT_VERSION};
pub use grid::{enumerate_candidates, Candidate, GridSpec};
pub use search::{
    grid_search, grid_search_all, grid_search_reference, grid_search_with, ratio, verify_against, verify_alloc,
    OracleOptions, OracleSolution, Verification, DEFAULT_BUDGET,
};
