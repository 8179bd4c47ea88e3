use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{median_p95, outage_rate, violation_summary, InstanceRecord};
use crate::chanmodel::{generate_dataset, Dataset, SystemConfig};
use crate::error::{Error, Result};
use crate::linkmetrics::Goal;
use crate::oracle::{load_or_solve, GridSpec, OracleCache, OracleOptions};
use crate::ranet::{infer, infer_batch, train_with_progress, ArchConfig, EpochStats, RaModel, TrainHyper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSeeds {
    /// Base seed for the generated train/test datasets.
    pub data: u64,
    /// Seed for network initialisation and shuffling.
    pub train: u64,
}

impl Default for SweepSeeds {
    fn default() -> Self {
        Self { data: 7, train: 0 }
    }
}

impl std::fmt::Display for SweepSeeds {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "data={};train={}", self.data, self.train)
    }
}

/// Seed of the `role` dataset ("train" or "test") at area size `d_m`.
pub fn derive_seed(base: u64, d_m: f64, role: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(d_m.to_bits().to_le_bytes());
    h.update(role.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Base scenario; `area_d` is replaced by each entry of `d_values`.
    pub system: SystemConfig,
    pub d_values: Vec<f64>,
    pub train_count: usize,
    pub test_count: usize,
    pub goals: Vec<Goal>,
    pub grid: GridSpec,
    pub hyper: TrainHyper,
    pub layers_tnet: usize,
    pub layers_pnet: usize,
    pub hidden_width: usize,
    pub seeds: SweepSeeds,
    /// Measure inference and oracle wall times. Timing columns are not
    /// reproducible, so they are left empty when this is off.
    pub timing: bool,
    pub threads: usize,
    /// Directory for oracle cache files.
    pub cache_dir: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let system = SystemConfig::default();
        let arch = ArchConfig::for_system(&system);
        Self {
            system,
            d_values: vec![100.0, 200.0, 300.0, 400.0, 500.0],
            train_count: 40_000,
            test_count: 2_000,
            goals: Goal::ALL.to_vec(),
            grid: GridSpec::default(),
            hyper: TrainHyper::default(),
            layers_tnet: arch.layers_tnet,
            layers_pnet: arch.layers_pnet,
            hidden_width: arch.hidden_width,
            seeds: SweepSeeds::default(),
            timing: false,
            threads: 1,
            cache_dir: None,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_values.is_empty() || self.d_values.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::Config("d_values must be a non-empty list of positive sizes".into()));
        }
        if self.test_count < 1 {
            return Err(Error::Config("test_count must be at least 1".into()));
        }
        if self.goals.is_empty() {
            return Err(Error::Config("at least one goal is required".into()));
        }
        if self.train_count < 1 {
            return Err(Error::Config("train_count must be at least 1".into()));
        }
        self.grid.validate()?;
        self.hyper.validate()?;
        for d in &self.d_values {
            self.system.with_area(*d).validate()?;
        }
        self.arch(&self.system).validate(&self.system)
    }

    pub fn arch(&self, system: &SystemConfig) -> ArchConfig {
        ArchConfig {
            layers_tnet: self.layers_tnet,
            layers_pnet: self.layers_pnet,
            hidden_width: self.hidden_width,
            input_dim: system.gain_count(),
        }
    }

    /// Training hyperparameters with the sweep's train seed applied.
    pub fn hyper(&self) -> TrainHyper {
        TrainHyper {
            seed: self.seeds.train,
            ..self.hyper.clone()
        }
    }
}

/// One `(goal, D)` cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub goal: Goal,
    pub d_m: f64,
    /// Mean network SE `Σ_i SE_i`, bps/Hz.
    pub mean_se_bpshz: f64,
    /// Mean `Σ_i EE_i`, bits/J.
    pub mean_ee_bpj: f64,
    /// Mean transmit power per DUE, W.
    pub mean_power_w: f64,
    /// Mean DNN objective over mean oracle objective.
    pub ratio_vs_oracle: Option<f64>,
    pub outage_rate: Option<f64>,
    /// Mean `excess_I / I_T + shortfall / R_T` over outage instances.
    pub mean_violation: f64,
    pub dnn_ms_median: Option<f64>,
    pub oracle_ms_median: Option<f64>,
    pub n_test: usize,
    pub n_oracle_feasible: usize,
    pub gridspec: GridSpec,
    pub seeds: SweepSeeds,
    /// Mean total transmit power summed over DUEs, W.
    pub mean_power_sum_w: f64,
    /// Same statistics for the oracle's solution to this row's goal.
    pub oracle_mean_se: f64,
    pub oracle_mean_ee: f64,
    pub oracle_mean_power_w: f64,
    pub mean_violation_qos: f64,
    pub mean_violation_interference_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResults {
    pub rows: Vec<SweepRow>,
}

/// Progress notifications from [`run_sweep_with`].
#[derive(Debug)]
pub enum SweepEvent<'a> {
    Generating { d_m: f64 },
    Epoch { d_m: f64, goal: Goal, stats: &'a EpochStats },
    Trained { d_m: f64, goal: Goal, seconds: f64 },
    OracleDone { d_m: f64, seconds: f64 },
    CellDone { row: &'a SweepRow },
}

pub fn run_sweep(sweep: &SweepConfig) -> Result<SweepResults> {
    run_sweep_with(sweep, |_| {})
}

/// Generates data, trains one model per goal and evaluates it against the
/// oracle for every area size. Everything except the timing columns is a
/// function of the configuration.
pub fn run_sweep_with(sweep: &SweepConfig, mut progress: impl FnMut(SweepEvent<'_>)) -> Result<SweepResults> {
    sweep.validate()?;
    let mut rows = Vec::new();
    for &d in &sweep.d_values {
        let system = sweep.system.with_area(d);
        progress(SweepEvent::Generating { d_m: d });
        let train_ds = generate_dataset(&system, sweep.train_count, derive_seed(sweep.seeds.data, d, "train"))?;
        let test_ds = generate_dataset(&system, sweep.test_count, derive_seed(sweep.seeds.data, d, "test"))?;
        let arch = sweep.arch(&system);
        let hyper = sweep.hyper();
        let mut models = Vec::with_capacity(sweep.goals.len());
        for &goal in &sweep.goals {
            let start = Instant::now();
            let report = train_with_progress(&train_ds, goal, &arch, &hyper, |stats| {
                progress(SweepEvent::Epoch { d_m: d, goal, stats })
            })?;
            progress(SweepEvent::Trained {
                d_m: d,
                goal,
                seconds: start.elapsed().as_secs_f64(),
            });
            models.push(report.model);
        }
        let start = Instant::now();
        let oracle = solve_oracle(sweep, &test_ds)?;
        progress(SweepEvent::OracleDone {
            d_m: d,
            seconds: start.elapsed().as_secs_f64(),
        });
        for row in evaluate_cell(sweep, &test_ds, &models, &oracle)? {
            progress(SweepEvent::CellDone { row: &row });
            rows.push(row);
        }
    }
    Ok(SweepResults { rows })
}

/// Oracle solutions for `test`, read from or written to the sweep's cache
/// directory when one is configured.
pub fn solve_oracle(sweep: &SweepConfig, test: &Dataset) -> Result<OracleCache> {
    let path = sweep.cache_dir.as_ref().map(|dir| {
        dir.join(format!(
            "oracle-{}-{}.bin",
            sweep.grid,
            &test.digest()[..16]
        ))
    });
    let opts = OracleOptions {
        threads: sweep.threads.max(1),
        ..OracleOptions::default()
    };
    load_or_solve(test, &sweep.grid, &opts, path.as_deref())
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Per-instance records of `model` on `test`. Instances are scored on
/// `threads` workers; the output order is the dataset order.
pub fn instance_records(model: &RaModel, test: &Dataset, oracle: &OracleCache, threads: usize) -> Result<Vec<InstanceRecord>> {
    if oracle.len() != test.len() {
        return Err(Error::Shape(format!(
            "oracle cache holds {} instances, test set {}",
            oracle.len(),
            test.len()
        )));
    }
    let allocs = infer_batch(model, test.instances())?;
    let score = |k: usize| {
        let sol = oracle.get(k, model.goal).expect("index in range");
        InstanceRecord::new(&test.instances()[k], &allocs[k], sol, test.config())
    };
    if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| (0..test.len()).into_par_iter().map(score).collect())
    } else {
        (0..test.len()).map(score).collect()
    }
}

/// Scores already trained models on one test set.
pub fn evaluate_cell(
    sweep: &SweepConfig,
    test: &Dataset,
    models: &[RaModel],
    oracle: &OracleCache,
) -> Result<Vec<SweepRow>> {
    let system = test.config();
    // feasibility depends only on the constraints
    for (k, sols) in oracle.solutions.iter().enumerate() {
        if sols.iter().any(|s| s.feasible != sols[0].feasible) {
            return Err(Error::Corrupt(format!(
                "oracle feasibility differs between goals on instance {k}"
            )));
        }
    }
    let mut rows = Vec::with_capacity(models.len());
    for model in models {
        if model.system.n_due != system.n_due || model.system.n_channels != system.n_channels {
            return Err(Error::Shape(format!(
                "{} model is for N={}, M={}, test set has N={}, M={}",
                model.goal, model.system.n_due, model.system.n_channels, system.n_due, system.n_channels
            )));
        }
        let records = instance_records(model, test, oracle, sweep.threads)?;
        let feasible: Vec<&InstanceRecord> = records.iter().filter(|r| r.oracle_feasible).collect();
        let n_due = system.n_due as f64;
        let dnn_obj = mean(feasible.iter().map(|r| r.dnn_objective));
        let orc_obj = mean(feasible.iter().map(|r| r.oracle_objective));
        let viol = violation_summary(&records, system);
        let (dnn_ms, oracle_ms) = if sweep.timing {
            let mut times = Vec::with_capacity(test.len());
            for inst in test.instances() {
                let start = Instant::now();
                std::hint::black_box(infer(model, inst)?);
                times.push(start.elapsed().as_secs_f64() * 1e3);
            }
            let walls: Vec<f64> = oracle.solutions.iter().map(|s| s[model.goal.index()].wall_ms).collect();
            (median_p95(&times).map(|t| t.0), median_p95(&walls).map(|t| t.0))
        } else {
            (None, None)
        };
        let power_sum = mean(feasible.iter().map(|r| r.dnn_power));
        rows.push(SweepRow {
            goal: model.goal,
            d_m: system.area_d,
            mean_se_bpshz: mean(feasible.iter().map(|r| r.dnn_se)),
            mean_ee_bpj: mean(feasible.iter().map(|r| r.dnn_ee)),
            mean_power_w: power_sum / n_due,
            ratio_vs_oracle: (!feasible.is_empty()).then(|| crate::oracle::ratio(dnn_obj, orc_obj)),
            outage_rate: outage_rate(&records),
            mean_violation: viol.combined,
            dnn_ms_median: dnn_ms,
            oracle_ms_median: oracle_ms,
            n_test: records.len(),
            n_oracle_feasible: feasible.len(),
            gridspec: sweep.grid,
            seeds: sweep.seeds,
            mean_power_sum_w: power_sum,
            oracle_mean_se: mean(feasible.iter().map(|r| r.oracle_se)),
            oracle_mean_ee: mean(feasible.iter().map(|r| r.oracle_ee)),
            oracle_mean_power_w: mean(feasible.iter().map(|r| r.oracle_power)) / n_due,
            mean_violation_qos: viol.qos,
            mean_violation_interference_w: viol.interference_w,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_sweep() -> SweepConfig {
        SweepConfig {
            d_values: vec![150.0, 300.0],
            train_count: 400,
            test_count: 12,
            grid: GridSpec::new(9, 9).unwrap(),
            hyper: TrainHyper {
                epochs: 4,
                batch_size: 100,
                ..TrainHyper::default()
            },
            hidden_width: 12,
            ..SweepConfig::default()
        }
    }

    #[test]
    fn one_row_per_goal_and_area() {
        let sweep = SweepConfig {
            d_values: vec![200.0],
            test_count: 10,
            goals: vec![Goal::MaxSe],
            ..tiny_sweep()
        };
        let res = run_sweep(&sweep).unwrap();
        assert_eq!(res.rows.len(), 1);
        let r = &res.rows[0];
        assert_eq!(r.n_test, 10);
        assert!(r.n_oracle_feasible > 0);
        assert!(r.mean_se_bpshz.is_finite() && r.mean_ee_bpj.is_finite() && r.mean_power_w > 0.0);
        assert!(r.ratio_vs_oracle.is_some());
        let o = r.outage_rate.unwrap();
        assert!((0.0..=1.0).contains(&o));
        assert!(r.dnn_ms_median.is_none());
    }

    #[test]
    fn sweep_is_deterministic_and_thread_independent() {
        let sweep = tiny_sweep();
        let a = run_sweep(&sweep).unwrap();
        let b = run_sweep(&SweepConfig { threads: 3, ..sweep.clone() }).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 6);
    }

    #[test]
    fn timing_columns_filled_when_enabled() {
        let sweep = SweepConfig {
            d_values: vec![200.0],
            goals: vec![Goal::MinPw],
            timing: true,
            ..tiny_sweep()
        };
        let r = &run_sweep(&sweep).unwrap().rows[0];
        assert!(r.dnn_ms_median.unwrap() > 0.0);
        assert!(r.oracle_ms_median.unwrap() > 0.0);
    }

    #[test]
    fn invalid_configs() {
        for s in [
            SweepConfig { d_values: vec![], ..tiny_sweep() },
            SweepConfig { d_values: vec![-1.0], ..tiny_sweep() },
            SweepConfig { test_count: 0, ..tiny_sweep() },
            SweepConfig { goals: vec![], ..tiny_sweep() },
        ] {
            assert!(matches!(run_sweep(&s), Err(Error::Config(_))));
        }
    }

    #[test]
    fn seeds_depend_on_area_and_role() {
        assert_ne!(derive_seed(7, 100.0, "train"), derive_seed(7, 100.0, "test"));
        assert_ne!(derive_seed(7, 100.0, "train"), derive_seed(7, 200.0, "train"));
        assert_eq!(derive_seed(7, 100.0, "train"), derive_seed(7, 100.0, "train"));
    }
}
