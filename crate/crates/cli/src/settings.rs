//! Layered settings: command-line flags over an optional TOML file over
//! built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::Context;
use d2dra::evalharness::{SweepConfig, SweepSeeds};
use d2dra::oracle::GridSpec;
use d2dra::ranet::{InterferenceScale, QosPenalty};
use d2dra::{ArchConfig, Goal, SystemConfig, TrainHyper};
use serde::{Deserialize, Serialize};

use crate::args::{SystemFlags, TrainFlags};
use crate::UsageError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub threads: Option<usize>,
    pub system: Option<SystemConfig>,
    pub train: Option<TrainHyper>,
    pub arch: Option<ArchFile>,
    pub sweep: Option<SweepFile>,
    pub oracle: Option<OracleFile>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchFile {
    pub layers_tnet: Option<usize>,
    pub layers_pnet: Option<usize>,
    pub hidden_width: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub d_values: Option<Vec<f64>>,
    pub train_count: Option<usize>,
    pub test_count: Option<usize>,
    pub goals: Option<Vec<Goal>>,
    pub seed_data: Option<u64>,
    pub seed_train: Option<u64>,
    pub timing: Option<bool>,
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleFile {
    pub grid: Option<GridSpec>,
    pub budget: Option<u64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
    }

    pub fn system(&self, flags: &SystemFlags) -> SystemConfig {
        let mut s = self.system.clone().unwrap_or_default();
        if let Some(v) = flags.n_due {
            s.n_due = v;
        }
        if let Some(v) = flags.n_channels {
            s.n_channels = v;
        }
        if let Some(v) = flags.area {
            s.area_d = v;
        }
        if let Some(v) = flags.p_max_dbm {
            s.p_max_dbm = v;
        }
        if let Some(v) = flags.i_thresh_dbm {
            s.i_thresh_dbm = v;
        }
        if let Some(v) = flags.r_thresh {
            s.r_thresh = v;
        }
        s
    }

    pub fn hyper(&self, flags: &TrainFlags, seed: Option<u64>) -> TrainHyper {
        let mut h = self.train.clone().unwrap_or_default();
        if let Some(v) = flags.epochs {
            h.epochs = v;
        }
        if let Some(v) = flags.batch {
            h.batch_size = v;
        }
        if let Some(v) = flags.lr {
            h.lr = v;
        }
        if let Some(v) = flags.lambda1 {
            h.lambda1 = v;
        }
        if let Some(v) = flags.lambda2 {
            h.lambda2 = v;
        }
        if let Some(v) = seed {
            h.seed = v;
        }
        h
    }

    pub fn arch(&self, flags: &TrainFlags, system: &SystemConfig) -> ArchConfig {
        let base = ArchConfig::for_system(system);
        let file = self.arch.clone().unwrap_or_default();
        ArchConfig {
            layers_tnet: flags.layers.or(file.layers_tnet).unwrap_or(base.layers_tnet),
            layers_pnet: flags.layers.or(file.layers_pnet).unwrap_or(base.layers_pnet),
            hidden_width: flags.width.or(file.hidden_width).unwrap_or(base.hidden_width),
            input_dim: base.input_dim,
        }
    }

    pub fn grid(&self, flag: Option<GridSpec>) -> GridSpec {
        flag.or(self.oracle.as_ref().and_then(|o| o.grid)).unwrap_or_default()
    }

    pub fn budget(&self, flag: Option<u64>) -> u64 {
        flag.or(self.oracle.as_ref().and_then(|o| o.budget))
            .unwrap_or(d2dra::oracle::DEFAULT_BUDGET)
    }

    pub fn threads(&self, flag: Option<usize>) -> usize {
        flag.or(self.threads).unwrap_or(1).max(1)
    }

    pub fn sweep(&self, a: &crate::args::EvalArgs) -> SweepConfig {
        let f = self.sweep.clone().unwrap_or_default();
        let system = self.system(&a.system);
        let arch = self.arch(&a.train, &system);
        let d = SweepConfig::default();
        SweepConfig {
            d_values: a.d_list.clone().or(f.d_values).unwrap_or(d.d_values),
            train_count: a.train_count.or(f.train_count).unwrap_or(d.train_count),
            test_count: a.test_count.or(f.test_count).unwrap_or(d.test_count),
            goals: a.goals.clone().or(f.goals).unwrap_or(d.goals),
            grid: self.grid(a.grid),
            hyper: self.hyper(&a.train, None),
            layers_tnet: arch.layers_tnet,
            layers_pnet: arch.layers_pnet,
            hidden_width: arch.hidden_width,
            seeds: SweepSeeds {
                data: a.seed_data.or(f.seed_data).unwrap_or(d.seeds.data),
                train: a.seed_train.or(f.seed_train).unwrap_or(d.seeds.train),
            },
            timing: a.timing || f.timing.unwrap_or(false),
            threads: self.threads(a.common.threads),
            cache_dir: a.cache_dir.clone().or(f.cache_dir),
            system,
        }
    }
}

/// Names of the non-default loss variants, for warnings.
pub fn loss_variant_warnings(h: &TrainHyper) -> Vec<String> {
    let mut w = Vec::new();
    if h.lambda1 == 0.0 && h.lambda2 == 0.0 {
        w.push("lambda1 = lambda2 = 0: training ignores the interference and QoS constraints".into());
    }
    if h.qos_penalty == QosPenalty::Literal {
        w.push("qos_penalty = literal penalises meeting the QoS threshold".into());
    }
    if h.interference_scale == InterferenceScale::Watts {
        w.push("interference_scale = watts makes the interference penalty negligible".into());
    }
    w
}
