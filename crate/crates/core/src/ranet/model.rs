use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{preprocess, preprocess_batch, NormStats};
use super::train::TrainHyper;
use crate::chanmodel::{ChannelInstance, SystemConfig};
use crate::error::{Error, Result};
use crate::linkmetrics::{Goal, PowerAllocation};
use crate::neuralcore::{group_softmax, sigmoid_matrix, Matrix, NodeId, ParamSet, Tape};

/// Layer counts are weight layers: `layers − 1` hidden ReLU layers of
/// `hidden_width` nodes followed by one linear output layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub layers_tnet: usize,
    pub layers_pnet: usize,
    pub hidden_width: usize,
    /// `M · (N+1)²`: every gain, including the CUE's links.
    pub input_dim: usize,
}

impl ArchConfig {
    pub fn for_system(system: &SystemConfig) -> Self {
        Self {
            layers_tnet: 4,
            layers_pnet: 4,
            hidden_width: 100,
            input_dim: system.gain_count(),
        }
    }

    pub fn validate(&self, system: &SystemConfig) -> Result<()> {
        if self.layers_tnet < 2 || self.layers_pnet < 2 {
            return Err(Error::Config("each head needs at least 2 layers".into()));
        }
        if self.hidden_width < 1 {
            return Err(Error::Config("hidden_width must be at least 1".into()));
        }
        if self.input_dim != system.gain_count() {
            return Err(Error::Shape(format!(
                "input_dim {} does not match M·(N+1)² = {}",
                self.input_dim,
                system.gain_count()
            )));
        }
        Ok(())
    }

    fn dims(&self, layers: usize, out: usize) -> Vec<usize> {
        let mut d = vec![self.input_dim];
        d.extend(std::iter::repeat_n(self.hidden_width, layers - 1));
        d.push(out);
        d
    }

    pub fn tnet_dims(&self, system: &SystemConfig) -> Vec<usize> {
        self.dims(self.layers_tnet, system.n_due)
    }

    pub fn pnet_dims(&self, system: &SystemConfig) -> Vec<usize> {
        self.dims(self.layers_pnet, system.n_due * system.n_channels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    /// Seed of the dataset the model was trained on.
    pub data_seed: u64,
    pub epochs: usize,
    pub steps: u64,
    pub final_loss: Option<f64>,
    pub hyper: TrainHyper,
}

/// A trained (or freshly initialised) allocation network.
#[derive(Debug, Clone, PartialEq)]
pub struct RaModel {
    pub arch: ArchConfig,
    /// Total-power head, `N` outputs.
    pub tnet: ParamSet,
    /// Split head, `N·M` outputs in `N` softmax groups.
    pub pnet: ParamSet,
    pub norm: NormStats,
    pub system: SystemConfig,
    pub goal: Goal,
    pub meta: TrainingMeta,
}

impl RaModel {
    /// Untrained model with Xavier weights drawn from `seed`, Tnet first.
    pub fn xavier(
        system: &SystemConfig,
        arch: &ArchConfig,
        goal: Goal,
        norm: NormStats,
        seed: u64,
    ) -> Result<Self> {
        let mut model = Self::xavier_from(system, arch, goal, norm, &mut ChaCha8Rng::seed_from_u64(seed))?;
        model.meta.seed = seed;
        Ok(model)
    }

    pub(crate) fn xavier_from<R: Rng + ?Sized>(
        system: &SystemConfig,
        arch: &ArchConfig,
        goal: Goal,
        norm: NormStats,
        rng: &mut R,
    ) -> Result<Self> {
        arch.validate(system)?;
        norm.validate(arch.input_dim)?;
        let tnet = ParamSet::xavier(&arch.tnet_dims(system), rng)?;
        let pnet = ParamSet::xavier(&arch.pnet_dims(system), rng)?;
        Ok(Self {
            arch: arch.clone(),
            tnet,
            pnet,
            norm,
            system: system.clone(),
            goal,
            meta: TrainingMeta {
                seed: 0,
                data_seed: 0,
                epochs: 0,
                steps: 0,
                final_loss: None,
                hyper: TrainHyper::default(),
            },
        })
    }

    /// Checks every shape invariant between the parts.
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.arch.validate(&self.system)?;
        self.norm.validate(self.arch.input_dim)?;
        if self.tnet.dims() != self.arch.tnet_dims(&self.system) {
            return Err(Error::Shape(format!(
                "total-power head has widths {:?}, architecture says {:?}",
                self.tnet.dims(),
                self.arch.tnet_dims(&self.system)
            )));
        }
        if self.pnet.dims() != self.arch.pnet_dims(&self.system) {
            return Err(Error::Shape(format!(
                "split head has widths {:?}, architecture says {:?}",
                self.pnet.dims(),
                self.arch.pnet_dims(&self.system)
            )));
        }
        Ok(())
    }
}

/// Tape nodes of the allocation heads.
pub(crate) struct AllocNodes {
    /// `B × N`, Watts.
    #[allow(dead_code)]
    pub total: NodeId,
    /// `B × N·M` channel shares.
    #[allow(dead_code)]
    pub split: NodeId,
    /// `B × N·M`, Watts, DUE-major.
    pub power: NodeId,
}

fn repeat_index(n_due: usize, n_channels: usize) -> Vec<usize> {
    (0..n_due).flat_map(|i| std::iter::repeat_n(i, n_channels)).collect()
}

/// Records both heads and their product on `tape`.
pub(crate) fn alloc_on_tape(
    tape: &mut Tape,
    model: &RaModel,
    tnet_leaves: &[NodeId],
    pnet_leaves: &[NodeId],
    features: NodeId,
) -> Result<AllocNodes> {
    let sys = &model.system;
    let t_pre = model.tnet.forward_tape(tape, tnet_leaves, features)?;
    let t_unit = tape.sigmoid(t_pre);
    let total = tape.scale(t_unit, sys.p_max_w());
    let p_pre = model.pnet.forward_tape(tape, pnet_leaves, features)?;
    let split = tape.softmax(p_pre, sys.n_channels)?;
    let total_rep = tape.gather(total, repeat_index(sys.n_due, sys.n_channels))?;
    let power = tape.mul(total_rep, split)?;
    Ok(AllocNodes { total, split, power })
}

/// Both heads without recording a tape: total power per DUE (`B × N`,
/// Watts) and the per-DUE channel split (`B × N·M`, rows of each group sum
/// to one).
pub fn forward_heads(model: &RaModel, features: &Matrix) -> Result<(Matrix, Matrix)> {
    if features.cols() != model.arch.input_dim {
        return Err(Error::Shape(format!(
            "features have {} columns, network expects {}",
            features.cols(),
            model.arch.input_dim
        )));
    }
    let p_max = model.system.p_max_w();
    let total = sigmoid_matrix(&model.tnet.forward(features)?).map(|s| p_max * s);
    let split = group_softmax(&model.pnet.forward(features)?, model.system.n_channels);
    Ok((total, split))
}

/// Powers for a batch of feature rows, `B × N·M`, without recording a tape.
pub fn forward_alloc_batch(model: &RaModel, features: &Matrix) -> Result<Matrix> {
    let (n, m) = (model.system.n_due, model.system.n_channels);
    let (total, mut power) = forward_heads(model, features)?;
    for r in 0..power.rows() {
        let t = total.row(r).to_vec();
        for (k, x) in power.row_mut(r).iter_mut().enumerate() {
            *x *= t[k / m];
        }
    }
    debug_assert_eq!(power.cols(), n * m);
    Ok(power)
}

/// Power allocation for one normalised feature vector.
pub fn forward_alloc(model: &RaModel, features: &[f64]) -> Result<PowerAllocation> {
    let x = Matrix::from_vec(1, features.len(), features.to_vec())?;
    let p = forward_alloc_batch(model, &x)?;
    PowerAllocation::from_flat(model.system.n_due, model.system.n_channels, p.into_vec())
}

/// Normalises `instance` with the model's stored statistics and runs the
/// network.
pub fn infer(model: &RaModel, instance: &ChannelInstance) -> Result<PowerAllocation> {
    instance.check_shape(&model.system)?;
    forward_alloc(model, &preprocess(instance, &model.norm)?)
}

/// [`infer`] over many instances in one batched pass.
pub fn infer_batch(model: &RaModel, instances: &[ChannelInstance]) -> Result<Vec<PowerAllocation>> {
    for inst in instances {
        inst.check_shape(&model.system)?;
    }
    let x = preprocess_batch(instances, &model.norm)?;
    let p = forward_alloc_batch(model, &x)?;
    (0..p.rows())
        .map(|r| PowerAllocation::from_flat(model.system.n_due, model.system.n_channels, p.row(r).to_vec()))
        .collect()
}
