use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{preprocess_batch, NormStats};
use super::loss::{build_loss, BatchConstants, InterferenceScale, LossConfig, QosPenalty};
use super::model::{alloc_on_tape, ArchConfig, RaModel, TrainingMeta};
use crate::chanmodel::Dataset;
use crate::error::{Error, Result};
use crate::linkmetrics::Goal;
use crate::neuralcore::{AdamConfig, AdamState, Matrix, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    /// Base Adam step size.
    pub lr: f64,
    /// Fractions of `epochs` after which the step size is multiplied by
    /// `lr_decay`. Milestone `f` takes effect from epoch `⌈f·epochs⌉`
    /// (0-based).
    pub milestones: Vec<f64>,
    pub lr_decay: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub seed: u64,
    /// Trailing fraction of the dataset held out for validation.
    pub val_fraction: f64,
    pub qos_penalty: QosPenalty,
    pub interference_scale: InterferenceScale,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 1000,
            lr: 1e-3,
            milestones: vec![1.0 / 3.0, 2.0 / 3.0],
            lr_decay: 0.3,
            lambda1: 10.0,
            lambda2: 10.0,
            seed: 0,
            val_fraction: 0.1,
            qos_penalty: QosPenalty::Violation,
            interference_scale: InterferenceScale::Threshold,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0 && self.lambda1.is_finite() && self.lambda2.is_finite()) {
            return bad("lambda1 and lambda2 must be finite and >= 0");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must be in (0, 1]");
        }
        if self.milestones.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return bad("milestones must be fractions in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must be in [0, 1)");
        }
        Ok(())
    }

    /// Number of training samples out of `count` after the validation split.
    pub fn train_count(&self, count: usize) -> usize {
        count - (count as f64 * self.val_fraction).floor() as usize
    }
}

/// Step size used during 0-based `epoch`.
pub fn lr_at_epoch(hyper: &TrainHyper, epoch: usize) -> f64 {
    let passed = hyper
        .milestones
        .iter()
        .filter(|f| epoch as f64 >= (*f * hyper.epochs as f64).ceil())
        .count();
    hyper.lr * hyper.lr_decay.powi(passed as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    /// Sample-weighted mean of the mini-batch losses.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub steps: u64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: RaModel,
    pub history: Vec<EpochStats>,
}

struct Prepared {
    features: Matrix,
    consts: BatchConstants,
}

fn prepare(instances: &[crate::chanmodel::ChannelInstance], norm: &NormStats, ds: &Dataset) -> Result<Prepared> {
    Ok(Prepared {
        features: preprocess_batch(instances, norm)?,
        consts: BatchConstants::from_instances(instances, ds.config())?,
    })
}

/// Loss and optional gradients for one batch. Gradients come back in the
/// order tnet tensors then pnet tensors.
fn batch_loss(
    model: &RaModel,
    features: Matrix,
    consts: &BatchConstants,
    cfg: &LossConfig,
    with_grad: bool,
) -> Result<(f64, Vec<Matrix>)> {
    let mut tape = Tape::new();
    let tl = model.tnet.register(&mut tape);
    let pl = model.pnet.register(&mut tape);
    let x = tape.constant(features);
    let alloc = alloc_on_tape(&mut tape, model, &tl, &pl, x)?;
    let nodes = build_loss(&mut tape, alloc.power, consts, cfg, &model.system)?;
    let value = tape.value(nodes.total).get(0, 0);
    if !with_grad || !value.is_finite() {
        return Ok((value, Vec::new()));
    }
    let mut grads = tape.backward(nodes.total)?;
    let grads = tl
        .iter()
        .chain(&pl)
        .map(|id| grads.take(*id).unwrap_or_else(|| Matrix::zeros(tape.value(*id).rows(), tape.value(*id).cols())))
        .collect();
    Ok((value, grads))
}

/// Trains a fresh model for `goal`. See [`train_with_progress`].
pub fn train(dataset: &Dataset, goal: Goal, arch: &ArchConfig, hyper: &TrainHyper) -> Result<TrainReport> {
    train_with_progress(dataset, goal, arch, hyper, |_| {})
}

/// Xavier-initialises both heads from `hyper.seed`, fits normalisation on
/// the leading training split and runs mini-batch Adam, reporting each
/// finished epoch to `progress`.
pub fn train_with_progress(
    dataset: &Dataset,
    goal: Goal,
    arch: &ArchConfig,
    hyper: &TrainHyper,
    mut progress: impl FnMut(&EpochStats),
) -> Result<TrainReport> {
    hyper.validate()?;
    let system = dataset.config().clone();
    arch.validate(&system)?;
    let n_train = hyper.train_count(dataset.len());
    if n_train == 0 {
        return Err(Error::InvalidArgument("training split is empty".into()));
    }
    let (train_set, val_set) = dataset.instances().split_at(n_train);

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let norm = NormStats::fit(train_set)?;
    let train_data = prepare(train_set, &norm, dataset)?;
    let val_data = if val_set.is_empty() {
        None
    } else {
        Some(prepare(val_set, &norm, dataset)?)
    };

    let mut model = RaModel::xavier_from(&system, arch, goal, norm, &mut rng)?;
    model.meta = TrainingMeta {
        seed: hyper.seed,
        data_seed: dataset.seed(),
        epochs: hyper.epochs,
        steps: 0,
        final_loss: None,
        hyper: hyper.clone(),
    };
    let cfg = LossConfig::new(goal, hyper, &system);
    let mut adam = {
        let params: Vec<&Matrix> = model.tnet.tensors().into_iter().chain(model.pnet.tensors()).collect();
        AdamState::new(
            AdamConfig {
                lr: hyper.lr,
                ..AdamConfig::default()
            },
            &params,
        )
    };

    let mut order: Vec<usize> = (0..n_train).collect();
    let mut history = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        adam.config.lr = lr_at_epoch(hyper, epoch);
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for idx in order.chunks(hyper.batch_size) {
            let features = train_data.features.select_rows(idx);
            let consts = train_data.consts.select_rows(idx);
            let (value, grads) = batch_loss(&model, features, &consts, &cfg, true)?;
            if !value.is_finite() || grads.iter().any(|g| !g.all_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    step: adam.steps() as usize,
                    loss: value,
                });
            }
            let grad_refs: Vec<&Matrix> = grads.iter().collect();
            let mut params: Vec<&mut Matrix> =
                model.tnet.tensors_mut().into_iter().chain(model.pnet.tensors_mut()).collect();
            adam.step(&mut params, &grad_refs)?;
            weighted += value * idx.len() as f64;
        }
        let val_loss = match &val_data {
            Some(v) => Some(batch_loss(&model, v.features.clone(), &v.consts, &cfg, false)?.0),
            None => None,
        };
        let stats = EpochStats {
            epoch,
            lr: adam.config.lr,
            train_loss: weighted / n_train as f64,
            val_loss,
            steps: adam.steps(),
        };
        progress(&stats);
        history.push(stats);
    }
    model.meta.steps = adam.steps();
    model.meta.final_loss = history.last().map(|s| s.train_loss);
    Ok(TrainReport { model, history })
}
