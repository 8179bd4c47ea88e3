use serde::{Deserialize, Serialize};

use super::features::preprocess_batch;
use super::model::{alloc_on_tape, RaModel};
use super::train::TrainHyper;
use crate::chanmodel::{ChannelInstance, SystemConfig};
use crate::error::{Error, Result};
use crate::linkmetrics::Goal;
use crate::neuralcore::{grad_check, GradCheckReport, Matrix, NodeId, Tape};

/// Energy efficiency enters the loss as `EE_i / EE_LOSS_SCALE` so that its
/// gradients have the same order of magnitude as the spectral-efficiency
/// loss.
pub const EE_LOSS_SCALE: f64 = 1e8;

/// Argument of the QoS penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QosPenalty {
    /// `[R_T − SE_i]^+`: penalises falling short of the threshold.
    #[default]
    Violation,
    /// `[SE_i − R_T]^+`, the sign as printed in the original loss
    /// expression. Penalises *meeting* the threshold.
    Literal,
}

/// Unit of the interference-penalty argument `[I^k − I_T]^+ / s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterferenceScale {
    /// `s = I_T`: the excess is measured relative to the threshold.
    #[default]
    Threshold,
    /// `s = 1 W`: raw Watts. With `I_T` around `1e-9 W` the penalty is then
    /// numerically negligible for any reasonable `λ₁`.
    Watts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub goal: Goal,
    pub lambda_interference: f64,
    pub lambda_qos: f64,
    pub qos_penalty: QosPenalty,
    pub interference_scale_w: f64,
    pub ee_scale: f64,
}

impl LossConfig {
    pub fn new(goal: Goal, hyper: &TrainHyper, system: &SystemConfig) -> Self {
        Self {
            goal,
            lambda_interference: hyper.lambda1,
            lambda_qos: hyper.lambda2,
            qos_penalty: hyper.qos_penalty,
            interference_scale_w: match hyper.interference_scale {
                InterferenceScale::Threshold => system.i_thresh_w(),
                InterferenceScale::Watts => 1.0,
            },
            ee_scale: EE_LOSS_SCALE,
        }
    }
}

/// Per-sample channel coefficients arranged to match the column layouts
/// used inside the loss graph.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchConstants {
    n_due: usize,
    n_channels: usize,
    /// `B × N·M`, column `(i, m)`: `h[m][i][i]`.
    signal: Matrix,
    /// `B × N·M·N`, column `(i, m, j)`: `h[m][j][i]` for `j ≠ i`, else 0.
    cross: Matrix,
    /// `B × N·M`, column `(i, m)`: `N0·B + (P_cue/M)·h[m][0][i]`.
    background: Matrix,
    /// `B × M·N`, column `(m, i)`: `h[m][i][BS]`.
    to_bs: Matrix,
}

impl BatchConstants {
    pub fn from_instances<'a>(
        instances: impl IntoIterator<Item = &'a ChannelInstance>,
        system: &SystemConfig,
    ) -> Result<Self> {
        let (n, m) = (system.n_due, system.n_channels);
        let noise = system.noise_power_w();
        let cue = system.cue_power_per_channel_w();
        let (mut signal, mut cross, mut background, mut to_bs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut rows = 0;
        for inst in instances {
            inst.check_shape(system)?;
            for i in 0..n {
                for ch in 0..m {
                    signal.push(inst.gain(ch, i + 1, i + 1));
                    background.push(noise + cue * inst.gain(ch, 0, i + 1));
                    for j in 0..n {
                        cross.push(if j == i { 0.0 } else { inst.gain(ch, j + 1, i + 1) });
                    }
                }
            }
            for ch in 0..m {
                for i in 0..n {
                    to_bs.push(inst.gain(ch, i + 1, 0));
                }
            }
            rows += 1;
        }
        if rows == 0 {
            return Err(Error::InvalidArgument("loss batch is empty".into()));
        }
        Ok(Self {
            n_due: n,
            n_channels: m,
            signal: Matrix::from_vec(rows, n * m, signal)?,
            cross: Matrix::from_vec(rows, n * m * n, cross)?,
            background: Matrix::from_vec(rows, n * m, background)?,
            to_bs: Matrix::from_vec(rows, m * n, to_bs)?,
        })
    }

    pub fn rows(&self) -> usize {
        self.signal.rows()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            n_due: self.n_due,
            n_channels: self.n_channels,
            signal: self.signal.select_rows(idx),
            cross: self.cross.select_rows(idx),
            background: self.background.select_rows(idx),
            to_bs: self.to_bs.select_rows(idx),
        }
    }
}

/// Handles to the interesting nodes of a loss graph.
#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    /// `1 × 1` batch mean of the full loss.
    pub total: NodeId,
    /// `B × 1` objective term per sample.
    pub objective: NodeId,
    /// `B × 1` weighted interference penalty per sample.
    pub penalty_interference: NodeId,
    /// `B × 1` weighted QoS penalty per sample.
    pub penalty_qos: NodeId,
    /// `B × N` spectral efficiency.
    pub se: NodeId,
    /// `B × M` interference at the base station, Watts.
    pub interference: NodeId,
}

/// Records the loss for the `B × N·M` power node `power` (DUE-major).
pub(crate) fn build_loss(
    tape: &mut Tape,
    power: NodeId,
    consts: &BatchConstants,
    cfg: &LossConfig,
    system: &SystemConfig,
) -> Result<LossNodes> {
    let (n, m) = (consts.n_due, consts.n_channels);
    if tape.value(power).shape() != (consts.rows(), n * m) {
        return Err(Error::Shape("power node does not match the batch constants".into()));
    }

    let signal_gain = tape.constant(consts.signal.clone());
    let cross_gain = tape.constant(consts.cross.clone());
    let background = tape.constant(consts.background.clone());
    let bs_gain = tape.constant(consts.to_bs.clone());

    // SINR per (i, m)
    let signal = tape.mul(power, signal_gain)?;
    let cross_cols = (0..n)
        .flat_map(|_i| (0..m).flat_map(move |ch| (0..n).map(move |j| j * m + ch)))
        .collect();
    let others = tape.gather(power, cross_cols)?;
    let others = tape.mul(others, cross_gain)?;
    let interference_rx = tape.group_sum(others, n)?;
    let denom = tape.add(interference_rx, background)?;
    let sinr = tape.div(signal, denom)?;
    let one_plus = tape.add_scalar(sinr, 1.0);
    let ln_rate = tape.log(one_plus, f64::MIN_POSITIVE);
    let rate = tape.scale(ln_rate, std::f64::consts::LOG2_E);
    let se = tape.group_sum(rate, m)?;

    // Interference at the BS per channel
    let bs_cols = (0..m).flat_map(|ch| (0..n).map(move |i| i * m + ch)).collect();
    let by_channel = tape.gather(power, bs_cols)?;
    let by_channel = tape.mul(by_channel, bs_gain)?;
    let interference = tape.group_sum(by_channel, n)?;

    let excess = tape.add_scalar(interference, -system.i_thresh_w());
    let excess = tape.scale(excess, 1.0 / cfg.interference_scale_w);
    let excess = tape.pos(excess);
    let excess = tape.tanh(excess);
    let excess = tape.group_sum(excess, m)?;
    let penalty_interference = tape.scale(excess, cfg.lambda_interference);

    let shortfall = match cfg.qos_penalty {
        QosPenalty::Violation => {
            let neg = tape.scale(se, -1.0);
            tape.add_scalar(neg, system.r_thresh)
        }
        QosPenalty::Literal => tape.add_scalar(se, -system.r_thresh),
    };
    let shortfall = tape.pos(shortfall);
    let shortfall = tape.tanh(shortfall);
    let shortfall = tape.group_sum(shortfall, n)?;
    let penalty_qos = tape.scale(shortfall, cfg.lambda_qos);

    let objective = match cfg.goal {
        Goal::MaxSe => {
            let s = tape.group_sum(se, n)?;
            tape.scale(s, -1.0)
        }
        Goal::MaxEe => {
            let per_due = tape.group_sum(power, m)?;
            let denom = tape.add_scalar(per_due, system.p_circuit_w());
            let bits = tape.scale(se, system.bandwidth_hz / cfg.ee_scale);
            let ee = tape.div(bits, denom)?;
            let s = tape.group_sum(ee, n)?;
            tape.scale(s, -1.0)
        }
        Goal::MinPw => tape.group_sum(power, n * m)?,
    };

    let total = tape.add(objective, penalty_interference)?;
    let total = tape.add(total, penalty_qos)?;
    let total = tape.mean(total);
    Ok(LossNodes {
        total,
        objective,
        penalty_interference,
        penalty_qos,
        se,
        interference,
    })
}

/// A recorded loss graph together with the parameter leaves.
pub struct LossGraph {
    pub tape: Tape,
    pub nodes: LossNodes,
    pub tnet_leaves: Vec<NodeId>,
    pub pnet_leaves: Vec<NodeId>,
}

impl LossGraph {
    pub fn value(&self) -> f64 {
        self.tape.value(self.nodes.total).get(0, 0)
    }
}

/// Batch-mean loss of `model` for `goal` on `batch`, recorded on a fresh
/// tape so it can be differentiated with respect to both heads.
pub fn loss(goal: Goal, batch: &[ChannelInstance], model: &RaModel, hyper: &TrainHyper) -> Result<LossGraph> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("loss batch is empty".into()));
    }
    let features = preprocess_batch(batch, &model.norm)?;
    let consts = BatchConstants::from_instances(batch, &model.system)?;
    let cfg = LossConfig::new(goal, hyper, &model.system);
    let mut tape = Tape::new();
    let tnet_leaves = model.tnet.register(&mut tape);
    let pnet_leaves = model.pnet.register(&mut tape);
    let x = tape.constant(features);
    let alloc = alloc_on_tape(&mut tape, model, &tnet_leaves, &pnet_leaves, x)?;
    let nodes = build_loss(&mut tape, alloc.power, &consts, &cfg, &model.system)?;
    Ok(LossGraph {
        tape,
        nodes,
        tnet_leaves,
        pnet_leaves,
    })
}

/// Compares reverse-mode gradients of the full training loss, with
/// respect to every weight of both heads, against central finite
/// differences.
pub fn loss_grad_check(
    goal: Goal,
    batch: &[ChannelInstance],
    model: &RaModel,
    hyper: &TrainHyper,
    tolerance: f64,
) -> Result<GradCheckReport> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("loss batch is empty".into()));
    }
    let features = preprocess_batch(batch, &model.norm)?;
    let consts = BatchConstants::from_instances(batch, &model.system)?;
    let cfg = LossConfig::new(goal, hyper, &model.system);
    let n_t = model.tnet.tensors().len();
    let params: Vec<Matrix> = model
        .tnet
        .tensors()
        .into_iter()
        .chain(model.pnet.tensors())
        .cloned()
        .collect();
    let build = |tape: &mut Tape, leaves: &[NodeId]| {
        let x = tape.constant(features.clone());
        let nodes = alloc_on_tape(tape, model, &leaves[..n_t], &leaves[n_t..], x)?;
        Ok(build_loss(tape, nodes.power, &consts, &cfg, &model.system)?.total)
    };
    grad_check(&params, build, tolerance)
}
