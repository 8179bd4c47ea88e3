use rand::Rng;
use rand_distr::StandardNormal;

use super::{SystemConfig, Topology};
use crate::error::{Error, Result};

/// Deterministic path gain `10^-coeff · d^-exp` (linear scale).
pub fn path_gain(distance_m: f64, config: &SystemConfig) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "path gain needs a positive distance, got {distance_m}"
        )));
    }
    Ok(10f64.powf(-config.pathloss_coeff_log10) * distance_m.powf(-config.pathloss_exp))
}

/// `|f|²` for `f ~ CSCG(0, 1)`: real and imaginary parts are independent
/// `N(0, 1/2)`, so the power is unit-mean exponential.
pub fn sample_fading_power<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    0.5 * (re * re + im * im)
}

/// One realisation of every linear power gain `h[m][tx][rx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelInstance {
    n_due: usize,
    n_channels: usize,
    /// Row-major `[m][tx][rx]`, `M × (N+1) × (N+1)`.
    gains: Vec<f64>,
    topology: Topology,
}

impl ChannelInstance {
    pub fn new(n_channels: usize, gains: Vec<f64>, topology: Topology) -> Result<Self> {
        let n_due = topology.n_due();
        let nodes = n_due + 1;
        if n_channels == 0 || gains.len() != n_channels * nodes * nodes {
            return Err(Error::Shape(format!(
                "expected {n_channels}×{nodes}×{nodes} gains, got {}",
                gains.len()
            )));
        }
        if let Some(g) = gains.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "channel gains must be positive and finite, found {g}"
            )));
        }
        Ok(Self {
            n_due,
            n_channels,
            gains,
            topology,
        })
    }

    pub fn n_due(&self) -> usize {
        self.n_due
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    /// Gain on channel `m` from transmitter `tx` to receiver `rx`
    /// (index 0 = CUE / BS, `i + 1` = DUE `i`).
    #[inline]
    pub fn gain(&self, m: usize, tx: usize, rx: usize) -> f64 {
        let n = self.n_due + 1;
        self.gains[(m * n + tx) * n + rx]
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    /// Checks that this instance belongs to a scenario with `config`'s shape.
    pub fn check_shape(&self, config: &SystemConfig) -> Result<()> {
        if self.n_due != config.n_due || self.n_channels != config.n_channels {
            return Err(Error::Shape(format!(
                "instance has N={}, M={} but configuration expects N={}, M={}",
                self.n_due, self.n_channels, config.n_due, config.n_channels
            )));
        }
        Ok(())
    }
}

/// Draws fading independently for every `(m, tx, rx)` in row-major order and
/// multiplies by the path gain of the link.
pub fn generate_instance<R: Rng + ?Sized>(
    topology: &Topology,
    config: &SystemConfig,
    rng: &mut R,
) -> Result<ChannelInstance> {
    if topology.n_due() != config.n_due {
        return Err(Error::Shape(format!(
            "topology has {} DUEs, configuration {}",
            topology.n_due(),
            config.n_due
        )));
    }
    let nodes = config.n_nodes();
    let mut path = Vec::with_capacity(nodes * nodes);
    for tx in 0..nodes {
        for rx in 0..nodes {
            path.push(path_gain(topology.distance(tx, rx), config)?);
        }
    }
    let mut gains = Vec::with_capacity(config.gain_count());
    for _ in 0..config.n_channels {
        for pg in &path {
            gains.push(pg * sample_fading_power(rng));
        }
    }
    ChannelInstance::new(config.n_channels, gains, topology.clone())
}
