use serde::{Deserialize, Serialize};

use crate::chanmodel::ChannelInstance;
use crate::error::{Error, Result};
use crate::neuralcore::Matrix;

/// Lower bound applied to per-feature standard deviations.
pub const STD_FLOOR: f64 = 1e-9;

/// Per-feature mean and standard deviation of the dB-scale gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// `10·log10(h)` for every gain, in `[m][tx][rx]` order.
pub fn gains_db(instance: &ChannelInstance) -> Result<Vec<f64>> {
    instance
        .gains()
        .iter()
        .map(|g| {
            if *g > 0.0 {
                Ok(10.0 * g.log10())
            } else {
                Err(Error::InvalidArgument(format!("gain {g} is not positive")))
            }
        })
        .collect()
}

impl NormStats {
    /// Population statistics over `instances`.
    pub fn fit<'a>(instances: impl IntoIterator<Item = &'a ChannelInstance>) -> Result<Self> {
        let rows = instances.into_iter().map(gains_db).collect::<Result<Vec<_>>>()?;
        let Some(first) = rows.first() else {
            return Err(Error::InvalidArgument("cannot fit normalisation on zero instances".into()));
        };
        let dim = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in &rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in &rows {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self, input_dim: usize) -> Result<()> {
        if self.mean.len() != input_dim || self.std.len() != input_dim {
            return Err(Error::Shape(format!(
                "normalisation has {}/{} entries, network expects {input_dim}",
                self.mean.len(),
                self.std.len()
            )));
        }
        if self.std.iter().any(|s| !(*s >= STD_FLOOR)) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("normalisation statistics out of range".into()));
        }
        Ok(())
    }
}

/// `(10·log10 h_k − mean_k) / std_k`, flattened in `[m][tx][rx]` order.
pub fn preprocess(instance: &ChannelInstance, norm: &NormStats) -> Result<Vec<f64>> {
    let db = gains_db(instance)?;
    if db.len() != norm.dim() {
        return Err(Error::Shape(format!(
            "instance has {} gains, normalisation expects {}",
            db.len(),
            norm.dim()
        )));
    }
    Ok(db
        .iter()
        .zip(&norm.mean)
        .zip(&norm.std)
        .map(|((x, m), s)| (x - m) / s)
        .collect())
}

/// One feature row per instance.
pub fn preprocess_batch<'a>(
    instances: impl IntoIterator<Item = &'a ChannelInstance>,
    norm: &NormStats,
) -> Result<Matrix> {
    let mut data = Vec::new();
    let mut rows = 0;
    for inst in instances {
        data.extend(preprocess(inst, norm)?);
        rows += 1;
    }
    Matrix::from_vec(rows, norm.dim(), data)
}
