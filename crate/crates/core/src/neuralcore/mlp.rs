use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Matrix, NodeId, Tape};
use crate::error::{Error, Result};

/// Half-width of the Xavier (Glorot) uniform range, `√(6 / (fan_in + fan_out))`.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// `fan_in × fan_out` weights drawn uniformly on `±xavier_bound`, row-major.
pub fn xavier_init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Matrix {
    assert!(fan_in >= 1 && fan_out >= 1, "fan_in and fan_out must be positive");
    let bound = xavier_bound(fan_in, fan_out);
    let data = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..=bound)).collect();
    Matrix::from_vec(fan_in, fan_out, data).expect("sized above")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// `fan_in × fan_out`.
    pub weight: Matrix,
    /// `1 × fan_out`.
    pub bias: Matrix,
}

/// A stack of dense layers. Hidden layers use ReLU; the last layer is
/// linear and its output is left to the caller's head.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    layers: Vec<DenseParams>,
}

/// Serialised form: nested decimal arrays.
#[derive(Serialize, Deserialize)]
struct LayerRepr {
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl Serialize for ParamSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let reprs: Vec<LayerRepr> = self
            .layers
            .iter()
            .map(|l| LayerRepr {
                weight: l.weight.to_rows(),
                bias: l.bias.as_slice().to_vec(),
            })
            .collect();
        reprs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ParamSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let reprs = Vec::<LayerRepr>::deserialize(d)?;
        let layers = reprs
            .into_iter()
            .map(|r| {
                let weight = Matrix::from_rows(&r.weight).map_err(serde::de::Error::custom)?;
                let bias = Matrix::from_vec(1, r.bias.len(), r.bias).map_err(serde::de::Error::custom)?;
                Ok(DenseParams { weight, bias })
            })
            .collect::<std::result::Result<Vec<_>, D::Error>>()?;
        ParamSet::from_layers(layers).map_err(serde::de::Error::custom)
    }
}

impl ParamSet {
    /// Xavier weights and zero biases for layer widths `dims[0] → … → dims[last]`.
    pub fn xavier<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("invalid layer widths {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .map(|w| DenseParams {
                weight: xavier_init(w[0], w[1], rng),
                bias: Matrix::zeros(1, w[1]),
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<DenseParams>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("a parameter set needs at least one layer".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.rows() != 1 || l.bias.cols() != l.weight.cols() {
                return Err(Error::Shape(format!("layer {k}: bias does not match weight columns")));
            }
            if k > 0 && layers[k - 1].weight.cols() != l.weight.rows() {
                return Err(Error::Shape(format!(
                    "layer {k} expects {} inputs, previous layer emits {}",
                    l.weight.rows(),
                    layers[k - 1].weight.cols()
                )));
            }
            if !(l.weight.all_finite() && l.bias.all_finite()) {
                return Err(Error::InvalidArgument(format!("layer {k} has non-finite values")));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DenseParams] {
        &self.layers
    }

    /// Layer widths, input first.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].weight.rows()];
        d.extend(self.layers.iter().map(|l| l.weight.cols()));
        d
    }

    /// Parameter tensors in the order weight₀, bias₀, weight₁, …
    pub fn tensors(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Records every tensor as a tape leaf, in [`ParamSet::tensors`] order.
    pub fn register(&self, tape: &mut Tape) -> Vec<NodeId> {
        self.tensors().into_iter().map(|t| tape.leaf(t.clone())).collect()
    }

    /// Forward pass on the tape using leaves from [`ParamSet::register`].
    /// Returns the pre-activation of the last layer.
    pub fn forward_tape(&self, tape: &mut Tape, leaves: &[NodeId], input: NodeId) -> Result<NodeId> {
        if leaves.len() != 2 * self.layers.len() {
            return Err(Error::Shape("leaf count does not match the parameter set".into()));
        }
        let last = self.layers.len() - 1;
        let mut h = input;
        for (k, pair) in leaves.chunks_exact(2).enumerate() {
            let z = tape.matmul(h, pair[0])?;
            let z = tape.add_row(z, pair[1])?;
            h = if k < last { tape.relu(z) } else { z };
        }
        Ok(h)
    }

    /// Tape-free forward pass; same arithmetic as [`ParamSet::forward_tape`].
    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        let last = self.layers.len() - 1;
        let mut h = input.clone();
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = h.matmul(&l.weight)?;
            for r in 0..z.rows() {
                for (o, b) in z.row_mut(r).iter_mut().zip(l.bias.as_slice()) {
                    *o += b;
                }
            }
            if k < last {
                z.as_mut_slice().iter_mut().for_each(|x| *x = x.max(0.0));
            }
            h = z;
        }
        Ok(h)
    }
}
