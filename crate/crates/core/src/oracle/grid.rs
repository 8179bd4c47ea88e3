use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chanmodel::SystemConfig;
use crate::error::{Error, Result};

/// Discretisation of one DUE's decision: `k_total` total-power levels
/// `0, P_T/(k_total−1), …, P_T` times the points of the `M`-simplex with
/// resolution `1/(k_split−1)`.
/// Serialised as the string `"<k_total>x<k_split>"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSpec {
    pub k_total: usize,
    pub k_split: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            k_total: 51,
            k_split: 51,
        }
    }
}

impl GridSpec {
    pub fn new(k_total: usize, k_split: usize) -> Result<Self> {
        let spec = Self { k_total, k_split };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_total < 2 || self.k_split < 2 {
            return Err(Error::Config(format!("grid {self} needs k_total >= 2 and k_split >= 2")));
        }
        Ok(())
    }

    /// Number of simplex points, `C(k_split − 1 + M − 1, M − 1)`.
    pub fn simplex_points(&self, n_channels: usize) -> u128 {
        binomial((self.k_split - 1 + n_channels - 1) as u128, (n_channels - 1) as u128)
    }

    pub fn candidates_per_due(&self, n_channels: usize) -> u128 {
        self.k_total as u128 * self.simplex_points(n_channels)
    }

    /// Joint candidate count `(k_total · simplex_points)^N`, saturating.
    pub fn joint_count(&self, n_due: usize, n_channels: usize) -> u128 {
        let per = self.candidates_per_due(n_channels);
        (0..n_due).fold(1u128, |acc, _| acc.saturating_mul(per))
    }

    /// Largest integer product `t · s_m`; powers are `P_T · (t·s_m) / scale`.
    pub(crate) fn scale(&self) -> usize {
        (self.k_total - 1) * (self.k_split - 1)
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.k_total, self.k_split)
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    /// Parses `"<k_total>x<k_split>"`, e.g. `"51x51"`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("grid {s:?} is not of the form <k_total>x<k_split>"));
        let (a, b) = s.trim().split_once(['x', 'X']).ok_or_else(bad)?;
        let k_total = a.trim().parse().map_err(|_| bad())?;
        let k_split = b.trim().parse().map_err(|_| bad())?;
        Self::new(k_total, k_split)
    }
}

impl Serialize for GridSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GridSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// One per-DUE grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    /// Total-power level index in `0..k_total`.
    pub total_level: usize,
    /// Simplex composition of `k_split − 1` into `M` parts.
    pub split: Vec<usize>,
    /// Per-channel powers in Watts.
    pub powers: Vec<f64>,
}

/// Compositions of `total` into `parts` non-negative parts in
/// lexicographically ascending order.
pub(crate) fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, parts: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for first in 0..=left {
            cur.push(first);
            rec(left - first, parts - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(total, parts, &mut Vec::with_capacity(parts), &mut out);
    out
}

/// Power of integer level `u = t·s` on the grid.
#[inline]
pub(crate) fn level_power(p_max_w: f64, u: usize, scale: usize) -> f64 {
    p_max_w * (u as f64) / (scale as f64)
}

/// Per-DUE candidates ordered by total level, then split composition.
pub fn enumerate_candidates(spec: &GridSpec, config: &SystemConfig) -> Result<Vec<Candidate>> {
    spec.validate()?;
    config.validate()?;
    let splits = compositions(spec.k_split - 1, config.n_channels);
    let p_max = config.p_max_w();
    let scale = spec.scale();
    let mut out = Vec::with_capacity(spec.k_total * splits.len());
    for t in 0..spec.k_total {
        for s in &splits {
            out.push(Candidate {
                total_level: t,
                split: s.clone(),
                powers: s.iter().map(|x| level_power(p_max, t * x, scale)).collect(),
            });
        }
    }
    Ok(out)
}
