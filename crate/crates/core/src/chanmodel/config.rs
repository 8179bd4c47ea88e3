use serde::{Deserialize, Serialize};

use super::dbm_to_watt;
use crate::error::{Error, Result};

/// Physical and scenario constants shared by every module.
///
/// Powers are kept in dBm here; the `*_w` accessors give linear Watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Number of D2D pairs.
    pub n_due: usize,
    /// Number of cellular channels shared with the D2D pairs.
    pub n_channels: usize,
    /// Side of the square deployment area, meters.
    pub area_d: f64,
    /// Maximum total transmit power of a DUE, dBm.
    pub p_max_dbm: f64,
    /// Circuit power added to the transmit power in energy efficiency, dBm.
    pub p_circuit_dbm: f64,
    /// Bandwidth of each channel, Hz.
    pub bandwidth_hz: f64,
    pub noise_density_dbm_hz: f64,
    /// Per-channel cap on aggregate DUE interference at the base station, dBm.
    pub i_thresh_dbm: f64,
    /// Minimum spectral efficiency per DUE (summed over channels), bps/Hz.
    pub r_thresh: f64,
    /// Cellular user transmit power, dBm, split equally over the channels.
    pub p_cue_dbm: f64,
    pub pair_dist_min_m: f64,
    pub pair_dist_max_m: f64,
    pub pathloss_coeff_log10: f64,
    pub pathloss_exp: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n_due: 2,
            n_channels: 2,
            area_d: 500.0,
            p_max_dbm: 23.0,
            p_circuit_dbm: 23.0,
            bandwidth_hz: 10e6,
            noise_density_dbm_hz: -173.0,
            i_thresh_dbm: -55.0,
            r_thresh: 3.0,
            p_cue_dbm: 23.0,
            pair_dist_min_m: 2.0,
            pair_dist_max_m: 30.0,
            pathloss_coeff_log10: 3.453,
            pathloss_exp: 3.8,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_due < 1 {
            return bad("n_due must be at least 1".into());
        }
        if self.n_channels < 1 {
            return bad("n_channels must be at least 1".into());
        }
        if !(self.area_d.is_finite() && self.area_d > 0.0) {
            return bad(format!("area_d must be positive, got {}", self.area_d));
        }
        if !(self.pair_dist_min_m >= 0.0 && self.pair_dist_min_m < self.pair_dist_max_m) {
            return bad(format!(
                "pair distance bounds must satisfy 0 <= min < max, got [{}, {}]",
                self.pair_dist_min_m, self.pair_dist_max_m
            ));
        }
        if self.pair_dist_max_m > self.area_d {
            return bad(format!(
                "pair_dist_max_m ({}) exceeds area side ({})",
                self.pair_dist_max_m, self.area_d
            ));
        }
        for (name, v) in [
            ("p_max_dbm", self.p_max_dbm),
            ("p_circuit_dbm", self.p_circuit_dbm),
            ("noise_density_dbm_hz", self.noise_density_dbm_hz),
            ("i_thresh_dbm", self.i_thresh_dbm),
            ("p_cue_dbm", self.p_cue_dbm),
            ("pathloss_coeff_log10", self.pathloss_coeff_log10),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            return bad("bandwidth_hz must be positive".into());
        }
        if !(self.r_thresh.is_finite() && self.r_thresh >= 0.0) {
            return bad("r_thresh must be non-negative".into());
        }
        if !(self.pathloss_exp.is_finite() && self.pathloss_exp > 0.0) {
            return bad("pathloss_exp must be positive".into());
        }
        Ok(())
    }

    /// Same scenario on a different area size.
    pub fn with_area(&self, area_d: f64) -> Self {
        Self {
            area_d,
            ..self.clone()
        }
    }

    pub fn p_max_w(&self) -> f64 {
        dbm_to_watt(self.p_max_dbm)
    }

    pub fn p_circuit_w(&self) -> f64 {
        dbm_to_watt(self.p_circuit_dbm)
    }

    pub fn i_thresh_w(&self) -> f64 {
        dbm_to_watt(self.i_thresh_dbm)
    }

    /// Noise power over one channel, `N0 · B`, in Watts.
    pub fn noise_power_w(&self) -> f64 {
        dbm_to_watt(self.noise_density_dbm_hz + 10.0 * self.bandwidth_hz.log10())
    }

    /// CUE transmit power on each channel, Watts.
    pub fn cue_power_per_channel_w(&self) -> f64 {
        dbm_to_watt(self.p_cue_dbm) / self.n_channels as f64
    }

    /// Number of transmitters (and receivers): the CUE plus every DUE.
    pub fn n_nodes(&self) -> usize {
        self.n_due + 1
    }

    /// Length of a flattened gain array, `M · (N+1)²`.
    pub fn gain_count(&self) -> usize {
        self.n_channels * self.n_nodes() * self.n_nodes()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = SystemConfig::default();
        c.validate().unwrap();
        assert_eq!(c.gain_count(), 18);
        assert!((c.noise_power_w() / 5.0119e-14 - 1.0).abs() < 1e-4);
        assert!((c.cue_power_per_channel_w() - 0.199_526_231_5 / 2.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_inconsistent_radii() {
        let c = SystemConfig {
            area_d: 20.0,
            ..SystemConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = SystemConfig {
            pair_dist_min_m: 30.0,
            ..SystemConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn rejects_empty_network() {
        let c = SystemConfig {
            n_channels: 0,
            ..SystemConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
