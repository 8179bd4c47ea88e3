use serde::{Deserialize, Serialize};

use crate::chanmodel::{ChannelInstance, SystemConfig};
use crate::error::Result;
use crate::linkmetrics::{check_constraints, objective_from_report, PowerAllocation};
use crate::oracle::OracleSolution;

/// DNN and oracle outcome on one test instance for one goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub oracle_feasible: bool,
    pub dnn_feasible: bool,
    pub dnn_objective: f64,
    pub oracle_objective: f64,
    /// `Σ_i SE_i` of the DNN allocation.
    pub dnn_se: f64,
    /// `Σ_i EE_i` of the DNN allocation.
    pub dnn_ee: f64,
    /// `Σ_{i,m} p[i][m]` of the DNN allocation.
    pub dnn_power: f64,
    pub oracle_se: f64,
    pub oracle_ee: f64,
    pub oracle_power: f64,
    /// Largest per-channel interference excess, Watts.
    pub violation_interference_w: f64,
    /// Largest per-DUE SE shortfall, bps/Hz.
    pub violation_qos: f64,
}

fn sum(x: &[f64]) -> f64 {
    x.iter().sum()
}

impl InstanceRecord {
    pub fn new(
        instance: &ChannelInstance,
        alloc: &PowerAllocation,
        oracle: &OracleSolution,
        config: &SystemConfig,
    ) -> Result<Self> {
        let dnn = check_constraints(instance, alloc, config)?;
        let oa = oracle.alloc();
        let orc = check_constraints(instance, oa, config)?;
        Ok(Self {
            oracle_feasible: oracle.feasible,
            dnn_feasible: dnn.feasible,
            dnn_objective: objective_from_report(oracle.goal, &dnn, alloc),
            oracle_objective: oracle.objective,
            dnn_se: sum(&dnn.se_per_due),
            dnn_ee: sum(&dnn.ee_per_due),
            dnn_power: sum(alloc.as_slice()),
            oracle_se: sum(&orc.se_per_due),
            oracle_ee: sum(&orc.ee_per_due),
            oracle_power: sum(oa.as_slice()),
            violation_interference_w: dnn.violation_interference_w,
            violation_qos: dnn.violation_qos,
        })
    }
}

/// Fraction of oracle-feasible instances on which the DNN allocation breaks
/// the interference or QoS constraint. `None` when the oracle found no
/// feasible instance.
pub fn outage_rate(records: &[InstanceRecord]) -> Option<f64> {
    let eligible: Vec<&InstanceRecord> = records.iter().filter(|r| r.oracle_feasible).collect();
    if eligible.is_empty() {
        return None;
    }
    let out = eligible.iter().filter(|r| !r.dnn_feasible).count();
    Some(out as f64 / eligible.len() as f64)
}

/// Mean violation magnitudes over the oracle-feasible instances that
/// violate the respective constraint.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ViolationSummary {
    /// Mean of `excess_I / I_T + shortfall / R_T` over outage instances.
    pub combined: f64,
    pub interference_w: f64,
    pub qos: f64,
}

pub fn violation_summary(records: &[InstanceRecord], config: &SystemConfig) -> ViolationSummary {
    let mean = |xs: Vec<f64>| if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
    let eligible = || records.iter().filter(|r| r.oracle_feasible);
    let i_t = config.i_thresh_w();
    let r_t = config.r_thresh;
    ViolationSummary {
        combined: mean(
            eligible()
                .filter(|r| !r.dnn_feasible)
                .map(|r| r.violation_interference_w / i_t + if r_t > 0.0 { r.violation_qos / r_t } else { 0.0 })
                .collect(),
        ),
        interference_w: mean(
            eligible()
                .filter(|r| r.violation_interference_w > 0.0)
                .map(|r| r.violation_interference_w)
                .collect(),
        ),
        qos: mean(eligible().filter(|r| r.violation_qos > 0.0).map(|r| r.violation_qos).collect()),
    }
}

/// Median and 95th percentile (nearest rank) of `xs`.
pub fn median_p95(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
    let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
    Some((median, v[rank - 1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(oracle_feasible: bool, dnn_feasible: bool) -> InstanceRecord {
        InstanceRecord {
            oracle_feasible,
            dnn_feasible,
            dnn_objective: 1.0,
            oracle_objective: 1.0,
            dnn_se: 1.0,
            dnn_ee: 1.0,
            dnn_power: 1.0,
            oracle_se: 1.0,
            oracle_ee: 1.0,
            oracle_power: 1.0,
            violation_interference_w: 0.0,
            violation_qos: if dnn_feasible { 0.0 } else { 0.2 },
        }
    }

    #[test]
    fn outage_counting_convention() {
        assert_eq!(outage_rate(&vec![rec(true, true); 5]), Some(0.0));
        let mut r = vec![rec(true, true); 47];
        r.push(rec(true, false));
        r.push(rec(false, false));
        r.push(rec(false, true));
        assert_eq!(r.len(), 50);
        assert_eq!(outage_rate(&r), Some(1.0 / 48.0));
        assert_eq!(outage_rate(&[rec(false, true)]), None);
    }

    #[test]
    fn violation_means() {
        let cfg = SystemConfig::default();
        let mut r = vec![rec(true, true), rec(true, false), rec(false, false)];
        r[1].violation_interference_w = cfg.i_thresh_w() * 0.5;
        let v = violation_summary(&r, &cfg);
        assert!((v.qos - 0.2).abs() < 1e-15);
        assert!((v.interference_w / cfg.i_thresh_w() - 0.5).abs() < 1e-12);
        assert!((v.combined - (0.5 + 0.2 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn percentiles() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(median_p95(&xs), Some((50.5, 95.0)));
        assert_eq!(median_p95(&[3.0]), Some((3.0, 3.0)));
        assert_eq!(median_p95(&[]), None);
    }

    proptest! {
        #[test]
        fn outage_is_a_rate(flags in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..200)) {
            let r: Vec<InstanceRecord> = flags.iter().map(|(o, d)| rec(*o, *d)).collect();
            if let Some(x) = outage_rate(&r) {
                prop_assert!((0.0..=1.0).contains(&x));
            } else {
                prop_assert!(flags.iter().all(|(o, _)| !o));
            }
        }
    }
}
