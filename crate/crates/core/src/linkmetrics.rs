//! Link-level physics shared by the loss, the oracle and the evaluator.
//!
//! Channel `m` of DUE `i` sees
//!
//! ```text
//! SINR = p[i][m]·h[m][i][i] / (N0·B + Σ_{j≠i} p[j][m]·h[m][j][i] + (P_cue/M)·h[m][0][i])
//! ```
//!
//! where gains use node indices (DUE `i` is node `i + 1`). Spectral
//! efficiency is summed over channels per DUE; energy efficiency is
//! `B·SE_i / (Σ_m p[i][m] + P_c)`. Interference at the base station is
//! capped per channel.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chanmodel::{ChannelInstance, SystemConfig};
use crate::error::{Error, Result};

/// Transmit powers `p[i][m]` in Watts, DUE-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    n_due: usize,
    n_channels: usize,
    p: Vec<f64>,
}

impl PowerAllocation {
    pub fn zeros(n_due: usize, n_channels: usize) -> Self {
        Self {
            n_due,
            n_channels,
            p: vec![0.0; n_due * n_channels],
        }
    }

    pub fn from_flat(n_due: usize, n_channels: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != n_due * n_channels {
            return Err(Error::Shape(format!(
                "allocation for {n_due}×{n_channels} needs {} powers, got {}",
                n_due * n_channels,
                p.len()
            )));
        }
        if let Some(x) = p.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::InvalidArgument(format!("powers must be finite and >= 0, found {x}")));
        }
        Ok(Self { n_due, n_channels, p })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Shape("ragged allocation rows".into()));
        }
        Self::from_flat(rows.len(), m, rows.concat())
    }

    pub fn n_due(&self) -> usize {
        self.n_due
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    #[inline]
    pub fn get(&self, due: usize, channel: usize) -> f64 {
        self.p[due * self.n_channels + channel]
    }

    pub fn row(&self, due: usize) -> &[f64] {
        &self.p[due * self.n_channels..(due + 1) * self.n_channels]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    /// Total transmit power of one DUE, summed over channels in order.
    pub fn total(&self, due: usize) -> f64 {
        let mut acc = 0.0;
        for x in self.row(due) {
            acc += x;
        }
        acc
    }

    /// Checks the transmit power budget with `1e-9` relative slack.
    pub fn satisfies_power_budget(&self, p_max_w: f64) -> bool {
        (0..self.n_due).all(|i| self.total(i) <= p_max_w * (1.0 + 1e-9)) && self.p.iter().all(|x| *x >= 0.0)
    }

    fn check_against(&self, instance: &ChannelInstance) -> Result<()> {
        if self.n_due != instance.n_due() || self.n_channels != instance.n_channels() {
            return Err(Error::Shape(format!(
                "allocation is {}×{} but instance has N={}, M={}",
                self.n_due,
                self.n_channels,
                instance.n_due(),
                instance.n_channels()
            )));
        }
        Ok(())
    }
}

/// Optimisation target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Goal {
    MaxSe,
    MaxEe,
    MinPw,
}

impl Goal {
    pub const ALL: [Goal; 3] = [Goal::MaxSe, Goal::MaxEe, Goal::MinPw];

    pub fn as_str(self) -> &'static str {
        match self {
            Goal::MaxSe => "max-se",
            Goal::MaxEe => "max-ee",
            Goal::MinPw => "min-pw",
        }
    }

    pub fn maximize(self) -> bool {
        !matches!(self, Goal::MinPw)
    }

    /// Whether objective `a` is strictly better than `b` for this goal.
    #[inline]
    pub fn better(self, a: f64, b: f64) -> bool {
        if self.maximize() {
            a > b
        } else {
            a < b
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Goal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max-se" => Ok(Goal::MaxSe),
            "max-ee" => Ok(Goal::MaxEe),
            "min-pw" => Ok(Goal::MinPw),
            other => Err(Error::UnknownGoal(other.to_string())),
        }
    }
}

/// Everything the evaluator needs to know about one allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkReport {
    pub se_per_due: Vec<f64>,
    pub ee_per_due: Vec<f64>,
    pub cue_interference_w: Vec<f64>,
    pub total_power_w: Vec<f64>,
    pub feasible: bool,
    /// `max_k [I^k - I_T]^+`, Watts.
    pub violation_interference_w: f64,
    /// `max_i [R_T - SE_i]^+`, bps/Hz.
    pub violation_qos: f64,
}

/// SINR of DUE `due` on `channel`.
pub fn sinr(
    instance: &ChannelInstance,
    alloc: &PowerAllocation,
    due: usize,
    channel: usize,
    config: &SystemConfig,
) -> f64 {
    let rx = due + 1;
    let mut interference = 0.0;
    for j in 0..alloc.n_due() {
        if j != due {
            interference += alloc.get(j, channel) * instance.gain(channel, j + 1, rx);
        }
    }
    let denom = config.noise_power_w() + interference + config.cue_power_per_channel_w() * instance.gain(channel, 0, rx);
    alloc.get(due, channel) * instance.gain(channel, rx, rx) / denom
}

/// `SE_i = Σ_m log2(1 + SINR_{i,m})`, bps/Hz.
pub fn spectral_efficiency(
    instance: &ChannelInstance,
    alloc: &PowerAllocation,
    config: &SystemConfig,
) -> Result<Vec<f64>> {
    alloc.check_against(instance)?;
    Ok((0..alloc.n_due())
        .map(|i| {
            let mut se = 0.0;
            for m in 0..alloc.n_channels() {
                se += (1.0 + sinr(instance, alloc, i, m, config)).log2();
            }
            se
        })
        .collect())
}

fn ee_from_se(se: &[f64], alloc: &PowerAllocation, config: &SystemConfig) -> Vec<f64> {
    let pc = config.p_circuit_w();
    se.iter()
        .enumerate()
        .map(|(i, s)| config.bandwidth_hz * s / (alloc.total(i) + pc))
        .collect()
}

/// `EE_i = B·SE_i / (Σ_m p[i][m] + P_c)`, bits per Joule.
pub fn energy_efficiency(
    instance: &ChannelInstance,
    alloc: &PowerAllocation,
    config: &SystemConfig,
) -> Result<Vec<f64>> {
    let se = spectral_efficiency(instance, alloc, config)?;
    Ok(ee_from_se(&se, alloc, config))
}

/// Aggregate DUE interference at the base station on each channel, Watts.
pub fn cue_interference(instance: &ChannelInstance, alloc: &PowerAllocation) -> Result<Vec<f64>> {
    alloc.check_against(instance)?;
    Ok((0..alloc.n_channels())
        .map(|k| {
            let mut acc = 0.0;
            for i in 0..alloc.n_due() {
                acc += alloc.get(i, k) * instance.gain(k, i + 1, 0);
            }
            acc
        })
        .collect())
}

/// Evaluates the interference and QoS constraints (both inclusive). The
/// power budget is a precondition: callers produce allocations within it.
pub fn check_constraints(
    instance: &ChannelInstance,
    alloc: &PowerAllocation,
    config: &SystemConfig,
) -> Result<LinkReport> {
    let se = spectral_efficiency(instance, alloc, config)?;
    let ee = ee_from_se(&se, alloc, config);
    let interference = cue_interference(instance, alloc)?;
    let i_t = config.i_thresh_w();
    let violation_interference_w = interference.iter().map(|x| (x - i_t).max(0.0)).fold(0.0, f64::max);
    let violation_qos = se.iter().map(|s| (config.r_thresh - s).max(0.0)).fold(0.0, f64::max);
    let feasible = interference.iter().all(|x| *x <= i_t) && se.iter().all(|s| *s >= config.r_thresh);
    Ok(LinkReport {
        total_power_w: (0..alloc.n_due()).map(|i| alloc.total(i)).collect(),
        se_per_due: se,
        ee_per_due: ee,
        cue_interference_w: interference,
        feasible,
        violation_interference_w,
        violation_qos,
    })
}

/// Objective from an already computed report: `Σ SE_i`, `Σ EE_i` or
/// `Σ_{i,m} p[i][m]`.
pub fn objective_from_report(goal: Goal, report: &LinkReport, alloc: &PowerAllocation) -> f64 {
    let mut acc = 0.0;
    match goal {
        Goal::MaxSe => report.se_per_due.iter().for_each(|x| acc += x),
        Goal::MaxEe => report.ee_per_due.iter().for_each(|x| acc += x),
        Goal::MinPw => alloc.as_slice().iter().for_each(|x| acc += x),
    }
    acc
}

/// Objective value of `alloc` under `goal`; [`Goal::maximize`] gives the
/// orientation.
pub fn objective_value(
    goal: Goal,
    instance: &ChannelInstance,
    alloc: &PowerAllocation,
    config: &SystemConfig,
) -> Result<f64> {
    let report = check_constraints(instance, alloc, config)?;
    Ok(objective_from_report(goal, &report, alloc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chanmodel::{generate_dataset, Point, Topology};
    use proptest::prelude::*;

    /// Instance with every gain equal to `g`.
    fn flat_instance(n: usize, m: usize, g: f64) -> ChannelInstance {
        let due_tx: Vec<Point> = (0..n).map(|k| Point::new(10.0 * k as f64, 0.0)).collect();
        let due_rx: Vec<Point> = (0..n).map(|k| Point::new(10.0 * k as f64, 5.0)).collect();
        let topo = Topology::from_positions(due_tx, due_rx, Point::new(50.0, 50.0), Point::new(25.0, 25.0)).unwrap();
        ChannelInstance::new(m, vec![g; m * (n + 1) * (n + 1)], topo).unwrap()
    }

    fn no_cue() -> SystemConfig {
        SystemConfig {
            n_due: 1,
            n_channels: 1,
            p_cue_dbm: f64::NEG_INFINITY,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn single_link_reference_values() {
        let cfg = no_cue();
        let inst = flat_instance(1, 1, 1e-10);
        let alloc = PowerAllocation::from_rows(&[vec![0.1995]]).unwrap();
        let s = sinr(&inst, &alloc, 0, 0, &cfg);
        // 0.1995 · 1e-10 / 5.0119e-14
        assert!((s / 398.05 - 1.0).abs() < 1e-4, "{s}");
        let se = spectral_efficiency(&inst, &alloc, &cfg).unwrap();
        assert!((se[0] - (1.0 + s).log2()).abs() < 1e-15);
        assert!((se[0] - 8.6404).abs() < 1e-3, "{}", se[0]);

        let cfg_ee = SystemConfig {
            p_circuit_dbm: crate::watt_to_dbm(0.1995),
            ..cfg.clone()
        };
        let ee = energy_efficiency(&inst, &alloc, &cfg_ee).unwrap();
        let expected = 1e7 * se[0] / 0.399;
        assert!((ee[0] / expected - 1.0).abs() < 1e-12);
        assert!((ee[0] / 2.1655e8 - 1.0).abs() < 1e-4, "{}", ee[0]);

        let wide = SystemConfig {
            bandwidth_hz: 2e7,
            noise_density_dbm_hz: cfg_ee.noise_density_dbm_hz - 10.0 * 2f64.log10(),
            ..cfg_ee
        };
        let ee2 = energy_efficiency(&inst, &alloc, &wide).unwrap();
        assert!((ee2[0] / ee[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn zero_power_edge_cases() {
        let cfg = SystemConfig::default();
        let inst = flat_instance(2, 2, 1e-9);
        let zero = PowerAllocation::zeros(2, 2);
        assert_eq!(sinr(&inst, &zero, 0, 1, &cfg), 0.0);
        assert_eq!(spectral_efficiency(&inst, &zero, &cfg).unwrap(), vec![0.0, 0.0]);
        assert_eq!(energy_efficiency(&inst, &zero, &cfg).unwrap(), vec![0.0, 0.0]);
        assert_eq!(cue_interference(&inst, &zero).unwrap(), vec![0.0, 0.0]);
        let rep = check_constraints(&inst, &zero, &cfg).unwrap();
        assert!(!rep.feasible);
        assert_eq!(rep.violation_qos, 3.0);
        assert_eq!(rep.violation_interference_w, 0.0);
        assert_eq!(objective_value(Goal::MaxSe, &inst, &zero, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn scale_invariance_without_noise() {
        let cfg = SystemConfig {
            noise_density_dbm_hz: f64::NEG_INFINITY,
            ..SystemConfig::default()
        };
        let ds = generate_dataset(&SystemConfig::default(), 1, 4).unwrap();
        let inst = &ds.instances()[0];
        let a = PowerAllocation::from_rows(&[vec![0.05, 0.02], vec![0.03, 0.08]]).unwrap();
        let b = PowerAllocation::from_rows(&[vec![0.10, 0.04], vec![0.06, 0.16]]).unwrap();
        let doubled = SystemConfig {
            p_cue_dbm: cfg.p_cue_dbm + 10.0 * 2f64.log10(),
            ..cfg.clone()
        };
        for i in 0..2 {
            for m in 0..2 {
                let x = sinr(inst, &a, i, m, &cfg);
                let y = sinr(inst, &b, i, m, &doubled);
                assert!((x / y - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn interference_single_term_and_additivity() {
        let inst = flat_instance(1, 1, 1e-8);
        let alloc = PowerAllocation::from_rows(&[vec![0.1]]).unwrap();
        let i = cue_interference(&inst, &alloc).unwrap();
        assert!((i[0] - 1e-9).abs() < 1e-24);

        let ds = generate_dataset(&SystemConfig::default(), 1, 8).unwrap();
        let inst = &ds.instances()[0];
        let both = PowerAllocation::from_rows(&[vec![0.1, 0.05], vec![0.02, 0.07]]).unwrap();
        let first = PowerAllocation::from_rows(&[vec![0.1, 0.05], vec![0.0, 0.0]]).unwrap();
        let second = PowerAllocation::from_rows(&[vec![0.0, 0.0], vec![0.02, 0.07]]).unwrap();
        let ib = cue_interference(inst, &both).unwrap();
        let i1 = cue_interference(inst, &first).unwrap();
        let i2 = cue_interference(inst, &second).unwrap();
        for k in 0..2 {
            assert!((ib[k] - (i1[k] + i2[k])).abs() <= 1e-15 * ib[k]);
        }
    }

    #[test]
    fn extra_interferer_lowers_se() {
        let cfg = SystemConfig::default();
        let ds = generate_dataset(&cfg, 1, 2).unwrap();
        let inst = &ds.instances()[0];
        let alone = PowerAllocation::from_rows(&[vec![0.1, 0.0], vec![0.0, 0.0]]).unwrap();
        let crowded = PowerAllocation::from_rows(&[vec![0.1, 0.0], vec![0.05, 0.0]]).unwrap();
        let a = spectral_efficiency(inst, &alone, &cfg).unwrap();
        let b = spectral_efficiency(inst, &crowded, &cfg).unwrap();
        assert!(b[0] < a[0]);
    }

    #[test]
    fn boundary_interference_is_feasible() {
        let cfg = SystemConfig {
            n_due: 1,
            n_channels: 1,
            r_thresh: 0.0,
            ..SystemConfig::default()
        };
        // Power-of-two factors keep p·h exactly equal to I_T.
        let inst = flat_instance(1, 1, cfg.i_thresh_w() * 8.0);
        let alloc = PowerAllocation::from_rows(&[vec![0.125]]).unwrap();
        assert_eq!(cue_interference(&inst, &alloc).unwrap()[0], cfg.i_thresh_w());
        let rep = check_constraints(&inst, &alloc, &cfg).unwrap();
        assert!(rep.feasible);
        assert_eq!(rep.violation_interference_w, 0.0);

        let over = PowerAllocation::from_rows(&[vec![0.125 * (1.0 + 1e-12)]]).unwrap();
        let rep = check_constraints(&inst, &over, &cfg).unwrap();
        assert!(!rep.feasible && rep.violation_interference_w > 0.0);
    }

    #[test]
    fn objective_sums() {
        let cfg = SystemConfig::default();
        let ds = generate_dataset(&cfg, 1, 1).unwrap();
        let inst = &ds.instances()[0];
        let alloc = PowerAllocation::from_rows(&[vec![0.1, 0.05], vec![0.0, 0.02]]).unwrap();
        let pw = objective_value(Goal::MinPw, inst, &alloc, &cfg).unwrap();
        assert!((pw - 0.17).abs() < 1e-15);
        let ee = energy_efficiency(inst, &alloc, &cfg).unwrap();
        assert_eq!(objective_value(Goal::MaxEe, inst, &alloc, &cfg).unwrap(), ee[0] + ee[1]);
        let se = spectral_efficiency(inst, &alloc, &cfg).unwrap();
        assert_eq!(objective_value(Goal::MaxSe, inst, &alloc, &cfg).unwrap(), se[0] + se[1]);
    }

    #[test]
    fn goal_parsing() {
        for g in Goal::ALL {
            assert_eq!(g.as_str().parse::<Goal>().unwrap(), g);
        }
        assert!(matches!("max-throughput".parse::<Goal>(), Err(Error::UnknownGoal(_))));
    }

    /// Straight-line recomputation of the report, independent of the
    /// helper functions above.
    fn recompute(inst: &ChannelInstance, p: &[[f64; 2]; 2], cfg: &SystemConfig) -> (Vec<f64>, Vec<f64>) {
        let noise = 10f64.powf((cfg.noise_density_dbm_hz - 30.0) / 10.0) * cfg.bandwidth_hz;
        let cue = 10f64.powf((cfg.p_cue_dbm - 30.0) / 10.0) / 2.0;
        let mut se = vec![0.0; 2];
        let mut interf = vec![0.0; 2];
        for i in 0..2 {
            let other = 1 - i;
            for m in 0..2 {
                let num = p[i][m] * inst.gain(m, i + 1, i + 1);
                let den = noise + p[other][m] * inst.gain(m, other + 1, i + 1) + cue * inst.gain(m, 0, i + 1);
                se[i] += (num / den).ln_1p() / std::f64::consts::LN_2;
                interf[m] += p[i][m] * inst.gain(m, i + 1, 0);
            }
        }
        (se, interf)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn report_matches_independent_recomputation(
            seed in 0u64..10_000,
            raw in prop::array::uniform4(0.0f64..1.0),
        ) {
            let cfg = SystemConfig::default();
            let ds = generate_dataset(&cfg, 1, seed).unwrap();
            let inst = &ds.instances()[0];
            let pm = cfg.p_max_w();
            let p = [[raw[0] * pm / 2.0, raw[1] * pm / 2.0], [raw[2] * pm / 2.0, raw[3] * pm / 2.0]];
            let alloc = PowerAllocation::from_rows(&[p[0].to_vec(), p[1].to_vec()]).unwrap();
            let rep = check_constraints(inst, &alloc, &cfg).unwrap();
            let (se, interf) = recompute(inst, &p, &cfg);
            for i in 0..2 {
                prop_assert!((rep.se_per_due[i] - se[i]).abs() <= 1e-9 * se[i].max(1e-12));
                prop_assert!((rep.cue_interference_w[i] - interf[i]).abs() <= 1e-12 * interf[i].max(1e-300));
            }
            let feasible = interf.iter().all(|x| *x <= cfg.i_thresh_w()) && se.iter().all(|s| *s >= cfg.r_thresh);
            prop_assert_eq!(rep.feasible, feasible);
            prop_assert_eq!(rep.feasible, rep.violation_qos == 0.0 && rep.violation_interference_w == 0.0);
            prop_assert!(rep.se_per_due.iter().chain(&rep.ee_per_due).all(|x| x.is_finite() && *x >= 0.0));
        }

        #[test]
        fn se_channel_additivity_and_monotonicity(seed in 0u64..10_000, a in 0.0f64..0.19, b in 0.0f64..0.19) {
            let cfg = SystemConfig::default();
            let ds = generate_dataset(&cfg, 1, seed).unwrap();
            let inst = &ds.instances()[0];
            let alloc = PowerAllocation::from_rows(&[vec![a, 0.19 - a], vec![b, 0.19 - b]]).unwrap();
            let se = spectral_efficiency(inst, &alloc, &cfg).unwrap();
            for i in 0..2 {
                let mut per = 0.0;
                for m in 0..2 {
                    per += (1.0 + sinr(inst, &alloc, i, m, &cfg)).log2();
                }
                prop_assert_eq!(per, se[i]);
            }
            // own power up, everything else fixed => SE strictly up
            let up = PowerAllocation::from_rows(&[vec![a + 0.005, 0.19 - a], vec![b, 0.19 - b]]).unwrap();
            let se_up = spectral_efficiency(inst, &up, &cfg).unwrap();
            prop_assert!(se_up[0] > se[0]);
        }
    }
}
