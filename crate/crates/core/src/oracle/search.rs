use std::cmp::Ordering;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{compositions, level_power, GridSpec};
use crate::chanmodel::{ChannelInstance, SystemConfig};
use crate::error::{Error, Result};
use crate::linkmetrics::{check_constraints, objective_from_report, Goal, PowerAllocation};

/// Default cap on joint evaluations per search.
pub const DEFAULT_BUDGET: u64 = 100_000_000;

/// Rate tables are used while they hold at most this many entries.
const TABLE_LIMIT: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleOptions {
    /// Maximum number of joint candidates.
    pub budget: u64,
    /// Workers for the joint scan; results do not depend on it.
    pub threads: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub goal: Goal,
    /// Best feasible grid point, if any.
    pub best_alloc: Option<PowerAllocation>,
    /// Objective of `best_alloc`, or of `min_violation_alloc` when nothing
    /// is feasible.
    pub objective: f64,
    pub feasible: bool,
    pub evaluations: u128,
    /// Grid point minimising `excess_I / I_T + shortfall_SE / R_T`.
    pub min_violation_alloc: PowerAllocation,
    pub min_violation: f64,
    /// Wall time of the whole scan, milliseconds.
    pub wall_ms: f64,
}

impl OracleSolution {
    /// The allocation the oracle stands behind: the optimum, or the
    /// least-violating point.
    pub fn alloc(&self) -> &PowerAllocation {
        self.best_alloc.as_ref().unwrap_or(&self.min_violation_alloc)
    }
}

/// Per-instance precomputation shared by all joint candidates.
struct Prepared<'a> {
    n: usize,
    m: usize,
    goals_b: f64,
    pc: f64,
    i_t: f64,
    r_t: f64,
    per_due: usize,
    /// `per_due × M` level indices.
    lev: Vec<usize>,
    /// `per_due × M` powers.
    pw: Vec<f64>,
    /// In-order per-DUE power sums.
    total: Vec<f64>,
    /// Lexicographic rank of each candidate's power row (equal rows share).
    rank: Vec<u32>,
    levels: Vec<f64>,
    /// `[i][m][level]`: contribution to the interference at the BS.
    contrib: Vec<f64>,
    /// `[i][m][tuple]` with the channel's level tuple in DUE-major base `L`.
    tables: Option<Vec<f64>>,
    table_len: usize,
    strides: Vec<usize>,
    instance: &'a ChannelInstance,
    noise: f64,
    cue: f64,
}

/// `log2(1 + SINR)` with the exact operation order of
/// [`crate::linkmetrics::sinr`].
#[inline]
fn rate(inst: &ChannelInstance, noise: f64, cue: f64, ch: usize, i: usize, powers: impl Fn(usize) -> f64, n: usize) -> f64 {
    let rx = i + 1;
    let mut interference = 0.0;
    for j in 0..n {
        if j != i {
            interference += powers(j) * inst.gain(ch, j + 1, rx);
        }
    }
    let denom = noise + interference + cue * inst.gain(ch, 0, rx);
    (1.0 + powers(i) * inst.gain(ch, rx, rx) / denom).log2()
}

impl<'a> Prepared<'a> {
    fn new(instance: &'a ChannelInstance, spec: &GridSpec, config: &SystemConfig, tables: Option<bool>) -> Result<Self> {
        spec.validate()?;
        instance.check_shape(config)?;
        let (n, m) = (config.n_due, config.n_channels);
        let scale = spec.scale();
        let p_max = config.p_max_w();
        let splits = compositions(spec.k_split - 1, m);
        let per_due = spec.k_total * splits.len();

        let mut level_of = vec![usize::MAX; scale + 1];
        let mut raw = Vec::with_capacity(per_due * m);
        for t in 0..spec.k_total {
            for s in &splits {
                for x in s {
                    raw.push(t * x);
                    level_of[t * x] = 0;
                }
            }
        }
        let mut levels = Vec::new();
        for (u, slot) in level_of.iter_mut().enumerate() {
            if *slot == 0 {
                *slot = levels.len();
                levels.push(level_power(p_max, u, scale));
            }
        }
        let lev: Vec<usize> = raw.iter().map(|u| level_of[*u]).collect();
        let pw: Vec<f64> = lev.iter().map(|l| levels[*l]).collect();
        let total = pw
            .chunks(m)
            .map(|row| {
                let mut acc = 0.0;
                for x in row {
                    acc += x;
                }
                acc
            })
            .collect();

        let mut order: Vec<usize> = (0..per_due).collect();
        let row = |c: usize| &pw[c * m..(c + 1) * m];
        let cmp_rows = |a: usize, b: usize| {
            row(a)
                .iter()
                .zip(row(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        };
        order.sort_by(|a, b| cmp_rows(*a, *b));
        let mut rank = vec![0u32; per_due];
        let mut r = 0u32;
        for k in 0..per_due {
            if k > 0 && cmp_rows(order[k - 1], order[k]) != Ordering::Equal {
                r += 1;
            }
            rank[order[k]] = r;
        }

        let l = levels.len();
        let mut contrib = Vec::with_capacity(n * m * l);
        for i in 0..n {
            for ch in 0..m {
                contrib.extend(levels.iter().map(|p| p * instance.gain(ch, i + 1, 0)));
            }
        }

        let noise = config.noise_power_w();
        let cue = config.cue_power_per_channel_w();
        let table_len = (0..n).try_fold(1usize, |acc, _| acc.checked_mul(l));
        let mut strides = vec![1usize; n];
        let use_tables = match (tables, table_len) {
            (_, None) => false,
            (Some(force), Some(_)) => force,
            (None, Some(tl)) => {
                let joint = spec.joint_count(n, m);
                tl.checked_mul(n * m).is_some_and(|e| e <= TABLE_LIMIT) && (tl as u128) < joint
            }
        };
        let table_len = table_len.unwrap_or(0);
        let tables = if use_tables {
            for i in (0..n.saturating_sub(1)).rev() {
                strides[i] = strides[i + 1] * l;
            }
            let mut t = Vec::with_capacity(n * m * table_len);
            let mut tuple = vec![0usize; n];
            for i in 0..n {
                for ch in 0..m {
                    for idx in 0..table_len {
                        let mut rest = idx;
                        for j in 0..n {
                            tuple[j] = rest / strides[j];
                            rest %= strides[j];
                        }
                        t.push(rate(instance, noise, cue, ch, i, |j| levels[tuple[j]], n));
                    }
                }
            }
            Some(t)
        } else {
            None
        };

        Ok(Self {
            n,
            m,
            goals_b: config.bandwidth_hz,
            pc: config.p_circuit_w(),
            i_t: config.i_thresh_w(),
            r_t: config.r_thresh,
            per_due,
            lev,
            pw,
            total,
            rank,
            levels,
            contrib,
            tables,
            table_len,
            strides,
            instance,
            noise,
            cue,
        })
    }

    fn alloc(&self, cands: &[usize]) -> PowerAllocation {
        let mut p = Vec::with_capacity(self.n * self.m);
        for c in cands {
            p.extend_from_slice(&self.pw[c * self.m..(c + 1) * self.m]);
        }
        PowerAllocation::from_flat(self.n, self.m, p).expect("grid powers are valid")
    }

    fn rank_cmp(&self, a: &[usize], b: &[usize]) -> Ordering {
        a.iter()
            .zip(b)
            .map(|(x, y)| self.rank[*x].cmp(&self.rank[*y]))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    }

    /// Scans every joint candidate whose first DUE lies in `first`.
    fn scan(&self, first: std::ops::Range<usize>) -> Partial {
        let (n, m, l) = (self.n, self.m, self.levels.len());
        let mut part = Partial::new(n);
        if first.is_empty() {
            return part;
        }
        let mut c = vec![0usize; n];
        c[0] = first.start;
        // prefix state after DUEs 0..d
        let mut p_idx = vec![0usize; (n + 1) * m];
        let mut p_int = vec![0.0f64; (n + 1) * m];
        let mut p_pw = vec![0.0f64; n + 1];
        let mut se = vec![0.0f64; n];
        let mut interference = vec![0.0f64; m];
        let mut idx = vec![0usize; m];
        let mut from = 0;
        let last = n - 1;
        loop {
            for d in from..last {
                let cd = c[d];
                let mut acc = p_pw[d];
                for ch in 0..m {
                    let lv = self.lev[cd * m + ch];
                    p_idx[(d + 1) * m + ch] = p_idx[d * m + ch] + lv * self.strides[d];
                    p_int[(d + 1) * m + ch] = p_int[d * m + ch] + self.contrib[(d * m + ch) * l + lv];
                    acc += self.pw[cd * m + ch];
                }
                p_pw[d + 1] = acc;
            }
            let inner = if n == 1 { first.clone() } else { 0..self.per_due };
            for cl in inner {
                c[last] = cl;
                let mut pw_sum = p_pw[last];
                for ch in 0..m {
                    let lv = self.lev[cl * m + ch];
                    idx[ch] = p_idx[last * m + ch] + lv * self.strides[last];
                    interference[ch] = p_int[last * m + ch] + self.contrib[(last * m + ch) * l + lv];
                    pw_sum += self.pw[cl * m + ch];
                }
                for (i, s) in se.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for ch in 0..m {
                        acc += match &self.tables {
                            Some(t) => t[(i * m + ch) * self.table_len + idx[ch]],
                            None => rate(
                                self.instance,
                                self.noise,
                                self.cue,
                                ch,
                                i,
                                |j| self.pw[c[j] * m + ch],
                                n,
                            ),
                        };
                    }
                    *s = acc;
                }
                self.consider(&mut part, &c, &se, &interference, pw_sum);
            }
            if n == 1 {
                break;
            }
            // advance the odometer over DUEs 0..last
            let mut d = last - 1;
            loop {
                c[d] += 1;
                let limit = if d == 0 { first.end } else { self.per_due };
                if c[d] < limit {
                    break;
                }
                if d == 0 {
                    return part;
                }
                c[d] = 0;
                d -= 1;
            }
            from = d;
        }
        part
    }

    #[inline]
    fn consider(&self, part: &mut Partial, c: &[usize], se: &[f64], interference: &[f64], pw_sum: f64) {
        let mut v_int: f64 = 0.0;
        let mut feasible = true;
        for x in interference {
            v_int = v_int.max((x - self.i_t).max(0.0));
            feasible &= *x <= self.i_t;
        }
        let mut v_qos: f64 = 0.0;
        let mut se_sum = 0.0;
        let mut ee_sum = 0.0;
        for (i, s) in se.iter().enumerate() {
            v_qos = v_qos.max((self.r_t - s).max(0.0));
            feasible &= *s >= self.r_t;
            se_sum += s;
            ee_sum += self.goals_b * s / (self.total[c[i]] + self.pc);
        }
        let violation = v_int / self.i_t + if self.r_t > 0.0 { v_qos / self.r_t } else { 0.0 };
        if part.min_v.as_ref().is_none_or(|b| {
            violation < b.value || (violation == b.value && self.rank_cmp(c, &b.cands) == Ordering::Less)
        }) {
            let objs = [se_sum, ee_sum, pw_sum];
            match &mut part.min_v {
                Some(b) => {
                    b.value = violation;
                    b.cands.copy_from_slice(c);
                    b.objs = objs;
                }
                None => {
                    part.min_v = Some(Best {
                        value: violation,
                        cands: c.to_vec(),
                        objs,
                    })
                }
            }
        }
        if !feasible {
            return;
        }
        for (g, obj) in [se_sum, ee_sum, pw_sum].into_iter().enumerate() {
            let goal = Goal::ALL[g];
            let slot = &mut part.best[g];
            let take = match slot {
                None => true,
                Some(b) => {
                    goal.better(obj, b.value) || (obj == b.value && self.rank_cmp(c, &b.cands) == Ordering::Less)
                }
            };
            if take {
                match slot {
                    Some(b) => {
                        b.value = obj;
                        b.cands.copy_from_slice(c);
                    }
                    None => {
                        *slot = Some(Best {
                            value: obj,
                            cands: c.to_vec(),
                            objs: [0.0; 3],
                        })
                    }
                }
            }
        }
    }

    fn merge(&self, mut a: Partial, b: Partial) -> Partial {
        for (g, bb) in b.best.into_iter().enumerate() {
            let Some(bb) = bb else { continue };
            let goal = Goal::ALL[g];
            let take = match &a.best[g] {
                None => true,
                Some(ab) => {
                    goal.better(bb.value, ab.value)
                        || (bb.value == ab.value && self.rank_cmp(&bb.cands, &ab.cands) == Ordering::Less)
                }
            };
            if take {
                a.best[g] = Some(bb);
            }
        }
        if let Some(bv) = b.min_v {
            let take = match &a.min_v {
                None => true,
                Some(av) => {
                    bv.value < av.value || (bv.value == av.value && self.rank_cmp(&bv.cands, &av.cands) == Ordering::Less)
                }
            };
            if take {
                a.min_v = Some(bv);
            }
        }
        a
    }
}

#[derive(Debug, Clone)]
struct Best {
    value: f64,
    cands: Vec<usize>,
    /// Objectives of this point per goal (only tracked for the
    /// min-violation point).
    objs: [f64; 3],
}

#[derive(Debug)]
struct Partial {
    best: [Option<Best>; 3],
    min_v: Option<Best>,
}

impl Partial {
    fn new(_n: usize) -> Self {
        Self {
            best: [None, None, None],
            min_v: None,
        }
    }
}

fn check_budget(spec: &GridSpec, config: &SystemConfig, budget: u64) -> Result<u128> {
    let evaluations = spec.joint_count(config.n_due, config.n_channels);
    if evaluations > budget as u128 {
        return Err(Error::BudgetExceeded { evaluations, budget });
    }
    Ok(evaluations)
}

pub(crate) fn search_all_with(
    instance: &ChannelInstance,
    spec: &GridSpec,
    config: &SystemConfig,
    opts: &OracleOptions,
    tables: Option<bool>,
) -> Result<[OracleSolution; 3]> {
    let start = Instant::now();
    let evaluations = check_budget(spec, config, opts.budget)?;
    let prep = Prepared::new(instance, spec, config, tables)?;
    let threads = opts.threads.max(1);
    let part = if threads == 1 {
        prep.scan(0..prep.per_due)
    } else {
        let chunk = prep.per_due.div_ceil(threads * 4).max(1);
        let ranges: Vec<_> = (0..prep.per_due).step_by(chunk).map(|s| s..(s + chunk).min(prep.per_due)).collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        let parts: Vec<Partial> = pool.install(|| ranges.into_par_iter().map(|r| prep.scan(r)).collect());
        parts.into_iter().fold(Partial::new(prep.n), |a, b| prep.merge(a, b))
    };
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let min_v = part.min_v.expect("grid is never empty");
    let min_alloc = prep.alloc(&min_v.cands);
    Ok(std::array::from_fn(|g| {
        let best = part.best[g].as_ref();
        OracleSolution {
            goal: Goal::ALL[g],
            best_alloc: best.map(|b| prep.alloc(&b.cands)),
            objective: best.map_or(min_v.objs[g], |b| b.value),
            feasible: best.is_some(),
            evaluations,
            min_violation_alloc: min_alloc.clone(),
            min_violation: min_v.value,
            wall_ms,
        }
    }))
}

/// Exhaustive search for all three goals in one pass over the grid.
pub fn grid_search_all(
    instance: &ChannelInstance,
    spec: &GridSpec,
    config: &SystemConfig,
    opts: &OracleOptions,
) -> Result<[OracleSolution; 3]> {
    search_all_with(instance, spec, config, opts, None)
}

/// Best feasible grid point for `goal`; ties go to the lexicographically
/// smallest flattened power array.
pub fn grid_search(instance: &ChannelInstance, goal: Goal, spec: &GridSpec, config: &SystemConfig) -> Result<OracleSolution> {
    grid_search_with(instance, goal, spec, config, &OracleOptions::default())
}

pub fn grid_search_with(
    instance: &ChannelInstance,
    goal: Goal,
    spec: &GridSpec,
    config: &SystemConfig,
    opts: &OracleOptions,
) -> Result<OracleSolution> {
    let [a, b, c] = grid_search_all(instance, spec, config, opts)?;
    Ok([a, b, c].into_iter().nth(goal.index()).expect("three goals"))
}

/// Straightforward search that builds every joint allocation and scores it
/// with [`check_constraints`]. Slow; meant for cross-checking.
pub fn grid_search_reference(
    instance: &ChannelInstance,
    goal: Goal,
    spec: &GridSpec,
    config: &SystemConfig,
    budget: u64,
) -> Result<OracleSolution> {
    let start = Instant::now();
    let evaluations = check_budget(spec, config, budget)?;
    let cands = super::grid::enumerate_candidates(spec, config)?;
    let (n, m) = (config.n_due, config.n_channels);
    let mut c = vec![0usize; n];
    let mut best: Option<(f64, PowerAllocation)> = None;
    let mut min_v: Option<(f64, f64, PowerAllocation)> = None;
    let lex_less = |a: &PowerAllocation, b: &PowerAllocation| {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            == Some(Ordering::Less)
    };
    loop {
        let flat: Vec<f64> = c.iter().flat_map(|k| cands[*k].powers.iter().copied()).collect();
        let alloc = PowerAllocation::from_flat(n, m, flat)?;
        let rep = check_constraints(instance, &alloc, config)?;
        let obj = objective_from_report(goal, &rep, &alloc);
        let v = rep.violation_interference_w / config.i_thresh_w()
            + if config.r_thresh > 0.0 { rep.violation_qos / config.r_thresh } else { 0.0 };
        if min_v.as_ref().is_none_or(|(bv, _, ba)| v < *bv || (v == *bv && lex_less(&alloc, ba))) {
            min_v = Some((v, obj, alloc.clone()));
        }
        if rep.feasible
            && best
                .as_ref()
                .is_none_or(|(bo, ba)| goal.better(obj, *bo) || (obj == *bo && lex_less(&alloc, ba)))
        {
            best = Some((obj, alloc));
        }
        let mut d = n;
        loop {
            if d == 0 {
                let (v, v_obj, v_alloc) = min_v.expect("grid is never empty");
                return Ok(OracleSolution {
                    goal,
                    feasible: best.is_some(),
                    objective: best.as_ref().map_or(v_obj, |b| b.0),
                    best_alloc: best.map(|b| b.1),
                    evaluations,
                    min_violation_alloc: v_alloc,
                    min_violation: v,
                    wall_ms: start.elapsed().as_secs_f64() * 1e3,
                });
            }
            d -= 1;
            c[d] += 1;
            if c[d] < cands.len() {
                break;
            }
            c[d] = 0;
        }
    }
}

/// One paired DNN-vs-oracle comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub dnn_objective: f64,
    pub oracle_objective: f64,
    /// `dnn / oracle`; 1 when both are zero.
    pub ratio: f64,
    pub dnn_feasible: bool,
    pub oracle_feasible: bool,
}

pub fn ratio(dnn: f64, oracle: f64) -> f64 {
    if oracle == 0.0 {
        if dnn == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        dnn / oracle
    }
}

/// Scores `alloc` against an existing oracle solution for the same instance.
pub fn verify_against(
    instance: &ChannelInstance,
    alloc: &PowerAllocation,
    solution: &OracleSolution,
    config: &SystemConfig,
) -> Result<Verification> {
    let rep = check_constraints(instance, alloc, config)?;
    let dnn = objective_from_report(solution.goal, &rep, alloc);
    Ok(Verification {
        dnn_objective: dnn,
        oracle_objective: solution.objective,
        ratio: ratio(dnn, solution.objective),
        dnn_feasible: rep.feasible,
        oracle_feasible: solution.feasible,
    })
}

/// Runs the oracle for `goal` and compares `alloc` with it.
pub fn verify_alloc(
    instance: &ChannelInstance,
    alloc: &PowerAllocation,
    goal: Goal,
    spec: &GridSpec,
    config: &SystemConfig,
) -> Result<Verification> {
    let sol = grid_search(instance, goal, spec, config)?;
    verify_against(instance, alloc, &sol, config)
}
