use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::sweep::{SweepResults, SweepRow, SweepSeeds};
use crate::error::{Error, Result};
use crate::linkmetrics::Goal;
use crate::oracle::GridSpec;

/// Column order of `sweep.csv`.
pub const CSV_COLUMNS: [&str; 20] = [
    "goal",
    "d_m",
    "mean_se_bpshz",
    "mean_ee_bpj",
    "mean_power_w",
    "ratio_vs_oracle",
    "outage_rate",
    "mean_violation",
    "dnn_ms_median",
    "oracle_ms_median",
    "n_test",
    "n_oracle_feasible",
    "gridspec",
    "seeds",
    "mean_power_sum_w",
    "oracle_mean_se",
    "oracle_mean_ee",
    "oracle_mean_power_w",
    "mean_violation_qos",
    "mean_violation_interference_w",
];

const NA: &str = "NA";

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| NA.to_string(), |v| v.to_string())
}

fn row_record(r: &SweepRow) -> Vec<String> {
    vec![
        r.goal.to_string(),
        r.d_m.to_string(),
        r.mean_se_bpshz.to_string(),
        r.mean_ee_bpj.to_string(),
        r.mean_power_w.to_string(),
        opt(r.ratio_vs_oracle),
        opt(r.outage_rate),
        r.mean_violation.to_string(),
        opt(r.dnn_ms_median),
        opt(r.oracle_ms_median),
        r.n_test.to_string(),
        r.n_oracle_feasible.to_string(),
        r.gridspec.to_string(),
        r.seeds.to_string(),
        r.mean_power_sum_w.to_string(),
        r.oracle_mean_se.to_string(),
        r.oracle_mean_ee.to_string(),
        r.oracle_mean_power_w.to_string(),
        r.mean_violation_qos.to_string(),
        r.mean_violation_interference_w.to_string(),
    ]
}

pub fn write_sweep_csv(results: &SweepResults, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_COLUMNS)?;
    for r in &results.rows {
        w.write_record(row_record(r))?;
    }
    w.flush()?;
    Ok(())
}

fn parse_seeds(s: &str) -> Result<SweepSeeds> {
    let bad = || Error::Corrupt(format!("seeds field {s:?}"));
    let mut seeds = SweepSeeds::default();
    for part in s.split(';') {
        let (k, v) = part.split_once('=').ok_or_else(bad)?;
        let v: u64 = v.parse().map_err(|_| bad())?;
        match k {
            "data" => seeds.data = v,
            "train" => seeds.train = v,
            _ => return Err(bad()),
        }
    }
    Ok(seeds)
}

/// Parses a `sweep.csv` written by [`write_sweep_csv`].
pub fn read_sweep_csv(path: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    let mut rd = csv::Reader::from_path(path)?;
    let headers = rd.headers()?.clone();
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(Error::Corrupt("sweep.csv has unexpected columns".into()));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let num = |k: usize| -> Result<f64> {
            field(k)
                .parse()
                .map_err(|_| Error::Corrupt(format!("column {} value {:?}", CSV_COLUMNS[k], field(k))))
        };
        let optn = |k: usize| -> Result<Option<f64>> {
            if field(k) == NA {
                Ok(None)
            } else {
                num(k).map(Some)
            }
        };
        rows.push(SweepRow {
            goal: field(0).parse()?,
            d_m: num(1)?,
            mean_se_bpshz: num(2)?,
            mean_ee_bpj: num(3)?,
            mean_power_w: num(4)?,
            ratio_vs_oracle: optn(5)?,
            outage_rate: optn(6)?,
            mean_violation: num(7)?,
            dnn_ms_median: optn(8)?,
            oracle_ms_median: optn(9)?,
            n_test: num(10)? as usize,
            n_oracle_feasible: num(11)? as usize,
            gridspec: field(12).parse::<GridSpec>().map_err(|e| Error::Corrupt(e.to_string()))?,
            seeds: parse_seeds(field(13))?,
            mean_power_sum_w: num(14)?,
            oracle_mean_se: num(15)?,
            oracle_mean_ee: num(16)?,
            oracle_mean_power_w: num(17)?,
            mean_violation_qos: num(18)?,
            mean_violation_interference_w: num(19)?,
        });
    }
    Ok(rows)
}

/// A chart of one metric against the area size.
struct Metric {
    file: &'static str,
    title: &'static str,
    y_label: &'static str,
    dnn: fn(&SweepRow) -> f64,
    oracle: fn(&SweepRow) -> f64,
}

const METRICS: [Metric; 3] = [
    Metric {
        file: "se.svg",
        title: "Spectral efficiency vs. size of area",
        y_label: "mean sum SE (bps/Hz)",
        dnn: |r| r.mean_se_bpshz,
        oracle: |r| r.oracle_mean_se,
    },
    Metric {
        file: "ee.svg",
        title: "Energy efficiency vs. size of area",
        y_label: "mean sum EE (bits/J)",
        dnn: |r| r.mean_ee_bpj,
        oracle: |r| r.oracle_mean_ee,
    },
    Metric {
        file: "power.svg",
        title: "Transmit power per DUE vs. size of area",
        y_label: "mean power per DUE (W)",
        dnn: |r| r.mean_power_w,
        oracle: |r| r.oracle_mean_power_w,
    },
];

fn goal_color(g: Goal) -> &'static str {
    match g {
        Goal::MaxSe => "#1f77b4",
        Goal::MaxEe => "#2ca02c",
        Goal::MinPw => "#d62728",
    }
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|k| k * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() as i64;
    let end = (hi / step).floor() as i64;
    (start..=end).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn render_chart(metric: &Metric, rows: &[SweepRow], goals: &[Goal]) -> String {
    let (w, h) = (640.0, 420.0);
    let (ml, mr, mt, mb) = (80.0, 150.0, 40.0, 50.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);

    let xs: Vec<f64> = rows.iter().map(|r| r.d_m).collect();
    let ys: Vec<f64> = rows
        .iter()
        .flat_map(|r| [(metric.dnn)(r), (metric.oracle)(r)])
        .filter(|v| v.is_finite())
        .collect();
    let (mut x0, mut x1) = (xs.iter().copied().fold(f64::INFINITY, f64::min), xs.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    if x0 == x1 {
        x0 -= 50.0;
        x1 += 50.0;
    }
    let (mut y0, mut y1) = (ys.iter().copied().fold(f64::INFINITY, f64::min), ys.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    if ys.is_empty() {
        (y0, y1) = (0.0, 1.0);
    }
    let pad = if y1 > y0 { 0.05 * (y1 - y0) } else { 0.5 * y0.abs().max(1e-12) };
    y0 -= pad;
    y1 += pad;
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| mt + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, ml + pw / 2.0, metric.title);
    let _ = writeln!(
        s,
        r##"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    );
    for t in nice_ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(s, r##"<line x1="{ml}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/>"##, ml + pw);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, ml - 6.0, y + 4.0, fmt_tick(t));
    }
    let mut dvals = xs.clone();
    dvals.sort_by(f64::total_cmp);
    dvals.dedup();
    for d in &dvals {
        let x = sx(*d);
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="#444"/>"##, mt + ph, mt + ph + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, mt + ph + 18.0, fmt_tick(*d));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">size of area D (m)</text>"#, ml + pw / 2.0, h - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        mt + ph / 2.0,
        mt + ph / 2.0,
        metric.y_label
    );

    for (k, goal) in goals.iter().enumerate() {
        let mut pts: Vec<&SweepRow> = rows.iter().filter(|r| r.goal == *goal).collect();
        pts.sort_by(|a, b| a.d_m.total_cmp(&b.d_m));
        let color = goal_color(*goal);
        for (value, dash) in [(metric.dnn, ""), (metric.oracle, r#" stroke-dasharray="6 4""#)] {
            let coords: Vec<String> = pts
                .iter()
                .filter(|r| value(r).is_finite())
                .map(|r| format!("{:.2},{:.2}", sx(r.d_m), sy(value(r))))
                .collect();
            if coords.is_empty() {
                continue;
            }
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#,
                coords.join(" ")
            );
            if dash.is_empty() {
                for c in &coords {
                    let (x, y) = c.split_once(',').expect("pair");
                    let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="3" fill="{color}"/>"#);
                }
            }
        }
        let ly = mt + 10.0 + 36.0 * k as f64;
        let lx = ml + pw + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 24.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{goal} (DNN)</text>"#, lx + 30.0, ly + 4.0);
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="2" stroke-dasharray="6 4"/>"#,
            ly + 16.0,
            lx + 24.0,
            ly + 16.0
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}">{goal} (oracle)</text>"#, lx + 30.0, ly + 20.0);
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `sweep.csv` and one SVG line chart per metric (SE, EE, power)
/// into `out_dir`, returning the written paths.
pub fn export_results(results: &SweepResults, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut goals: Vec<Goal> = results.rows.iter().map(|r| r.goal).collect();
    goals.sort();
    goals.dedup();
    if goals.is_empty() {
        return Err(Error::InvalidArgument("no results to export".into()));
    }
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir)?;
    let csv_path = dir.join("sweep.csv");
    write_sweep_csv(results, &csv_path)?;
    let mut written = vec![csv_path];
    for metric in &METRICS {
        let path = dir.join(metric.file);
        fs::write(&path, render_chart(metric, &results.rows, &goals))?;
        written.push(path);
    }
    Ok(written)
}
