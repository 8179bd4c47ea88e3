use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use d2dra::chanmodel::export_csv;
use d2dra::evalharness::{
    evaluate_cell, export_results, run_sweep_with, solve_oracle, timing_benchmark, SweepEvent, SweepResults,
};
use d2dra::linkmetrics::check_constraints;
use d2dra::oracle::{grid_search_all, OracleOptions};
use d2dra::ranet::{load_model, save_model, train_with_progress};
use d2dra::{generate_dataset, load_dataset, save_dataset, Dataset, RaModel};
use serde_json::json;

use crate::args::{BenchArgs, Common, EvalArgs, GenDataArgs, InferArgs, OracleArgs, TrainArgs};
use crate::manifest::{digests, manifest_path_for, RunManifest};
use crate::settings::{loss_variant_warnings, FileConfig};
use crate::UsageError;

fn ensure_writable(paths: &[&Path], force: bool) -> anyhow::Result<()> {
    if force {
        return Ok(());
    }
    if let Some(p) = paths.iter().find(|p| p.exists()) {
        return Err(UsageError(format!("{} already exists (use --force to overwrite)", p.display())).into());
    }
    Ok(())
}

fn open_dataset(path: &Path) -> anyhow::Result<Dataset> {
    load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn open_model(path: &Path) -> anyhow::Result<RaModel> {
    load_model(path).with_context(|| format!("loading model {}", path.display()))
}

fn argv() -> Vec<String> {
    std::env::args().collect()
}

struct Run {
    command: &'static str,
    start: Instant,
}

impl Run {
    fn new(command: &'static str) -> Self {
        Self {
            command,
            start: Instant::now(),
        }
    }

    fn manifest(
        &self,
        config: serde_json::Value,
        seeds: serde_json::Value,
        inputs: &[&Path],
        outputs: &[&Path],
    ) -> anyhow::Result<RunManifest> {
        Ok(RunManifest {
            tool: "d2dra".into(),
            version: d2dra::VERSION.into(),
            command: self.command.into(),
            argv: argv(),
            config,
            seeds,
            inputs: digests(inputs)?,
            outputs: digests(outputs)?,
            wall_seconds: self.start.elapsed().as_secs_f64(),
        })
    }
}

fn log(common: &Common, msg: impl AsRef<str>) {
    if !common.quiet {
        eprintln!("{}", msg.as_ref());
    }
}

pub fn gen_data(a: GenDataArgs) -> anyhow::Result<()> {
    let run = Run::new("gen-data");
    let file = FileConfig::load(a.common.config.as_deref())?;
    let system = file.system(&a.system);
    let manifest_path = manifest_path_for(&a.out);
    let mut outs: Vec<&Path> = vec![&a.out, &manifest_path];
    if let Some(c) = &a.csv {
        outs.push(c);
    }
    ensure_writable(&outs, a.common.force)?;
    let threads = file.threads(a.common.threads);
    let ds = if threads > 1 {
        d2dra::chanmodel::generate_dataset_parallel(&system, a.count, a.seed, threads)?
    } else {
        generate_dataset(&system, a.count, a.seed)?
    };
    save_dataset(&ds, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let mut written: Vec<&Path> = vec![&a.out];
    if let Some(c) = &a.csv {
        export_csv(&ds, c).with_context(|| format!("writing {}", c.display()))?;
        written.push(c);
    }
    run.manifest(
        json!({ "system": system, "count": a.count }),
        json!({ "data": a.seed }),
        &[],
        &written,
    )?
    .write(&manifest_path)?;
    log(&a.common, format!("wrote {} instances to {} (sha256 {})", ds.len(), a.out.display(), ds.digest()));
    Ok(())
}

pub fn train(a: TrainArgs) -> anyhow::Result<()> {
    let run = Run::new("train");
    let file = FileConfig::load(a.common.config.as_deref())?;
    let history = a.history.clone().unwrap_or_else(|| {
        let mut s = a.out.as_os_str().to_os_string();
        s.push(".history.csv");
        PathBuf::from(s)
    });
    let manifest_path = manifest_path_for(&a.out);
    ensure_writable(&[&a.out, &history, &manifest_path], a.common.force)?;
    let ds = open_dataset(&a.data)?;
    if let Some(sys) = &file.system {
        if sys != ds.config() {
            return Err(UsageError(format!(
                "[system] in {} does not match the dataset's configuration",
                a.common.config.as_ref().map_or(String::new(), |p| p.display().to_string())
            ))
            .into());
        }
    }
    let hyper = file.hyper(&a.train, a.seed);
    let arch = file.arch(&a.train, ds.config());
    for w in loss_variant_warnings(&hyper) {
        eprintln!("warning: {w}");
    }
    let quiet = a.common.quiet;
    let report = train_with_progress(&ds, a.goal, &arch, &hyper, |s| {
        if !quiet && (s.epoch % 10 == 0 || s.epoch + 1 == hyper.epochs) {
            eprintln!(
                "epoch {:>4}  lr {:.2e}  train {:.6}  val {}",
                s.epoch,
                s.lr,
                s.train_loss,
                s.val_loss.map_or("-".into(), |v| format!("{v:.6}"))
            );
        }
    })?;
    save_model(&report.model, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let mut h = File::create(&history).with_context(|| format!("writing {}", history.display()))?;
    writeln!(h, "epoch,lr,train_loss,val_loss,steps")?;
    for s in &report.history {
        writeln!(
            h,
            "{},{},{},{},{}",
            s.epoch,
            s.lr,
            s.train_loss,
            s.val_loss.map_or("NA".into(), |v| v.to_string()),
            s.steps
        )?;
    }
    drop(h);
    run.manifest(
        json!({ "goal": a.goal, "arch": arch, "hyper": hyper, "system": ds.config() }),
        json!({ "train": hyper.seed, "data": ds.seed() }),
        &[&a.data],
        &[&a.out, &history],
    )?
    .write(&manifest_path)?;
    log(&a.common, format!("wrote {} model to {}", a.goal, a.out.display()));
    Ok(())
}

pub fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let run = Run::new("eval");
    let file = FileConfig::load(a.common.config.as_deref())?;
    let mut sweep = file.sweep(&a);
    let out = &a.out;
    if a.no_cache {
        sweep.cache_dir = None;
    } else if sweep.cache_dir.is_none() {
        sweep.cache_dir = Some(out.join("oracle-cache"));
    }
    let files = ["sweep.csv", "se.svg", "ee.svg", "power.svg", "manifest.json"].map(|f| out.join(f));
    ensure_writable(&files.iter().map(PathBuf::as_path).collect::<Vec<_>>(), a.common.force)?;
    let quiet = a.common.quiet;
    let mut inputs: Vec<PathBuf> = Vec::new();

    let results = if a.models.is_empty() {
        if a.test_data.is_some() {
            return Err(UsageError("--test-data is only used together with --model".into()).into());
        }
        sweep.validate()?;
        run_sweep_with(&sweep, |e| {
            if quiet {
                return;
            }
            match e {
                SweepEvent::Generating { d_m } => eprintln!("D = {d_m} m: generating data"),
                SweepEvent::Epoch { goal, stats, .. } if stats.epoch % 20 == 0 => {
                    eprintln!("  {goal} epoch {:>4} loss {:.6}", stats.epoch, stats.train_loss)
                }
                SweepEvent::Epoch { .. } => {}
                SweepEvent::Trained { goal, seconds, .. } => eprintln!("  {goal} trained in {seconds:.1} s"),
                SweepEvent::OracleDone { seconds, .. } => eprintln!("  oracle done in {seconds:.1} s"),
                SweepEvent::CellDone { row } => eprintln!(
                    "  {}: SE {:.4} ratio {} outage {}",
                    row.goal,
                    row.mean_se_bpshz,
                    row.ratio_vs_oracle.map_or("NA".into(), |r| format!("{r:.4}")),
                    row.outage_rate.map_or("NA".into(), |r| format!("{r:.4}")),
                ),
            }
        })?
    } else {
        let Some(test_path) = &a.test_data else {
            return Err(UsageError("--model requires --test-data".into()).into());
        };
        let models = a.models.iter().map(|p| open_model(p)).collect::<anyhow::Result<Vec<_>>>()?;
        let test = open_dataset(test_path)?;
        sweep.system = test.config().clone();
        sweep.d_values = vec![test.config().area_d];
        sweep.test_count = test.len();
        sweep.goals = models.iter().map(|m| m.goal).collect();
        sweep.seeds.data = test.seed();
        let oracle = solve_oracle(&sweep, &test)?;
        inputs.push(test_path.clone());
        inputs.extend(a.models.iter().cloned());
        SweepResults {
            rows: evaluate_cell(&sweep, &test, &models, &oracle)?,
        }
    };
    export_results(&results, out).with_context(|| format!("writing results to {}", out.display()))?;
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let output_refs: Vec<&Path> = files[..4].iter().map(PathBuf::as_path).collect();
    run.manifest(
        serde_json::to_value(&sweep)?,
        json!({ "data": sweep.seeds.data, "train": sweep.seeds.train }),
        &input_refs,
        &output_refs,
    )?
    .write(&files[4])?;
    log(&a.common, format!("wrote {} rows to {}", results.rows.len(), files[0].display()));
    Ok(())
}

fn emit(report: &serde_json::Value, path: Option<&Path>, force: bool, run: &Run, inputs: &[&Path], config: serde_json::Value) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
        _ => {}
    }
    if let Some(p) = path {
        let manifest_path = manifest_path_for(p);
        ensure_writable(&[p, &manifest_path], force)?;
        std::fs::write(p, format!("{text}\n")).with_context(|| format!("writing {}", p.display()))?;
        run.manifest(config, json!({}), inputs, &[p])?.write(&manifest_path)?;
    }
    Ok(())
}

fn check_report_path(path: Option<&Path>, force: bool) -> anyhow::Result<()> {
    match path {
        Some(p) => ensure_writable(&[p, &manifest_path_for(p)], force),
        None => Ok(()),
    }
}

pub fn oracle(a: OracleArgs) -> anyhow::Result<()> {
    let run = Run::new("oracle");
    let file = FileConfig::load(a.common.config.as_deref())?;
    check_report_path(a.report.as_deref(), a.common.force)?;
    let ds = open_dataset(&a.data)?;
    let grid = file.grid(a.grid);
    let opts = OracleOptions {
        budget: file.budget(a.budget),
        threads: file.threads(a.common.threads),
    };
    let mut out = Vec::new();
    for &k in &a.index {
        let inst = ds.instances().get(k).ok_or_else(|| {
            UsageError(format!("index {k} out of range (dataset holds {} instances)", ds.len()))
        })?;
        let sols = grid_search_all(inst, &grid, ds.config(), &opts)?;
        let chosen: Vec<_> = sols.iter().filter(|s| a.goal.is_none_or(|g| g == s.goal)).collect();
        out.push(json!({ "index": k, "solutions": chosen }));
    }
    let report = json!({ "grid": grid, "budget": opts.budget, "instances": out });
    emit(
        &report,
        a.report.as_deref(),
        a.common.force,
        &run,
        &[&a.data],
        json!({ "grid": grid, "budget": opts.budget, "index": a.index, "goal": a.goal }),
    )
}

pub fn bench(a: BenchArgs) -> anyhow::Result<()> {
    let run = Run::new("bench");
    let file = FileConfig::load(a.common.config.as_deref())?;
    check_report_path(a.report.as_deref(), a.common.force)?;
    let model = open_model(&a.model)?;
    let ds = open_dataset(&a.data)?;
    let grid = file.grid(a.grid);
    let n = a.instances.min(ds.len());
    let t = timing_benchmark(&model, &ds.instances()[..n], &grid, a.reps)?;
    emit(
        &serde_json::to_value(&t)?,
        a.report.as_deref(),
        a.common.force,
        &run,
        &[&a.model, &a.data],
        json!({ "grid": grid, "instances": n, "reps": a.reps }),
    )
}

pub fn infer(a: InferArgs) -> anyhow::Result<()> {
    let run = Run::new("infer");
    check_report_path(a.report.as_deref(), a.common.force)?;
    let model = open_model(&a.model)?;
    let ds = open_dataset(&a.data)?;
    let inst = ds
        .instances()
        .get(a.index)
        .ok_or_else(|| UsageError(format!("index {} out of range (dataset holds {} instances)", a.index, ds.len())))?;
    let alloc = d2dra::infer(&model, inst)?;
    let report = check_constraints(inst, &alloc, ds.config())?;
    let rows: Vec<Vec<f64>> = (0..alloc.n_due()).map(|i| alloc.row(i).to_vec()).collect();
    let out = json!({
        "index": a.index,
        "goal": model.goal,
        "powers_w": rows,
        "se_per_due": report.se_per_due,
        "ee_per_due": report.ee_per_due,
        "cue_interference_w": report.cue_interference_w,
        "total_power_w": report.total_power_w,
        "feasible": report.feasible,
        "interference_ok": report.violation_interference_w == 0.0,
        "qos_ok": report.violation_qos == 0.0,
        "violation_interference_w": report.violation_interference_w,
        "violation_qos": report.violation_qos,
    });
    emit(
        &out,
        a.report.as_deref(),
        a.common.force,
        &run,
        &[&a.model, &a.data],
        json!({ "index": a.index }),
    )
}
