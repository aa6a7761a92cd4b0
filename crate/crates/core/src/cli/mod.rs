//! Command implementations behind the `taskweight` binary.
//!
//! Each command returns the text it would print, and writes its files
//! atomically (temporary file, then rename). Exit codes: 0 success, 2
//! configuration or schema error, 3 I/O error, 4 numeric divergence.

pub mod config;
pub mod svg;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use thiserror::Error;

use crate::controller::StrategyKind;
use crate::data::{self, DataError, MultiTaskDataset};
use crate::metrics::{DeltaMReport, MetricsError};
use crate::numfmt::{fixed2, sig9};
use crate::par::Exec;
use crate::simdyn::{self, SimError};
use crate::trainer::{self, ComparisonReport, TrainError};

pub use config::RunConfig;

pub const DELTA_M_HEADER: &str = "task,stl_loss,mtl_loss,delta_m";
pub const WEIGHTS_HEADER: &str = "strategy,epoch,task,weight,train_loss,train_acc";
pub const TRAJECTORY_HEADER: &str = "source,strategy,epoch,task,weight,train_loss,train_acc";
pub const TABLE_HEADER: &str = "task,mtl_loss,stl_loss";

pub const DELTA_M_FILE: &str = "delta_m.csv";
pub const WEIGHTS_FILE: &str = "weights.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Diverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Diverged(_) => 4,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::FileNotFound(_) | DataError::Io(_) => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } => CliError::Diverged(e.to_string()),
            TrainError::Data(d) => d.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Config(e.to_string())
    }
}

/// Writes `contents` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(contents).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    fs::rename(&tmp, path).map_err(io)
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig, out: Option<&Path>) -> Result<PathBuf, CliError> {
    out.map(Path::to_path_buf)
        .or_else(|| cfg.output.dir.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set output.dir".into()))
}

/// Generates the configured synthetic dataset.
pub fn generate(cfg: &RunConfig) -> Result<MultiTaskDataset, CliError> {
    let profiles: Vec<_> = cfg.data.tasks.iter().map(|t| t.profile()).collect();
    let mut ds = data::generate_synthetic_related(cfg.data.n, cfg.data.d, &profiles, cfg.data.latent_rank, cfg.seed)?;
    ds.task_names = cfg.task_names();
    Ok(ds)
}

/// `gen-data`: writes the configured dataset as CSV.
pub fn cmd_gen_data(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<String, CliError> {
    let cfg = load_config(config, seed)?;
    let ds = generate(&cfg)?;
    write_atomic(out, data::to_csv_string(&ds).as_bytes())?;
    let mut msg = format!(
        "wrote {}: n={} d={} T={}\n",
        out.display(),
        ds.n_samples(),
        ds.n_features(),
        ds.n_tasks()
    );
    for (name, rate) in ds.task_names.iter().zip(ds.positive_rates()) {
        msg.push_str(&format!("  {name}: positive rate {}\n", sig9(rate)));
    }
    Ok(msg)
}

pub fn weights_csv(report: &ComparisonReport) -> String {
    let mut s = String::from(WEIGHTS_HEADER);
    s.push('\n');
    for run in &report.mtl_runs {
        for e in &run.epoch_stats {
            for (name, t) in report.task_names.iter().zip(&e.per_task) {
                s.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    run.strategy,
                    e.epoch,
                    name,
                    sig9(t.weight),
                    sig9(t.train_loss),
                    sig9(t.train_accuracy)
                ));
            }
        }
    }
    s
}

pub fn delta_m_csv(report: &DeltaMReport) -> String {
    let mut s = String::from(DELTA_M_HEADER);
    s.push('\n');
    for r in &report.per_task {
        s.push_str(&format!(
            "{},{},{},{}\n",
            r.task,
            sig9(r.stl_loss),
            sig9(r.mtl_loss),
            sig9(r.delta_m)
        ));
    }
    s.push_str(&format!("TOTAL,,,{}\n", sig9(report.total)));
    s
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

pub fn summary_text(report: &ComparisonReport, n_train: usize, n_val: usize) -> String {
    let mut s = String::new();
    s.push_str("STL vs MTL comparison\n");
    s.push_str(&format!(
        "All losses and accuracies below are measured on the validation split ({n_val} samples; {n_train} used for training).\n\n"
    ));
    s.push_str("Single-task baselines:\n");
    for (name, r) in report.task_names.iter().zip(&report.stl) {
        s.push_str(&format!("  {name:<20} acc {}  loss {}\n", sig9(r.accuracy), sig9(r.loss)));
    }
    s.push_str("\nMulti-task runs (mean over tasks):\n");
    for run in &report.mtl_runs {
        s.push_str(&format!(
            "  {:<12} acc {}  loss {}  final weights [{}]\n",
            run.strategy.as_str(),
            sig9(mean(&run.final_val_accuracies)),
            sig9(mean(&run.final_val_losses)),
            run.final_weights.iter().map(|w| sig9(*w)).collect::<Vec<_>>().join(", ")
        ));
    }
    if let Some(dm) = &report.delta_m {
        s.push_str("\nDelta_m (deepchest MTL vs STL, validation loss; lower is better):\n");
        for r in &dm.per_task {
            s.push_str(&format!("  {:<20} {}\n", r.task, fixed2(r.delta_m)));
        }
        s.push_str(&format!("  {:<20} {}\n", "TOTAL", fixed2(dm.total)));
    }
    s
}

/// `compare`: STL baselines plus one MTL run per configured strategy.
/// Writes `delta_m.csv`, `weights.csv` and `summary.txt` into the output
/// directory. Without `--data`, the configured synthetic dataset is used.
pub fn cmd_compare(
    config: Option<&Path>,
    data_path: Option<&Path>,
    out: Option<&Path>,
    seed: Option<u64>,
) -> Result<String, CliError> {
    cmd_compare_with(config, data_path, out, seed, Exec::default())
}

pub fn cmd_compare_with(
    config: Option<&Path>,
    data_path: Option<&Path>,
    out: Option<&Path>,
    seed: Option<u64>,
    exec: Exec,
) -> Result<String, CliError> {
    let cfg = load_config(config, seed)?;
    let dir = out_dir(&cfg, out)?;
    let ds = match data_path {
        Some(p) => data::load_csv(p)?,
        None => generate(&cfg)?,
    };
    let hp = cfg.hyperparams(StrategyKind::Deepchest);
    let report = trainer::run_comparison_with(&ds, &hp, &cfg.weighting.strategies, exec)?;
    for (run, t) in report.mtl_runs.iter().zip(&report.timings) {
        info!(
            "{}: {:.3}s total, controller {:.4}% of run time",
            run.strategy,
            t.total.as_secs_f64(),
            100.0 * t.controller_fraction()
        );
    }
    let (train_idx, val_idx) = data::split_indices(ds.n_samples(), hp.train_fraction, hp.seed);
    write_atomic(&dir.join(WEIGHTS_FILE), weights_csv(&report).as_bytes())?;
    if let Some(dm) = &report.delta_m {
        write_atomic(&dir.join(DELTA_M_FILE), delta_m_csv(dm).as_bytes())?;
    }
    let summary = summary_text(&report, train_idx.len(), val_idx.len());
    write_atomic(&dir.join(SUMMARY_FILE), summary.as_bytes())?;
    Ok(summary)
}

/// `simulate`: runs the learning-dynamics simulator for each configured
/// strategy and writes `trajectory.csv`. `train_loss` is empty for
/// simulated rows.
pub fn cmd_simulate(config: Option<&Path>, out: Option<&Path>, seed: Option<u64>) -> Result<String, CliError> {
    let cfg = load_config(config, seed)?;
    let dir = out_dir(&cfg, out)?;
    let wc = cfg.weighting.weight_config();
    let mut s = String::from(TRAJECTORY_HEADER);
    s.push('\n');
    let mut msg = String::new();
    for &strategy in &cfg.sim.strategies {
        let traj = simdyn::run_sim(&cfg.sim.tasks, strategy, &wc, cfg.sim.epochs, cfg.seed)?;
        for state in &traj {
            for (t, (&a, &w)) in state.accuracies.iter().zip(state.weights.as_slice()).enumerate() {
                s.push_str(&format!("sim,{strategy},{},task{t},{},,{}\n", state.epoch, sig9(w), sig9(a)));
            }
        }
        let last = traj.last().expect("epochs >= 1");
        let min = last.accuracies.iter().copied().fold(f64::INFINITY, f64::min);
        msg.push_str(&format!("{strategy}: final min-task accuracy {}\n", sig9(min)));
    }
    write_atomic(&dir.join(TRAJECTORY_FILE), s.as_bytes())?;
    Ok(msg)
}

/// Weight series read from a weights log, keyed `strategy/task` in order
/// of first appearance.
pub fn read_weight_series(text: &str) -> Result<Vec<svg::Series>, CliError> {
    let schema = |m: String| CliError::Config(format!("weights log: {m}"));
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| schema(e.to_string()))?.clone();
    let joined = header.iter().collect::<Vec<_>>().join(",");
    let offset = if joined == WEIGHTS_HEADER {
        0
    } else if joined == TRAJECTORY_HEADER {
        1
    } else {
        return Err(schema(format!("unexpected header `{joined}`")));
    };
    let mut series: Vec<svg::Series> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| schema(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(i + offset).unwrap_or("");
        let epoch: f64 = field(1)
            .parse::<usize>()
            .map_err(|_| schema(format!("line {line}: bad epoch `{}`", field(1))))? as f64;
        let weight: f64 = field(3)
            .parse()
            .map_err(|_| schema(format!("line {line}: bad weight `{}`", field(3))))?;
        if !weight.is_finite() {
            return Err(schema(format!("line {line}: non-finite weight")));
        }
        let label = format!("{}/{}", field(0), field(2));
        match series.iter_mut().find(|s| s.label == label) {
            Some(s) => s.points.push((epoch, weight)),
            None => series.push(svg::Series {
                label,
                points: vec![(epoch, weight)],
            }),
        }
    }
    Ok(series)
}

/// `plot`: renders the weight trajectories of a weights log as SVG.
pub fn cmd_plot(weights: &Path, out: &Path) -> Result<String, CliError> {
    let text = fs::read_to_string(weights).map_err(|e| CliError::Io(format!("{}: {e}", weights.display())))?;
    let series = read_weight_series(&text)?;
    let svg = svg::line_chart("Task weight per epoch", "epoch", "weight", &series);
    write_atomic(out, svg.as_bytes())?;
    Ok(format!("wrote {} ({} series)\n", out.display(), series.len()))
}

/// Δm for a table of published or measured losses (`task,mtl_loss,stl_loss`).
pub fn delta_m_from_table(text: &str) -> Result<DeltaMReport, CliError> {
    let schema = |m: String| CliError::Config(format!("loss table: {m}"));
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| schema(e.to_string()))?.clone();
    let joined = header.iter().collect::<Vec<_>>().join(",");
    if joined != TABLE_HEADER {
        return Err(schema(format!("expected header `{TABLE_HEADER}`, got `{joined}`")));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| schema(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64, CliError> {
            rec.get(i)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| schema(format!("line {line}: `{}` is not a number", rec.get(i).unwrap_or(""))))
        };
        let (task, mtl, stl) = (rec.get(0).unwrap_or("").to_string(), num(1)?, num(2)?);
        if stl <= 0.0 {
            return Err(CliError::Config(format!(
                "ZeroBaseline: task `{task}` at line {line} has stl_loss {stl}; aborting"
            )));
        }
        rows.push((task, stl, mtl));
    }
    if rows.is_empty() {
        return Err(schema("no rows".into()));
    }
    DeltaMReport::from_losses(rows).map_err(|e: MetricsError| schema(e.to_string()))
}

pub fn delta_m_report_text(report: &DeltaMReport) -> String {
    let mut s = format!("{:<20} {:>9} {:>9} {:>8}\n", "task", "mtl_loss", "stl_loss", "delta_m");
    for r in &report.per_task {
        s.push_str(&format!(
            "{:<20} {:>9} {:>9} {:>8}\n",
            r.task,
            sig9(r.mtl_loss),
            sig9(r.stl_loss),
            fixed2(r.delta_m)
        ));
    }
    s.push_str(&format!("{:<20} {:>9} {:>9} {:>8}\n", "TOTAL", "", "", fixed2(report.total)));
    s
}

/// `delta-m`: prints per-task and total Δm for a loss table.
pub fn cmd_delta_m(table: &Path) -> Result<String, CliError> {
    let text = fs::read_to_string(table).map_err(|e| CliError::Io(format!("{}: {e}", table.display())))?;
    Ok(delta_m_report_text(&delta_m_from_table(&text)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config(String::new()).exit_code(), 2);
        assert_eq!(CliError::Io(String::new()).exit_code(), 3);
        assert_eq!(CliError::Diverged(String::new()).exit_code(), 4);
        let e: CliError = DataError::FileNotFound("x".into()).into();
        assert_eq!(e.exit_code(), 3);
        let e: CliError = TrainError::Diverged { epoch: 1, task: 0 }.into();
        assert_eq!(e.exit_code(), 4);
    }

    #[test]
    fn delta_m_table_examples() {
        let r = delta_m_from_table("task,mtl_loss,stl_loss\nx,0.5,0.5\n").unwrap();
        assert_eq!(r.total, 0.0);
        let text = delta_m_report_text(&r);
        assert!(text.contains("0.00"));
        match delta_m_from_table("task,mtl_loss,stl_loss\nx,0.5,0\n") {
            Err(CliError::Config(m)) => assert!(m.contains("ZeroBaseline")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(delta_m_from_table("task,stl_loss,mtl_loss\nx,1,1\n"), Err(CliError::Config(_))));
        assert!(matches!(delta_m_from_table("task,mtl_loss,stl_loss\nx,abc,1\n"), Err(CliError::Config(_))));
    }

    #[test]
    fn weight_series_grouping() {
        let text = format!("{WEIGHTS_HEADER}\ndeepchest,0,a,1.1,0.5,0.7\ndeepchest,0,b,1.2,0.5,0.6\ndeepchest,1,a,1.0,0.4,0.8\n");
        let s = read_weight_series(&text).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].label, "deepchest/a");
        assert_eq!(s[0].points, vec![(0.0, 1.1), (1.0, 1.0)]);
        assert!(read_weight_series("strategy,epoch\nx,1\n").is_err());
        assert!(read_weight_series(&format!("{WEIGHTS_HEADER}\nd,zero,a,1,1,1\n")).is_err());
    }
}
