//! Single-task baselines, the multi-task epoch loop, and the
//! STL-vs-MTL comparison.
//!
//! Every run splits the dataset with `hp.seed`, so all runs of one
//! comparison see the same train/validation partition. Reported losses and
//! accuracies are measured on the validation split.

use std::time::{Duration, Instant};

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{self, ControllerError, StrategyKind, WeightConfig, WeightVector};
use crate::data::{self, DataError, MultiTaskDataset};
use crate::matrix::Matrix;
use crate::metrics::{self, DeltaMReport, EpochStats, MetricsError, TaskEpoch};
use crate::model::{self, ModelError, ModelParams};
use crate::par::{self, Exec};
use crate::rng;

/// Decision threshold on sigmoid probabilities.
pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("training diverged at epoch {epoch}: non-finite loss for task {task}")]
    Diverged { epoch: usize, task: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden_dims: Vec<usize>,
    pub seed: u64,
    /// Fraction of samples used for training; the rest is validation.
    pub train_fraction: f64,
    pub weight_cfg: WeightConfig,
    pub strategy: StrategyKind,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.1,
            hidden_dims: vec![32],
            seed: 0,
            train_fraction: 0.8,
            weight_cfg: WeightConfig::default(),
            strategy: StrategyKind::Deepchest,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidHyperparams(m));
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        // lr = 0 is accepted: it freezes the parameters, which is useful for
        // harness checks.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction must lie in (0, 1), got {}", self.train_fraction));
        }
        self.weight_cfg.validate()?;
        Ok(())
    }
}

/// Everything recorded about one training run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunLog {
    pub strategy: StrategyKind,
    pub epoch_stats: Vec<EpochStats>,
    pub final_val_losses: Vec<f64>,
    pub final_val_accuracies: Vec<f64>,
    /// The single-task accuracies an MTL run was initialized from.
    pub stl_accuracies: Option<Vec<f64>>,
    /// Weights produced by the update after the last epoch; never used for
    /// training.
    pub final_weights: Vec<f64>,
}

/// Wall-clock split of a run. Not part of [`RunLog`] so that logs stay
/// reproducible.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunTiming {
    pub total: Duration,
    pub controller: Duration,
}

impl RunTiming {
    pub fn controller_fraction(&self) -> f64 {
        if self.total.is_zero() {
            0.0
        } else {
            self.controller.as_secs_f64() / self.total.as_secs_f64()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StlResult {
    pub accuracy: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub task_names: Vec<String>,
    pub stl: Vec<StlResult>,
    pub mtl_runs: Vec<RunLog>,
    /// Δm of the deepchest run against STL; `None` if deepchest was not run.
    pub delta_m: Option<DeltaMReport>,
    #[serde(skip)]
    pub timings: Vec<RunTiming>,
}

impl ComparisonReport {
    pub fn run(&self, strategy: StrategyKind) -> Option<&RunLog> {
        self.mtl_runs.iter().find(|r| r.strategy == strategy)
    }
}

struct RunOutput {
    log: RunLog,
    params: ModelParams,
    timing: RunTiming,
}

fn split(ds: &MultiTaskDataset, hp: &Hyperparams) -> Result<(MultiTaskDataset, MultiTaskDataset), TrainError> {
    Ok(data::split(ds, hp.train_fraction, hp.seed)?)
}

/// Validation losses and accuracies of `params` on `ds`.
pub fn evaluate(params: &ModelParams, ds: &MultiTaskDataset, exec: Exec) -> Result<(Vec<f64>, Vec<f64>), TrainError> {
    let logits = model::predict_logits(params, &ds.features, exec)?;
    let losses = model::task_losses(&logits, &ds.labels)?;
    let accs = (0..ds.n_tasks())
        .map(|t| {
            let probs: Vec<f64> = logits.column(t).into_iter().map(model::sigmoid).collect();
            metrics::binary_accuracy(&probs, &ds.labels.column(t), THRESHOLD)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((losses, accs))
}

fn train_loop(
    train: &MultiTaskDataset,
    val: &MultiTaskDataset,
    hp: &Hyperparams,
    strategy: StrategyKind,
    stl_acc: Option<&[f64]>,
    run_seed: u64,
    exec: Exec,
) -> Result<RunOutput, TrainError> {
    hp.validate()?;
    let started = Instant::now();
    let mut controller_time = Duration::ZERO;
    let n_tasks = train.n_tasks();
    let n = train.n_samples();
    let cfg = &hp.weight_cfg;

    let mut params = model::init_params(train.n_features(), &hp.hidden_dims, n_tasks, run_seed)?;
    let t0 = Instant::now();
    let init = match stl_acc {
        Some(acc) => controller::initial_weights(strategy, acc, cfg)?,
        None => WeightVector::ones(n_tasks),
    };
    controller_time += t0.elapsed();
    let mut weights = init.clone();
    let mut epoch_stats = Vec::with_capacity(hp.epochs);

    for epoch in 0..hp.epochs {
        let mut loss_sums = vec![0.0; n_tasks];
        let mut correct = vec![0usize; n_tasks];
        for block in data::batches(n, hp.batch_size, run_seed, epoch as u64)? {
            let xb = train.features.select_rows(&block);
            let yb = train.labels.select_rows(&block);
            let (logits, cache) = model::forward(&params, &xb)?;
            let losses = model::task_losses(&logits, &yb)?;
            if let Some(task) = losses.iter().position(|l| !l.is_finite()) {
                return Err(TrainError::Diverged { epoch, task });
            }
            for t in 0..n_tasks {
                loss_sums[t] += losses[t] * block.len() as f64;
                correct[t] += count_column(&cache.probs, &yb, t);
            }
            let grads = model::backward(&params, &cache, &yb, &weights)?;
            params = model::sgd_step(&params, &grads, hp.learning_rate)?;
        }
        if !params.is_finite() {
            return Err(TrainError::Diverged { epoch, task: 0 });
        }
        let train_acc: Vec<f64> = correct.iter().map(|&c| c as f64 / n as f64).collect();
        epoch_stats.push(EpochStats {
            epoch,
            per_task: (0..n_tasks)
                .map(|t| TaskEpoch {
                    weight: weights[t],
                    train_loss: loss_sums[t] / n as f64,
                    train_accuracy: train_acc[t],
                })
                .collect(),
        });
        let t0 = Instant::now();
        weights = controller::weights_for_epoch(strategy, &init, &weights, &train_acc, cfg)?;
        controller_time += t0.elapsed();
        debug!("{strategy} epoch {epoch}: acc {train_acc:?} -> weights {:?}", weights.as_slice());
    }

    let (final_val_losses, final_val_accuracies) = evaluate(&params, val, exec)?;
    if let Some(task) = final_val_losses.iter().position(|l| !l.is_finite()) {
        return Err(TrainError::Diverged { epoch: hp.epochs, task });
    }
    Ok(RunOutput {
        log: RunLog {
            strategy,
            epoch_stats,
            final_val_losses,
            final_val_accuracies,
            stl_accuracies: stl_acc.map(<[f64]>::to_vec),
            final_weights: weights.into_vec(),
        },
        params,
        timing: RunTiming {
            total: started.elapsed(),
            controller: controller_time,
        },
    })
}

fn count_column(probs: &Matrix, labels: &Matrix<u8>, t: usize) -> usize {
    (0..probs.rows())
        .filter(|&r| (probs.get(r, t) >= THRESHOLD) == (labels.get(r, t) == 1))
        .count()
}

/// Trains a fresh single-head model on task `task_index` alone with weight 1
/// and returns its final validation accuracy and loss.
pub fn train_stl(
    ds: &MultiTaskDataset,
    task_index: usize,
    hp: &Hyperparams,
) -> Result<(f64, f64, RunLog), TrainError> {
    train_stl_with(ds, task_index, hp, Exec::default())
}

pub fn train_stl_with(
    ds: &MultiTaskDataset,
    task_index: usize,
    hp: &Hyperparams,
    exec: Exec,
) -> Result<(f64, f64, RunLog), TrainError> {
    if task_index >= ds.n_tasks() {
        return Err(TrainError::InvalidHyperparams(format!(
            "task index {task_index} out of range for {} tasks",
            ds.n_tasks()
        )));
    }
    let (train, val) = split(ds, hp)?;
    let out = train_loop(
        &train.single_task(task_index),
        &val.single_task(task_index),
        hp,
        StrategyKind::Uniform,
        None,
        rng::derive_seed(hp.seed, task_index as u64),
        exec,
    )?;
    Ok((out.log.final_val_accuracies[0], out.log.final_val_losses[0], out.log))
}

/// Multi-task run under `hp.strategy`, initialized from `stl_acc`.
pub fn train_mtl(ds: &MultiTaskDataset, hp: &Hyperparams, stl_acc: &[f64]) -> Result<RunLog, TrainError> {
    Ok(train_mtl_timed(ds, hp, stl_acc, Exec::default())?.0)
}

pub fn train_mtl_timed(
    ds: &MultiTaskDataset,
    hp: &Hyperparams,
    stl_acc: &[f64],
    exec: Exec,
) -> Result<(RunLog, RunTiming), TrainError> {
    let (log, _, timing) = train_mtl_full(ds, hp, stl_acc, exec)?;
    Ok((log, timing))
}

/// [`train_mtl`] also returning the trained parameters.
pub fn train_mtl_full(
    ds: &MultiTaskDataset,
    hp: &Hyperparams,
    stl_acc: &[f64],
    exec: Exec,
) -> Result<(RunLog, ModelParams, RunTiming), TrainError> {
    if stl_acc.len() != ds.n_tasks() {
        return Err(ControllerError::LengthMismatch {
            expected: ds.n_tasks(),
            actual: stl_acc.len(),
        }
        .into());
    }
    let (train, val) = split(ds, hp)?;
    let out = train_loop(&train, &val, hp, hp.strategy, Some(stl_acc), hp.seed, exec)?;
    Ok((out.log, out.params, out.timing))
}

/// STL for every task, then one MTL run per strategy in
/// [`StrategyKind::ALL`], and Δm of deepchest against STL.
pub fn run_comparison(ds: &MultiTaskDataset, hp: &Hyperparams) -> Result<ComparisonReport, TrainError> {
    run_comparison_with(ds, hp, &StrategyKind::ALL, Exec::default())
}

pub fn run_comparison_with(
    ds: &MultiTaskDataset,
    hp: &Hyperparams,
    strategies: &[StrategyKind],
    exec: Exec,
) -> Result<ComparisonReport, TrainError> {
    hp.validate()?;
    let stl = par::try_map_range(exec, ds.n_tasks(), |t| {
        train_stl_with(ds, t, hp, exec).map(|(accuracy, loss, _)| StlResult { accuracy, loss })
    })?;
    let stl_acc: Vec<f64> = stl.iter().map(|s| s.accuracy).collect();
    let runs = par::try_map_range(exec, strategies.len(), |i| {
        let hp_i = Hyperparams {
            strategy: strategies[i],
            ..hp.clone()
        };
        train_mtl_timed(ds, &hp_i, &stl_acc, exec)
    })?;
    let (mtl_runs, timings): (Vec<RunLog>, Vec<RunTiming>) = runs.into_iter().unzip();
    let delta_m = mtl_runs
        .iter()
        .find(|r| r.strategy == StrategyKind::Deepchest)
        .map(|run| {
            DeltaMReport::from_losses(
                ds.task_names
                    .iter()
                    .zip(&stl)
                    .zip(&run.final_val_losses)
                    .map(|((name, s), &mtl)| (name.clone(), s.loss, mtl)),
            )
        })
        .transpose()?;
    Ok(ComparisonReport {
        task_names: ds.task_names.clone(),
        stl,
        mtl_runs,
        delta_m,
        timings,
    })
}
