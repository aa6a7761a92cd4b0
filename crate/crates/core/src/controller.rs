//! Gradient-free task weighting.
//!
//! Weights start from single-task accuracies, `w = 1 + (1 - acc) * init_scale`,
//! and are then adjusted once per epoch from the tasks' training accuracies:
//! a task below the cross-task mean accuracy has its weight multiplied by
//! `alpha` (capped at `w_max`), every other task has it divided by `beta`.
//!
//! Everything here is a pure function of its inputs.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::metrics;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("no tasks given")]
    EmptyTasks,
    #[error("{what} {value} at task {index} is outside [0, 1]")]
    OutOfRange {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("length mismatch: {expected} tasks expected, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-finite value {value} at task {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("invalid weight config: {0}")]
    InvalidConfig(String),
    #[error("weight {value} at task {index} violates the configured bounds")]
    InvalidWeight { index: usize, value: f64 },
}

/// Knobs of the update rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightConfig {
    /// Multiplier applied to tasks below the mean accuracy.
    pub alpha: f64,
    /// Divisor applied to tasks at or above the mean accuracy.
    pub beta: f64,
    /// Weight ceiling.
    pub w_max: f64,
    /// Scale of the `(1 - acc)` initialization term.
    pub init_scale: f64,
    /// Optional weight floor, strictly inside (0, 1).
    pub w_floor: Option<f64>,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            alpha: 1.1,
            beta: 1.05,
            w_max: 5.0,
            init_scale: 0.5,
            w_floor: None,
        }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<(), ControllerError> {
        let bad = |msg: String| Err(ControllerError::InvalidConfig(msg));
        let all = [self.alpha, self.beta, self.w_max, self.init_scale];
        if all.iter().any(|v| !v.is_finite()) {
            return bad(format!("non-finite parameter in {self:?}"));
        }
        if !(self.alpha > 1.0) {
            return bad(format!("alpha must exceed 1, got {}", self.alpha));
        }
        if !(self.beta > 1.0) {
            return bad(format!("beta must exceed 1, got {}", self.beta));
        }
        if !(self.init_scale > 0.0) {
            return bad(format!("init_scale must be positive, got {}", self.init_scale));
        }
        if !(self.w_max >= 1.0 + self.init_scale) {
            return bad(format!(
                "w_max must be at least 1 + init_scale = {}, got {}",
                1.0 + self.init_scale,
                self.w_max
            ));
        }
        if let Some(f) = self.w_floor {
            if !(f > 0.0 && f < 1.0) {
                return bad(format!("w_floor must lie in (0, 1), got {f}"));
            }
        }
        Ok(())
    }

    fn clamp_floor(&self, w: f64) -> f64 {
        match self.w_floor {
            Some(f) => w.max(f),
            None => w,
        }
    }
}

/// Per-task loss weights, in task order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Wraps raw weights after checking them against `cfg`'s bounds.
    pub fn new(weights: Vec<f64>, cfg: &WeightConfig) -> Result<Self, ControllerError> {
        if weights.is_empty() {
            return Err(ControllerError::EmptyTasks);
        }
        let lo = cfg.w_floor.unwrap_or(0.0);
        for (index, &value) in weights.iter().enumerate() {
            let ok = value.is_finite()
                && value > 0.0
                && value <= cfg.w_max
                && (cfg.w_floor.is_none() || value >= lo);
            if !ok {
                return Err(ControllerError::InvalidWeight { index, value });
            }
        }
        Ok(Self(weights))
    }

    /// Wraps raw weights without bounds checks. Used for arbitrary
    /// nonnegative loss multipliers, e.g. in gradient tests.
    pub fn from_raw(weights: Vec<f64>) -> Self {
        Self(weights)
    }

    pub fn ones(n_tasks: usize) -> Self {
        Self(vec![1.0; n_tasks])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.iter().map(|w| w * c).collect())
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Weighting strategy of an MTL run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Accuracy-driven initialization plus per-epoch updates.
    Deepchest,
    /// All weights fixed at 1.
    Uniform,
    /// Accuracy-driven initialization, never updated.
    StaticInit,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [
        StrategyKind::Deepchest,
        StrategyKind::Uniform,
        StrategyKind::StaticInit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Deepchest => "deepchest",
            StrategyKind::Uniform => "uniform",
            StrategyKind::StaticInit => "static_init",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

fn check_accuracies(acc: &[f64]) -> Result<(), ControllerError> {
    if acc.is_empty() {
        return Err(ControllerError::EmptyTasks);
    }
    for (index, &value) in acc.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(ControllerError::OutOfRange {
                what: "accuracy",
                index,
                value,
            });
        }
    }
    Ok(())
}

/// Initial weights from single-task accuracies: `1 + (1 - acc) * init_scale`.
pub fn init_weights(stl_acc: &[f64], cfg: &WeightConfig) -> Result<WeightVector, ControllerError> {
    cfg.validate()?;
    check_accuracies(stl_acc)?;
    Ok(WeightVector(
        stl_acc
            .iter()
            .map(|a| 1.0 + (1.0 - a) * cfg.init_scale)
            .collect(),
    ))
}

/// One epoch-end update. Ties with the mean accuracy take the decay branch.
pub fn update_weights(
    w: &WeightVector,
    train_acc: &[f64],
    cfg: &WeightConfig,
) -> Result<WeightVector, ControllerError> {
    cfg.validate()?;
    if w.len() != train_acc.len() {
        return Err(ControllerError::LengthMismatch {
            expected: w.len(),
            actual: train_acc.len(),
        });
    }
    check_accuracies(train_acc)?;
    let avg = metrics::average_accuracy(train_acc).map_err(|_| ControllerError::EmptyTasks)?;
    let next = w
        .0
        .iter()
        .zip(train_acc)
        .map(|(&wt, &at)| {
            let raw = if at < avg {
                (wt * cfg.alpha).min(cfg.w_max)
            } else {
                wt / cfg.beta
            };
            cfg.clamp_floor(raw)
        })
        .collect();
    Ok(WeightVector(next))
}

/// `sum_t w_t * L_t`, accumulated in task order.
pub fn weighted_total_loss(w: &WeightVector, losses: &[f64]) -> Result<f64, ControllerError> {
    if w.is_empty() || losses.is_empty() {
        return Err(ControllerError::EmptyTasks);
    }
    if w.len() != losses.len() {
        return Err(ControllerError::LengthMismatch {
            expected: w.len(),
            actual: losses.len(),
        });
    }
    let mut total = 0.0;
    for (index, (&wt, &lt)) in w.0.iter().zip(losses).enumerate() {
        if !lt.is_finite() {
            return Err(ControllerError::NonFinite { index, value: lt });
        }
        if lt < 0.0 {
            return Err(ControllerError::OutOfRange {
                what: "loss",
                index,
                value: lt,
            });
        }
        total += wt * lt;
    }
    Ok(total)
}

/// Weights for the next epoch under `strategy`.
pub fn weights_for_epoch(
    strategy: StrategyKind,
    init: &WeightVector,
    prev: &WeightVector,
    train_acc: &[f64],
    cfg: &WeightConfig,
) -> Result<WeightVector, ControllerError> {
    match strategy {
        StrategyKind::Deepchest => update_weights(prev, train_acc, cfg),
        StrategyKind::Uniform => {
            if prev.len() != train_acc.len() {
                return Err(ControllerError::LengthMismatch {
                    expected: prev.len(),
                    actual: train_acc.len(),
                });
            }
            check_accuracies(train_acc)?;
            Ok(WeightVector::ones(prev.len()))
        }
        StrategyKind::StaticInit => {
            if init.len() != train_acc.len() {
                return Err(ControllerError::LengthMismatch {
                    expected: init.len(),
                    actual: train_acc.len(),
                });
            }
            check_accuracies(train_acc)?;
            Ok(init.clone())
        }
    }
}

/// Weights for the first epoch under `strategy`.
pub fn initial_weights(
    strategy: StrategyKind,
    stl_acc: &[f64],
    cfg: &WeightConfig,
) -> Result<WeightVector, ControllerError> {
    match strategy {
        StrategyKind::Uniform => {
            check_accuracies(stl_acc)?;
            Ok(WeightVector::ones(stl_acc.len()))
        }
        StrategyKind::Deepchest | StrategyKind::StaticInit => init_weights(stl_acc, cfg),
    }
}
