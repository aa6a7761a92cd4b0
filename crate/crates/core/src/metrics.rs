//! Accuracy and relative-loss (Δm) metrics.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("empty input")]
    EmptyInput,
    #[error("no tasks given")]
    EmptyTasks,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("baseline loss must be positive, got {0}")]
    ZeroBaseline(f64),
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("value {0} outside its admissible range")]
    OutOfRange(f64),
}

/// Fraction of samples where `prob >= threshold` agrees with the label.
pub fn binary_accuracy(probs: &[f64], labels: &[u8], threshold: f64) -> Result<f64, MetricsError> {
    if probs.is_empty() || labels.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if probs.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            left: probs.len(),
            right: labels.len(),
        });
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(MetricsError::OutOfRange(threshold));
    }
    Ok(count_correct(probs, labels, threshold) as f64 / probs.len() as f64)
}

/// Number of samples classified correctly at `threshold`; ties are positive.
pub(crate) fn count_correct(probs: &[f64], labels: &[u8], threshold: f64) -> usize {
    probs
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| (p >= threshold) == (y == 1))
        .count()
}

/// Mean accuracy across tasks.
///
/// Summation runs over the values in ascending order and the result is
/// clamped to `[min, max]`, so the mean depends only on the multiset of
/// inputs and equals the common value exactly when all inputs agree.
pub fn average_accuracy(acc: &[f64]) -> Result<f64, MetricsError> {
    if acc.is_empty() {
        return Err(MetricsError::EmptyTasks);
    }
    let mut sorted = acc.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = sorted[0];
    let hi = sorted[sorted.len() - 1];
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    Ok(mean.clamp(lo, hi))
}

/// Relative loss difference `(mtl - stl) / stl`; negative means MTL is better.
pub fn delta_m_per_task(mtl_loss: f64, stl_loss: f64) -> Result<f64, MetricsError> {
    for v in [mtl_loss, stl_loss] {
        if !v.is_finite() {
            return Err(MetricsError::NonFinite(v));
        }
    }
    if stl_loss <= 0.0 {
        return Err(MetricsError::ZeroBaseline(stl_loss));
    }
    if mtl_loss < 0.0 {
        return Err(MetricsError::OutOfRange(mtl_loss));
    }
    Ok((mtl_loss - stl_loss) / stl_loss)
}

/// Mean of per-task Δm values.
pub fn delta_m_total(per_task: &[f64]) -> Result<f64, MetricsError> {
    if per_task.is_empty() {
        return Err(MetricsError::EmptyTasks);
    }
    if let Some(&bad) = per_task.iter().find(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite(bad));
    }
    Ok(per_task.iter().sum::<f64>() / per_task.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaMRow {
    pub task: String,
    pub stl_loss: f64,
    pub mtl_loss: f64,
    pub delta_m: f64,
}

/// Per-task and mean Δm of an MTL run against its STL baselines.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaMReport {
    pub per_task: Vec<DeltaMRow>,
    pub total: f64,
}

impl DeltaMReport {
    /// Builds the report from `(task, stl_loss, mtl_loss)` triples.
    pub fn from_losses<S: Into<String>>(
        rows: impl IntoIterator<Item = (S, f64, f64)>,
    ) -> Result<Self, MetricsError> {
        let per_task = rows
            .into_iter()
            .map(|(task, stl_loss, mtl_loss)| {
                Ok(DeltaMRow {
                    task: task.into(),
                    stl_loss,
                    mtl_loss,
                    delta_m: delta_m_per_task(mtl_loss, stl_loss)?,
                })
            })
            .collect::<Result<Vec<_>, MetricsError>>()?;
        let deltas: Vec<f64> = per_task.iter().map(|r| r.delta_m).collect();
        let total = delta_m_total(&deltas)?;
        Ok(Self { per_task, total })
    }
}

/// Per-task record for one epoch: the weight used, mean training loss and
/// running training accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaskEpoch {
    pub weight: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub per_task: Vec<TaskEpoch>,
}

impl EpochStats {
    pub fn weights(&self) -> Vec<f64> {
        self.per_task.iter().map(|t| t.weight).collect()
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.per_task.iter().map(|t| t.train_accuracy).collect()
    }
}
