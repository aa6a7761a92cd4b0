//! Multi-task binary datasets: synthetic generation, CSV I/O, splitting and
//! batching.
//!
//! CSV layout: UTF-8, comma separated, LF line endings, no quoting. The
//! header names feature columns `x_<i>` and label columns `y_<task>`;
//! features are decimal floats and labels the literals `0` or `1`.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::numfmt::sig9;
use crate::rng::{self, Purpose};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("bad dimension: {0}")]
    BadDimension(String),
    #[error("bad task profile {index}: {reason}")]
    BadProfile { index: usize, reason: String },
    #[error("value {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("parse error at line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("bad label `{value}` at line {line}")]
    BadLabel { line: usize, value: String },
    #[error("train fraction must lie in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("need at least 2 samples to split, got {0}")]
    TooFewSamples(usize),
    #[error("batch size must be at least 1")]
    BadBatchSize,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Feature matrix plus one binary label column per task.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTaskDataset {
    pub features: Matrix,
    pub labels: Matrix<u8>,
    pub task_names: Vec<String>,
}

impl MultiTaskDataset {
    pub fn new(features: Matrix, labels: Matrix<u8>, task_names: Vec<String>) -> Result<Self, DataError> {
        if features.rows() != labels.rows() {
            return Err(DataError::BadDimension(format!(
                "{} feature rows vs {} label rows",
                features.rows(),
                labels.rows()
            )));
        }
        if task_names.len() != labels.cols() {
            return Err(DataError::BadDimension(format!(
                "{} task names for {} label columns",
                task_names.len(),
                labels.cols()
            )));
        }
        if let Some(v) = labels.as_slice().iter().find(|&&v| v > 1) {
            return Err(DataError::BadLabel {
                line: 0,
                value: v.to_string(),
            });
        }
        if let Some(v) = features.as_slice().iter().find(|v| !v.is_finite()) {
            return Err(DataError::BadDimension(format!("non-finite feature {v}")));
        }
        Ok(Self {
            features,
            labels,
            task_names,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn n_tasks(&self) -> usize {
        self.labels.cols()
    }

    /// Rows `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(idx),
            labels: self.labels.select_rows(idx),
            task_names: self.task_names.clone(),
        }
    }

    /// The same samples restricted to one task.
    pub fn single_task(&self, task: usize) -> Self {
        Self {
            features: self.features.clone(),
            labels: self.labels.select_column(task),
            task_names: vec![self.task_names[task].clone()],
        }
    }

    pub fn positive_rates(&self) -> Vec<f64> {
        let n = self.n_samples().max(1) as f64;
        (0..self.n_tasks())
            .map(|t| self.labels.column(t).iter().filter(|&&y| y == 1).count() as f64 / n)
            .collect()
    }
}

/// Difficulty and imbalance of one synthetic task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskProfile {
    /// Separability; larger is easier.
    pub margin: f64,
    pub positive_rate: f64,
    /// Probability of flipping each label.
    #[serde(default)]
    pub label_noise: f64,
}

impl TaskProfile {
    pub fn validate(&self, index: usize) -> Result<(), DataError> {
        let bad = |reason: String| Err(DataError::BadProfile { index, reason });
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad(format!("margin must be positive, got {}", self.margin));
        }
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return bad(format!("positive_rate must lie in (0, 1), got {}", self.positive_rate));
        }
        if !(self.label_noise >= 0.0 && self.label_noise < 0.5) {
            return bad(format!("label_noise must lie in [0, 0.5), got {}", self.label_noise));
        }
        Ok(())
    }
}

/// Generates `n` samples of `d` standard-normal features and one label
/// column per profile.
///
/// Task `t` projects each sample on a random unit direction, adds Gaussian
/// noise with standard deviation `1 / margin` and labels the sample positive
/// when the result exceeds the quantile that yields `positive_rate`. Labels
/// are then flipped independently with probability `label_noise`.
pub fn generate_synthetic(
    n: usize,
    d: usize,
    profiles: &[TaskProfile],
    seed: u64,
) -> Result<MultiTaskDataset, DataError> {
    generate_synthetic_related(n, d, profiles, None, seed)
}

/// Like [`generate_synthetic`], with every task direction drawn from one
/// shared random subspace of dimension `latent_rank` (tasks are then
/// related). `None` draws directions from the full feature space.
pub fn generate_synthetic_related(
    n: usize,
    d: usize,
    profiles: &[TaskProfile],
    latent_rank: Option<usize>,
    seed: u64,
) -> Result<MultiTaskDataset, DataError> {
    if n == 0 || d == 0 {
        return Err(DataError::BadDimension(format!("n = {n}, d = {d}; both must be >= 1")));
    }
    if profiles.is_empty() {
        return Err(DataError::BadDimension("at least one task profile required".into()));
    }
    if let Some(k) = latent_rank {
        if k == 0 || k > d {
            return Err(DataError::BadDimension(format!("latent_rank {k} must lie in 1..={d}")));
        }
    }
    for (i, p) in profiles.iter().enumerate() {
        p.validate(i)?;
    }

    let mut frng = rng::stream(seed, Purpose::Data, 0);
    let data: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut frng)).collect();
    let features = Matrix::from_vec(n, d, data).expect("sized above");

    let basis: Option<Vec<Vec<f64>>> = latent_rank.map(|k| {
        let mut brng = rng::stream(seed, Purpose::Data, u64::MAX);
        (0..k).map(|_| gaussian_vec(&mut brng, d)).collect()
    });

    let std_normal = Normal::standard();
    let mut labels = Matrix::<u8>::zeros(n, profiles.len());
    for (t, p) in profiles.iter().enumerate() {
        let mut trng = rng::stream(seed, Purpose::Data, 1 + t as u64);
        let mut dir = match &basis {
            None => gaussian_vec(&mut trng, d),
            Some(b) => {
                let coef = gaussian_vec(&mut trng, b.len());
                let mut v = vec![0.0; d];
                for (c, bv) in coef.iter().zip(b) {
                    for (vi, &bi) in v.iter_mut().zip(bv) {
                        *vi += c * bi;
                    }
                }
                v
            }
        };
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|v| *v /= norm);
        // Projection + noise is N(0, 1 + 1/margin^2).
        let noise_sd = 1.0 / p.margin;
        let threshold = (1.0 + noise_sd * noise_sd).sqrt() * std_normal.inverse_cdf(1.0 - p.positive_rate);
        for r in 0..n {
            let proj: f64 = features.row(r).iter().zip(&dir).map(|(x, w)| x * w).sum();
            let eta: f64 = StandardNormal.sample(&mut trng);
            let mut y = proj + noise_sd * eta > threshold;
            let flip: f64 = trng.random();
            if flip < p.label_noise {
                y = !y;
            }
            labels.set(r, t, u8::from(y));
        }
    }
    let names = (0..profiles.len()).map(|t| format!("task{t}")).collect();
    MultiTaskDataset::new(features, labels, names)
}

fn gaussian_vec<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

/// Maps values in `[0, 1]` to `[-1, 1]` via `(x - 0.5) / 0.5`.
pub fn normalize_pixels(x: &[f64]) -> Result<Vec<f64>, DataError> {
    x.iter()
        .map(|&v| {
            if (0.0..=1.0).contains(&v) {
                Ok((v - 0.5) / 0.5)
            } else {
                Err(DataError::OutOfRange(v))
            }
        })
        .collect()
}

/// Serializes a dataset in the CSV layout described in the module docs.
pub fn to_csv_string(ds: &MultiTaskDataset) -> String {
    let mut header: Vec<String> = (0..ds.n_features()).map(|i| format!("x_{i}")).collect();
    header.extend(ds.task_names.iter().map(|n| format!("y_{n}")));
    let mut out = header.join(",");
    out.push('\n');
    for r in 0..ds.n_samples() {
        let mut fields: Vec<String> = ds.features.row(r).iter().map(|&v| sig9(v)).collect();
        fields.extend(ds.labels.row(r).iter().map(|y| y.to_string()));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(ds: &MultiTaskDataset, path: &Path) -> Result<(), DataError> {
    let mut f = fs::File::create(path)?;
    f.write_all(to_csv_string(ds).as_bytes())?;
    Ok(())
}

pub fn load_csv(path: &Path) -> Result<MultiTaskDataset, DataError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(DataError::FileNotFound(path.display().to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    parse_csv(&text)
}

/// Parses dataset CSV text. Line numbers in errors are 1-based and count
/// the header.
pub fn parse_csv(text: &str) -> Result<MultiTaskDataset, DataError> {
    let mut lines = text.split('\n').enumerate().map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)));
    let (_, header) = lines.next().ok_or(DataError::ParseError {
        line: 1,
        reason: "empty file".into(),
    })?;
    let mut feature_cols = Vec::new();
    let mut label_cols = Vec::new();
    let mut task_names = Vec::new();
    for (i, col) in header.split(',').enumerate() {
        if col.starts_with("x_") {
            feature_cols.push(i);
        } else if let Some(name) = col.strip_prefix("y_") {
            if name.is_empty() {
                return Err(DataError::ParseError {
                    line: 1,
                    reason: format!("label column {i} has an empty task name"),
                });
            }
            label_cols.push(i);
            task_names.push(name.to_string());
        } else {
            return Err(DataError::ParseError {
                line: 1,
                reason: format!("column `{col}` lacks an x_ or y_ prefix"),
            });
        }
    }
    if feature_cols.is_empty() || label_cols.is_empty() {
        return Err(DataError::ParseError {
            line: 1,
            reason: "need at least one x_ and one y_ column".into(),
        });
    }
    let width = feature_cols.len() + label_cols.len();

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    let body: Vec<(usize, &str)> = lines.collect();
    let last_data = body.iter().rposition(|(_, l)| !l.is_empty());
    for (pos, &(line, content)) in body.iter().enumerate() {
        if last_data.is_none_or(|last| pos > last) {
            break;
        }
        let fields: Vec<&str> = content.split(',').collect();
        if fields.len() != width {
            return Err(DataError::ParseError {
                line,
                reason: format!("expected {width} fields, found {}", fields.len()),
            });
        }
        for &c in &feature_cols {
            let v: f64 = fields[c].trim().parse().map_err(|_| DataError::ParseError {
                line,
                reason: format!("feature `{}` is not a number", fields[c]),
            })?;
            if !v.is_finite() {
                return Err(DataError::ParseError {
                    line,
                    reason: format!("feature `{}` is not finite", fields[c]),
                });
            }
            features.push(v);
        }
        for &c in &label_cols {
            match fields[c] {
                "0" => labels.push(0u8),
                "1" => labels.push(1u8),
                other => {
                    return Err(DataError::BadLabel {
                        line,
                        value: other.to_string(),
                    })
                }
            }
        }
        rows += 1;
    }
    let features = Matrix::from_vec(rows, feature_cols.len(), features).expect("row-wise fill");
    let labels = Matrix::from_vec(rows, label_cols.len(), labels).expect("row-wise fill");
    MultiTaskDataset::new(features, labels, task_names)
}

/// Deterministic shuffle-split into (train, validation).
pub fn split(
    ds: &MultiTaskDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(MultiTaskDataset, MultiTaskDataset), DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::BadFraction(train_fraction));
    }
    let n = ds.n_samples();
    if n < 2 {
        return Err(DataError::TooFewSamples(n));
    }
    let (train_idx, val_idx) = split_indices(n, train_fraction, seed);
    Ok((ds.subset(&train_idx), ds.subset(&val_idx)))
}

/// The index sets used by [`split`]; both are non-empty for `n >= 2`.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, Purpose::Split, 0));
    let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
    let val = idx.split_off(n_train);
    (idx, val)
}

/// A seeded permutation of `0..n` for the given epoch, chunked into blocks
/// of `batch_size` (the last block may be shorter).
pub fn batches(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>, DataError> {
    if batch_size == 0 {
        return Err(DataError::BadBatchSize);
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, Purpose::Batches, epoch));
    Ok(idx.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(margin: f64, rate: f64) -> TaskProfile {
        TaskProfile {
            margin,
            positive_rate: rate,
            label_noise: 0.0,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let p = [profile(2.0, 0.3), profile(0.5, 0.1)];
        let a = generate_synthetic(200, 5, &p, 3).unwrap();
        let b = generate_synthetic(200, 5, &p, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_synthetic(200, 5, &p, 4).unwrap());
        assert_eq!(a.task_names, vec!["task0", "task1"]);
    }

    #[test]
    fn generation_rejects_bad_inputs() {
        let p = [profile(1.0, 0.5)];
        assert!(matches!(generate_synthetic(0, 3, &p, 0), Err(DataError::BadDimension(_))));
        assert!(matches!(generate_synthetic(3, 0, &p, 0), Err(DataError::BadDimension(_))));
        assert!(matches!(generate_synthetic(3, 3, &[], 0), Err(DataError::BadDimension(_))));
        for bad in [profile(0.0, 0.5), profile(1.0, 0.0), profile(1.0, 1.0)] {
            assert!(matches!(generate_synthetic(3, 3, &[bad], 0), Err(DataError::BadProfile { .. })));
        }
        let noisy = TaskProfile {
            label_noise: 0.5,
            ..profile(1.0, 0.5)
        };
        assert!(matches!(generate_synthetic(3, 3, &[noisy], 0), Err(DataError::BadProfile { .. })));
        assert!(generate_synthetic_related(3, 3, &p, Some(4), 0).is_err());
    }

    #[test]
    fn positive_rate_concentrates() {
        for seed in 0..10 {
            let ds = generate_synthetic(10_000, 4, &[profile(1.0, 0.1), profile(3.0, 0.4)], seed).unwrap();
            let rates = ds.positive_rates();
            assert!((rates[0] - 0.1).abs() < 0.02, "seed {seed}: {}", rates[0]);
            assert!((rates[1] - 0.4).abs() < 0.02, "seed {seed}: {}", rates[1]);
        }
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_pixels(&[0.5, 1.0, 0.0]).unwrap(), vec![0.0, 1.0, -1.0]);
        assert!(matches!(normalize_pixels(&[1.01]), Err(DataError::OutOfRange(_))));
        assert!(matches!(normalize_pixels(&[f64::NAN]), Err(DataError::OutOfRange(_))));
    }

    #[test]
    fn csv_minimal_and_errors() {
        let ds = parse_csv("x_0,x_1,y_a\n0.5,1.5,1\n-2,3e-2,0\n").unwrap();
        assert_eq!((ds.n_samples(), ds.n_features(), ds.n_tasks()), (2, 2, 1));
        assert_eq!(ds.task_names, vec!["a"]);
        assert_eq!(ds.features.get(1, 1), 0.03);

        match parse_csv("x_0,y_a\n0.1,1\n0.2,2\n") {
            Err(DataError::BadLabel { line, value }) => assert_eq!((line, value.as_str()), (3, "2")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_csv("x_0,y_a\n0.1\n"),
            Err(DataError::ParseError { line: 2, .. })
        ));
        assert!(matches!(
            parse_csv("x_0,y_a\nabc,1\n"),
            Err(DataError::ParseError { line: 2, .. })
        ));
        assert!(matches!(
            parse_csv("x_0,y_a\n0.1,1\n\n0.2,0\n"),
            Err(DataError::ParseError { line: 3, .. })
        ));
        assert!(matches!(parse_csv("a,y_b\n1,1\n"), Err(DataError::ParseError { line: 1, .. })));
        assert!(matches!(
            load_csv(Path::new("/definitely/not/here.csv")),
            Err(DataError::FileNotFound(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let ds = generate_synthetic(50, 3, &[profile(1.0, 0.3), profile(2.0, 0.6)], 9).unwrap();
        let back = parse_csv(&to_csv_string(&ds)).unwrap();
        assert_eq!(back.labels, ds.labels);
        assert_eq!(back.task_names, ds.task_names);
        for (a, b) in ds.features.as_slice().iter().zip(back.features.as_slice()) {
            assert!((a - b).abs() <= 1e-8 * a.abs().max(1e-300), "{a} vs {b}");
        }
    }

    #[test]
    fn split_examples() {
        let ds = generate_synthetic(10, 2, &[profile(1.0, 0.5)], 0).unwrap();
        let (tr, va) = split(&ds, 0.8, 1).unwrap();
        assert_eq!((tr.n_samples(), va.n_samples()), (8, 2));
        let (a, b) = split_indices(10, 0.8, 1);
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(split_indices(10, 0.8, 1), (a, b));
        assert!(matches!(split(&ds, 1.0, 0), Err(DataError::BadFraction(_))));
        assert!(matches!(split(&ds, 0.0, 0), Err(DataError::BadFraction(_))));
        let one = ds.subset(&[0]);
        assert!(matches!(split(&one, 0.5, 0), Err(DataError::TooFewSamples(1))));
        let (a, b) = split_indices(2, 0.99, 0);
        assert_eq!((a.len(), b.len()), (1, 1));
    }

    #[test]
    fn batch_examples() {
        let b = batches(5, 2, 0, 0).unwrap();
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![2, 2, 1]);
        let mut flat: Vec<usize> = b.concat();
        flat.sort_unstable();
        assert_eq!(flat, vec![0, 1, 2, 3, 4]);
        assert_eq!(batches(50, 7, 3, 2).unwrap(), batches(50, 7, 3, 2).unwrap());
        assert_ne!(batches(50, 7, 3, 2).unwrap(), batches(50, 7, 3, 3).unwrap());
        assert!(matches!(batches(5, 0, 0, 0), Err(DataError::BadBatchSize)));
    }
}
