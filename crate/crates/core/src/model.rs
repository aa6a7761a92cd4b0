//! Hard-parameter-sharing network: a fully connected ReLU trunk shared by
//! all tasks and one logistic head per task.
//!
//! The heads are stored together as a single `hidden × T` linear layer whose
//! column `t` is task `t`'s head, so a head's gradient only ever sees its own
//! task's logits.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::controller::WeightVector;
use crate::matrix::Matrix;
use crate::par::{self, Exec};
use crate::rng::{self, Purpose};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bad dimension: {0}")]
    BadDimension(String),
    #[error("shape mismatch in {what}: expected {expected}, got {actual}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        actual: String,
    },
    #[error("label {value} at row {row}, task {task} is not 0 or 1")]
    BadLabel { row: usize, task: usize, value: u8 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn mismatch(what: &'static str, expected: impl ToString, actual: impl ToString) -> ModelError {
    ModelError::ShapeMismatch {
        what,
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}

/// Affine map `x W + b` with `W` stored as `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(input: usize, output: usize) -> Self {
        Self {
            weights: Matrix::zeros(input, output),
            bias: vec![0.0; output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.cols()
    }

    fn forward(&self, input: &Matrix) -> Matrix {
        let (n, din, dout) = (input.rows(), self.input_dim(), self.output_dim());
        let mut out = Matrix::zeros(n, dout);
        for r in 0..n {
            let x = input.row(r);
            let o = out.row_mut(r);
            o.copy_from_slice(&self.bias);
            for (k, &xk) in x.iter().enumerate().take(din) {
                let wrow = self.weights.row(k);
                for (oj, &wkj) in o.iter_mut().zip(wrow) {
                    *oj += xk * wkj;
                }
            }
        }
        out
    }

    /// Accumulates this layer's gradient from `delta` (d loss / d output)
    /// and returns d loss / d input when `want_input` is set.
    fn backward(&self, input: &Matrix, delta: &Matrix, grad: &mut Layer, want_input: bool) -> Option<Matrix> {
        let n = input.rows();
        for r in 0..n {
            let x = input.row(r);
            let d = delta.row(r);
            for (k, &xk) in x.iter().enumerate() {
                let g = grad.weights.row_mut(k);
                for (gkj, &dj) in g.iter_mut().zip(d) {
                    *gkj += xk * dj;
                }
            }
            for (gb, &dj) in grad.bias.iter_mut().zip(d) {
                *gb += dj;
            }
        }
        if !want_input {
            return None;
        }
        let mut dinput = Matrix::zeros(n, self.input_dim());
        for r in 0..n {
            let d = delta.row(r);
            let di = dinput.row_mut(r);
            for (k, dik) in di.iter_mut().enumerate() {
                let wrow = self.weights.row(k);
                let mut acc = 0.0;
                for (&wkj, &dj) in wrow.iter().zip(d) {
                    acc += dj * wkj;
                }
                *dik = acc;
            }
        }
        Some(dinput)
    }
}

/// Network parameters. Gradients share this type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub trunk: Vec<Layer>,
    /// Column `t` holds task `t`'s head.
    pub heads: Layer,
    pub seed: u64,
}

impl ModelParams {
    pub fn input_dim(&self) -> usize {
        self.trunk
            .first()
            .map_or(self.heads.input_dim(), Layer::input_dim)
    }

    pub fn hidden_dims(&self) -> Vec<usize> {
        self.trunk.iter().map(Layer::output_dim).collect()
    }

    pub fn n_tasks(&self) -> usize {
        self.heads.output_dim()
    }

    /// Same architecture with every parameter zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            trunk: self
                .trunk
                .iter()
                .map(|l| Layer::zeros(l.input_dim(), l.output_dim()))
                .collect(),
            heads: Layer::zeros(self.heads.input_dim(), self.heads.output_dim()),
            seed: self.seed,
        }
    }

    fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.trunk.iter().chain(std::iter::once(&self.heads))
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.trunk.iter_mut().chain(std::iter::once(&mut self.heads))
    }

    /// All parameters in declaration order: per layer (trunk first, heads
    /// last), the row-major weight matrix followed by the bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in self.layers() {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Overwrites all parameters from a flat vector in [`Self::to_flat`] order.
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), ModelError> {
        if flat.len() != self.param_count() {
            return Err(mismatch("flat parameters", self.param_count(), flat.len()));
        }
        let mut pos = 0;
        for l in self.layers_mut() {
            let w = l.weights.as_mut_slice();
            w.copy_from_slice(&flat[pos..pos + w.len()]);
            pos += w.len();
            let b = l.bias.as_mut_slice();
            b.copy_from_slice(&flat[pos..pos + b.len()]);
            pos += b.len();
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.trunk.len() == other.trunk.len()
            && self.layers().zip(other.layers()).all(|(a, b)| {
                a.input_dim() == b.input_dim() && a.output_dim() == b.output_dim()
            })
    }

    /// Mapping of every parameter through `f`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for l in out.layers_mut() {
            l.weights.as_mut_slice().iter_mut().for_each(|v| *v = f(*v));
            l.bias.iter_mut().for_each(|v| *v = f(*v));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers().all(|l| {
            l.weights.as_slice().iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        })
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the batch; `activations[l + 1]` is the ReLU
    /// output of trunk layer `l`.
    pub activations: Vec<Matrix>,
    /// Pre-activations of each trunk layer.
    pub pre_activations: Vec<Matrix>,
    pub logits: Matrix,
    pub probs: Matrix,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.logits.rows()
    }

    /// Trunk output fed to the heads.
    pub fn features(&self) -> &Matrix {
        self.activations.last().expect("cache holds at least the input")
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of a logit against a {0,1} label, in the form
/// `max(z, 0) - z y + ln(1 + exp(-|z|))`.
pub fn bce_with_logit(z: f64, y: u8) -> f64 {
    let y = f64::from(y);
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

pub fn init_params(
    input_dim: usize,
    hidden_dims: &[usize],
    n_tasks: usize,
    seed: u64,
) -> Result<ModelParams, ModelError> {
    if input_dim == 0 {
        return Err(ModelError::BadDimension("input_dim must be at least 1".into()));
    }
    if n_tasks == 0 {
        return Err(ModelError::BadDimension("n_tasks must be at least 1".into()));
    }
    if let Some(i) = hidden_dims.iter().position(|&h| h == 0) {
        return Err(ModelError::BadDimension(format!("hidden layer {i} has width 0")));
    }
    let mut rng = rng::stream(seed, Purpose::Params, 0);
    let mut layer = |din: usize, dout: usize| {
        let scale = 1.0 / (din as f64).sqrt();
        let data = (0..din * dout)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
            .collect();
        Layer {
            weights: Matrix::from_vec(din, dout, data).expect("sized above"),
            bias: vec![0.0; dout],
        }
    };
    let mut trunk = Vec::with_capacity(hidden_dims.len());
    let mut din = input_dim;
    for &h in hidden_dims {
        trunk.push(layer(din, h));
        din = h;
    }
    let heads = layer(din, n_tasks);
    Ok(ModelParams { trunk, heads, seed })
}

pub fn forward(params: &ModelParams, batch: &Matrix) -> Result<(Matrix, ForwardCache), ModelError> {
    if batch.rows() == 0 {
        return Err(mismatch("forward batch rows", ">= 1", 0));
    }
    if batch.cols() != params.input_dim() {
        return Err(mismatch("forward batch columns", params.input_dim(), batch.cols()));
    }
    let mut activations = Vec::with_capacity(params.trunk.len() + 1);
    let mut pre_activations = Vec::with_capacity(params.trunk.len());
    activations.push(batch.clone());
    for layer in &params.trunk {
        let z = layer.forward(activations.last().expect("non-empty"));
        let mut a = z.clone();
        a.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
        pre_activations.push(z);
        activations.push(a);
    }
    let logits = params.heads.forward(activations.last().expect("non-empty"));
    let mut probs = logits.clone();
    probs.as_mut_slice().iter_mut().for_each(|v| *v = sigmoid(*v));
    let cache = ForwardCache {
        activations,
        pre_activations,
        logits: logits.clone(),
        probs,
    };
    Ok((logits, cache))
}

/// Logits for a whole matrix of samples, evaluated in fixed row chunks.
/// Rows are independent, so the result does not depend on `exec`.
pub fn predict_logits(params: &ModelParams, x: &Matrix, exec: Exec) -> Result<Matrix, ModelError> {
    const CHUNK: usize = 256;
    if x.rows() == 0 {
        return Err(mismatch("predict rows", ">= 1", 0));
    }
    let n_chunks = x.rows().div_ceil(CHUNK);
    let parts = par::try_map_range(exec, n_chunks, |c| {
        let idx: Vec<usize> = (c * CHUNK..((c + 1) * CHUNK).min(x.rows())).collect();
        forward(params, &x.select_rows(&idx)).map(|(logits, _)| logits)
    })?;
    Ok(Matrix::vstack(&parts, params.n_tasks()))
}

fn check_labels(logits: &Matrix, labels: &Matrix<u8>) -> Result<(), ModelError> {
    if logits.rows() != labels.rows() || logits.cols() != labels.cols() {
        return Err(mismatch(
            "labels",
            format!("{}x{}", logits.rows(), logits.cols()),
            format!("{}x{}", labels.rows(), labels.cols()),
        ));
    }
    for row in 0..labels.rows() {
        for (task, &value) in labels.row(row).iter().enumerate() {
            if value > 1 {
                return Err(ModelError::BadLabel { row, task, value });
            }
        }
    }
    Ok(())
}

/// Per-task mean binary cross-entropy over the batch.
pub fn task_losses(logits: &Matrix, labels: &Matrix<u8>) -> Result<Vec<f64>, ModelError> {
    check_labels(logits, labels)?;
    if logits.rows() == 0 {
        return Err(mismatch("loss batch rows", ">= 1", 0));
    }
    let n = logits.rows() as f64;
    let mut sums = vec![0.0; logits.cols()];
    for r in 0..logits.rows() {
        for ((s, &z), &y) in sums.iter_mut().zip(logits.row(r)).zip(labels.row(r)) {
            *s += bce_with_logit(z, y);
        }
    }
    Ok(sums.into_iter().map(|s| s / n).collect())
}

/// Exact gradient of `sum_t w_t * task_losses_t` with respect to every
/// parameter.
pub fn backward(
    params: &ModelParams,
    cache: &ForwardCache,
    labels: &Matrix<u8>,
    weights: &WeightVector,
) -> Result<ModelParams, ModelError> {
    check_labels(&cache.logits, labels)?;
    if weights.len() != params.n_tasks() {
        return Err(mismatch("task weights", params.n_tasks(), weights.len()));
    }
    if cache.activations.len() != params.trunk.len() + 1 || cache.features().cols() != params.heads.input_dim() {
        return Err(mismatch(
            "forward cache",
            format!("{} trunk layers", params.trunk.len()),
            format!("{} cached layers", cache.activations.len().saturating_sub(1)),
        ));
    }
    let n = cache.batch_size() as f64;
    let mut dlogits = Matrix::zeros(cache.batch_size(), params.n_tasks());
    for r in 0..cache.batch_size() {
        let p = cache.probs.row(r);
        let y = labels.row(r);
        for (t, d) in dlogits.row_mut(r).iter_mut().enumerate() {
            *d = weights[t] * (p[t] - f64::from(y[t])) / n;
        }
    }
    let mut grads = params.zeros_like();
    let mut delta = params
        .heads
        .backward(cache.features(), &dlogits, &mut grads.heads, !params.trunk.is_empty());
    for l in (0..params.trunk.len()).rev() {
        let mut d = delta.take().expect("requested above");
        for (dv, &z) in d
            .as_mut_slice()
            .iter_mut()
            .zip(cache.pre_activations[l].as_slice())
        {
            if z <= 0.0 {
                *dv = 0.0;
            }
        }
        delta = params.trunk[l].backward(&cache.activations[l], &d, &mut grads.trunk[l], l > 0);
    }
    Ok(grads)
}

/// Weighted total loss of `params` on a batch.
pub fn objective(
    params: &ModelParams,
    batch: &Matrix,
    labels: &Matrix<u8>,
    weights: &WeightVector,
) -> Result<f64, ModelError> {
    if weights.len() != params.n_tasks() {
        return Err(mismatch("task weights", params.n_tasks(), weights.len()));
    }
    let (logits, _) = forward(params, batch)?;
    let losses = task_losses(&logits, labels)?;
    Ok(weights
        .as_slice()
        .iter()
        .zip(&losses)
        .map(|(w, l)| w * l)
        .sum())
}

/// Central finite-difference gradient of [`objective`], one parameter at a
/// time.
pub fn numeric_gradient(
    params: &ModelParams,
    batch: &Matrix,
    labels: &Matrix<u8>,
    weights: &WeightVector,
    eps: f64,
    exec: Exec,
) -> Result<ModelParams, ModelError> {
    if !(eps > 0.0) {
        return Err(ModelError::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    objective(params, batch, labels, weights)?;
    let theta = params.to_flat();
    let slopes = par::try_map_range(exec, theta.len(), |k| {
        let mut probe = params.clone();
        let mut flat = theta.clone();
        flat[k] = theta[k] + eps;
        probe.set_flat(&flat)?;
        let up = objective(&probe, batch, labels, weights)?;
        flat[k] = theta[k] - eps;
        probe.set_flat(&flat)?;
        let down = objective(&probe, batch, labels, weights)?;
        Ok::<f64, ModelError>((up - down) / (2.0 * eps))
    })?;
    let mut grads = params.zeros_like();
    grads.set_flat(&slopes)?;
    Ok(grads)
}

/// `params - lr * grads`.
pub fn sgd_step(params: &ModelParams, grads: &ModelParams, lr: f64) -> Result<ModelParams, ModelError> {
    if !params.same_shape(grads) {
        return Err(mismatch(
            "gradient",
            format!("{:?}", params.hidden_dims()),
            format!("{:?}", grads.hidden_dims()),
        ));
    }
    if !(lr >= 0.0) {
        return Err(ModelError::InvalidArgument(format!("learning rate must be >= 0, got {lr}")));
    }
    let mut next = params.clone();
    for (l, g) in next.layers_mut().zip(grads.layers()) {
        for (p, gv) in l.weights.as_mut_slice().iter_mut().zip(g.weights.as_slice()) {
            *p -= lr * gv;
        }
        for (p, gv) in l.bias.iter_mut().zip(&g.bias) {
            *p -= lr * gv;
        }
    }
    Ok(next)
}

const CHECKPOINT_MAGIC: &str = "taskweight-checkpoint 1";

/// Writes parameters as text: a header (`input_dim`, `hidden_dims`,
/// `tasks`, `seed`, `params` count) followed by one value per line in
/// [`ModelParams::to_flat`] order, each printed in shortest round-trip form.
pub fn write_checkpoint<W: Write>(params: &ModelParams, mut out: W) -> Result<(), ModelError> {
    let mut s = String::new();
    let hidden: Vec<String> = params.hidden_dims().iter().map(|h| h.to_string()).collect();
    writeln!(s, "{CHECKPOINT_MAGIC}").unwrap();
    writeln!(s, "input_dim {}", params.input_dim()).unwrap();
    writeln!(s, "hidden_dims {}", hidden.join(" ")).unwrap();
    writeln!(s, "tasks {}", params.n_tasks()).unwrap();
    writeln!(s, "seed {}", params.seed).unwrap();
    writeln!(s, "params {}", params.param_count()).unwrap();
    for v in params.to_flat() {
        writeln!(s, "{v:?}").unwrap();
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(input: R) -> Result<ModelParams, ModelError> {
    let bad = |msg: String| ModelError::Checkpoint(msg);
    let mut lines = input.lines();
    let mut next_line = |what: &str| -> Result<String, ModelError> {
        lines
            .next()
            .ok_or_else(|| bad(format!("missing {what}")))?
            .map_err(ModelError::from)
    };
    if next_line("magic")? != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file".into()));
    }
    let mut field = |key: &str| -> Result<Vec<u64>, ModelError> {
        let line = next_line(key)?;
        let rest = line
            .strip_prefix(key)
            .ok_or_else(|| bad(format!("expected `{key}`, got `{line}`")))?;
        rest.split_whitespace()
            .map(|t| t.parse::<u64>().map_err(|e| bad(format!("{key}: {e}"))))
            .collect()
    };
    let input_dim = single(field("input_dim")?, "input_dim")? as usize;
    let hidden: Vec<usize> = field("hidden_dims")?.into_iter().map(|h| h as usize).collect();
    let tasks = single(field("tasks")?, "tasks")? as usize;
    let seed = single(field("seed")?, "seed")?;
    let count = single(field("params")?, "params")? as usize;
    let mut params = init_params(input_dim, &hidden, tasks, seed)?;
    if params.param_count() != count {
        return Err(bad(format!(
            "header declares {count} parameters, architecture has {}",
            params.param_count()
        )));
    }
    let mut flat = Vec::with_capacity(count);
    for i in 0..count {
        let line = next_line("parameter")?;
        let v: f64 = line
            .trim()
            .parse()
            .map_err(|e| bad(format!("parameter {i}: {e}")))?;
        flat.push(v);
    }
    params.set_flat(&flat)?;
    Ok(params)
}

fn single(v: Vec<u64>, key: &str) -> Result<u64, ModelError> {
    match v.as_slice() {
        [x] => Ok(*x),
        _ => Err(ModelError::Checkpoint(format!("`{key}` expects one value"))),
    }
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<(), ModelError> {
    let file = std::fs::File::create(path)?;
    write_checkpoint(params, std::io::BufWriter::new(file))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams, ModelError> {
    let file = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(file))
}
