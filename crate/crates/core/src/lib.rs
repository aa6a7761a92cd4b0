//! Gradient-free dynamic task weighting for multi-task learning.
//!
//! The [`controller`] holds the weighting rules. The remaining modules form
//! a small, deterministic experiment harness around it: a hard-parameter
//! sharing network with analytic gradients ([`model`]), synthetic and CSV
//! datasets ([`data`]), single- and multi-task training ([`trainer`]),
//! relative-loss evaluation ([`metrics`]), a closed-form learning-dynamics
//! simulator ([`simdyn`]) and the command-line front end ([`cli`]).
//!
//! Data-parallel loops go through [`par`]; with the default `parallel`
//! feature they run on rayon, otherwise sequentially, with identical
//! results either way.

// NaN-rejecting validation is written as `!(x > lo)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod controller;
pub mod data;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod numfmt;
pub mod par;
pub mod rng;
pub mod simdyn;
pub mod trainer;

pub use controller::{StrategyKind, WeightConfig, WeightVector};
pub use data::{MultiTaskDataset, TaskProfile};
pub use matrix::Matrix;
pub use par::Exec;
