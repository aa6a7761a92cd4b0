//! JSON run configuration.
//!
//! One document with sections `data`, `train`, `weighting`, `sim` and
//! `output`, plus a top-level `seed`. Every section is optional and falls
//! back to its defaults; unknown keys anywhere are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::controller::{StrategyKind, WeightConfig};
use crate::data::TaskProfile;
use crate::simdyn::SimTask;
use crate::trainer::Hyperparams;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSection,
    pub train: TrainSection,
    pub weighting: WeightingSection,
    pub sim: SimSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub n: usize,
    pub d: usize,
    /// Dimension of the subspace shared by all task directions; `null`
    /// draws each direction from the full feature space.
    pub latent_rank: Option<usize>,
    pub tasks: Vec<TaskSpec>,
}

impl Default for DataSection {
    fn default() -> Self {
        let task = |name: &str, margin, positive_rate, label_noise| TaskSpec {
            name: Some(name.to_string()),
            margin,
            positive_rate,
            label_noise,
        };
        Self {
            n: 1000,
            d: 8,
            latent_rank: None,
            tasks: vec![
                task("easy", 3.0, 0.4, 0.0),
                task("medium", 1.0, 0.3, 0.05),
                task("hard", 0.5, 0.2, 0.1),
                task("rare", 1.5, 0.05, 0.0),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub margin: f64,
    pub positive_rate: f64,
    #[serde(default)]
    pub label_noise: f64,
}

impl TaskSpec {
    pub fn profile(&self) -> TaskProfile {
        TaskProfile {
            margin: self.margin,
            positive_rate: self.positive_rate,
            label_noise: self.label_noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden_dims: Vec<usize>,
    pub train_fraction: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let hp = Hyperparams::default();
        Self {
            epochs: hp.epochs,
            batch_size: hp.batch_size,
            learning_rate: hp.learning_rate,
            hidden_dims: hp.hidden_dims,
            train_fraction: hp.train_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightingSection {
    pub alpha: f64,
    pub beta: f64,
    pub w_max: f64,
    pub init_scale: f64,
    pub w_floor: Option<f64>,
    pub strategies: Vec<StrategyKind>,
}

impl Default for WeightingSection {
    fn default() -> Self {
        let c = WeightConfig::default();
        Self {
            alpha: c.alpha,
            beta: c.beta,
            w_max: c.w_max,
            init_scale: c.init_scale,
            w_floor: c.w_floor,
            strategies: StrategyKind::ALL.to_vec(),
        }
    }
}

impl WeightingSection {
    pub fn weight_config(&self) -> WeightConfig {
        WeightConfig {
            alpha: self.alpha,
            beta: self.beta,
            w_max: self.w_max,
            init_scale: self.init_scale,
            w_floor: self.w_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub epochs: usize,
    pub tasks: Vec<SimTask>,
    pub strategies: Vec<StrategyKind>,
}

impl Default for SimSection {
    fn default() -> Self {
        let base = SimTask {
            ceiling: 1.0,
            rate: 0.1,
            noise_sd: 0.01,
        };
        Self {
            epochs: 200,
            tasks: crate::simdyn::lagging_scenario(8, base, 0.5),
            strategies: vec![StrategyKind::Deepchest, StrategyKind::Uniform],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.weighting
            .weight_config()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.hyperparams(StrategyKind::Deepchest)
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        for (i, t) in self.data.tasks.iter().enumerate() {
            t.profile().validate(i).map_err(|e| CliError::Config(e.to_string()))?;
        }
        let names = self.task_names();
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() || name.contains([',', '\n', '\r', '"']) {
                return bad(format!("task name `{name}` must be non-empty without commas, quotes or newlines"));
            }
            if names[..i].contains(name) {
                return bad(format!("duplicate task name `{name}`"));
            }
        }
        if self.weighting.strategies.is_empty() {
            return bad("weighting.strategies must not be empty".into());
        }
        if self.sim.strategies.is_empty() {
            return bad("sim.strategies must not be empty".into());
        }
        if self.sim.epochs == 0 {
            return bad("sim.epochs must be >= 1".into());
        }
        Ok(())
    }

    /// Task names for generated data: the configured name or `task<i>`.
    pub fn task_names(&self) -> Vec<String> {
        self.data
            .tasks
            .iter()
            .enumerate()
            .map(|(i, t)| t.name.clone().unwrap_or_else(|| format!("task{i}")))
            .collect()
    }

    pub fn hyperparams(&self, strategy: StrategyKind) -> Hyperparams {
        Hyperparams {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            hidden_dims: self.train.hidden_dims.clone(),
            seed: self.seed,
            train_fraction: self.train.train_fraction,
            weight_cfg: self.weighting.weight_config(),
            strategy,
        }
    }
}
