//! Closed-form learning-dynamics simulator.
//!
//! Each task's accuracy moves toward its ceiling at a speed proportional to
//! its share of the total weight:
//!
//! ```text
//! s_t  = w_t / sum_k w_k
//! a'_t = clamp(a_t + rate_t * s_t * (ceiling_t - a_t) + noise, 0, ceiling_t)
//! ```
//!
//! after which the weights advance by one controller update on `a'`. This is
//! a test bed for the controller, not a model of real training curves.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{self, ControllerError, StrategyKind, WeightConfig, WeightVector};
use crate::par::{self, Exec};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("length mismatch: {expected} tasks expected, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("invalid simulated task {index}: {reason}")]
    BadTask { index: usize, reason: String },
    #[error("epochs must be >= 1")]
    NoEpochs,
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimTask {
    /// Highest reachable accuracy, in (0, 1].
    pub ceiling: f64,
    /// Learning speed per unit weight share.
    pub rate: f64,
    #[serde(default)]
    pub noise_sd: f64,
}

impl SimTask {
    fn validate(&self, index: usize) -> Result<(), SimError> {
        let bad = |reason: String| Err(SimError::BadTask { index, reason });
        if !(self.ceiling > 0.0 && self.ceiling <= 1.0) {
            return bad(format!("ceiling must lie in (0, 1], got {}", self.ceiling));
        }
        if !(self.rate >= 0.0 && self.rate.is_finite()) {
            return bad(format!("rate must be finite and >= 0, got {}", self.rate));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd must be finite and >= 0, got {}", self.noise_sd));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimState {
    pub epoch: usize,
    pub accuracies: Vec<f64>,
    pub weights: WeightVector,
}

/// Advances the simulation by one epoch. Noise is drawn from `rng` only for
/// tasks with `noise_sd > 0`, in task order.
pub fn sim_step(
    state: &SimState,
    tasks: &[SimTask],
    cfg: &WeightConfig,
    strategy: StrategyKind,
    rng: &mut impl Rng,
) -> Result<SimState, SimError> {
    let n = tasks.len();
    for (got, _) in [(state.accuracies.len(), 0), (state.weights.len(), 1)] {
        if got != n {
            return Err(SimError::LengthMismatch {
                expected: n,
                actual: got,
            });
        }
    }
    for (i, t) in tasks.iter().enumerate() {
        t.validate(i)?;
    }
    let total: f64 = state.weights.as_slice().iter().sum();
    let mut next_acc = Vec::with_capacity(n);
    for (t, task) in tasks.iter().enumerate() {
        let a = state.accuracies[t];
        let share = state.weights[t] / total;
        let noise = if task.noise_sd > 0.0 {
            Normal::new(0.0, task.noise_sd)
                .expect("validated noise_sd")
                .sample(rng)
        } else {
            0.0
        };
        let moved = a + task.rate * share * (task.ceiling - a) + noise;
        next_acc.push(moved.clamp(0.0, task.ceiling));
    }
    let ones = WeightVector::ones(n);
    let weights = controller::weights_for_epoch(strategy, &ones, &state.weights, &next_acc, cfg)?;
    Ok(SimState {
        epoch: state.epoch + 1,
        accuracies: next_acc,
        weights,
    })
}

/// Runs `epochs` steps from zero accuracy and unit weights. The returned
/// trajectory has `epochs + 1` states, starting with the initial one.
pub fn run_sim(
    tasks: &[SimTask],
    strategy: StrategyKind,
    cfg: &WeightConfig,
    epochs: usize,
    seed: u64,
) -> Result<Vec<SimState>, SimError> {
    if epochs == 0 {
        return Err(SimError::NoEpochs);
    }
    if tasks.is_empty() {
        return Err(ControllerError::EmptyTasks.into());
    }
    cfg.validate()?;
    let mut rng: ChaCha8Rng = rng::stream(seed, Purpose::Sim, 0);
    let mut state = SimState {
        epoch: 0,
        accuracies: vec![0.0; tasks.len()],
        weights: WeightVector::ones(tasks.len()),
    };
    let mut trajectory = Vec::with_capacity(epochs + 1);
    for _ in 0..epochs {
        let next = sim_step(&state, tasks, cfg, strategy, &mut rng)?;
        trajectory.push(std::mem::replace(&mut state, next));
    }
    trajectory.push(state);
    Ok(trajectory)
}

/// One [`run_sim`] per seed, in seed order.
pub fn run_sim_seeds(
    tasks: &[SimTask],
    strategy: StrategyKind,
    cfg: &WeightConfig,
    epochs: usize,
    seeds: &[u64],
    exec: Exec,
) -> Result<Vec<Vec<SimState>>, SimError> {
    par::try_map_range(exec, seeds.len(), |i| run_sim(tasks, strategy, cfg, epochs, seeds[i]))
}

/// `n_fast` identical tasks followed by one task learning at `slow_factor`
/// times their rate.
pub fn lagging_scenario(n_fast: usize, base: SimTask, slow_factor: f64) -> Vec<SimTask> {
    let mut tasks = vec![base; n_fast];
    tasks.push(SimTask {
        rate: base.rate * slow_factor,
        ..base
    });
    tasks
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn task(rate: f64) -> SimTask {
        SimTask {
            ceiling: 1.0,
            rate,
            noise_sd: 0.0,
        }
    }

    fn state(acc: Vec<f64>, w: Vec<f64>) -> SimState {
        SimState {
            epoch: 0,
            accuracies: acc,
            weights: WeightVector::from_raw(w),
        }
    }

    #[test]
    fn step_arithmetic() {
        let mut rng = rng::stream(0, Purpose::Sim, 0);
        let s = state(vec![0.5, 0.5], vec![1.0, 1.0]);
        let next = sim_step(&s, &[task(0.2), task(0.2)], &WeightConfig::default(), StrategyKind::Uniform, &mut rng).unwrap();
        assert_abs_diff_eq!(next.accuracies[0], 0.55, epsilon = 1e-15);
        assert_eq!(next.epoch, 1);
    }

    #[test]
    fn ceiling_is_a_fixed_point() {
        let mut rng = rng::stream(0, Purpose::Sim, 0);
        let t = SimTask { ceiling: 0.8, rate: 0.7, noise_sd: 0.0 };
        let s = state(vec![0.8], vec![1.0]);
        let next = sim_step(&s, &[t], &WeightConfig::default(), StrategyKind::Deepchest, &mut rng).unwrap();
        assert_eq!(next.accuracies[0], 0.8);
    }

    #[test]
    fn starved_task_barely_moves() {
        let mut rng = rng::stream(0, Purpose::Sim, 0);
        let s = state(vec![0.3, 0.3], vec![1e-9, 5.0]);
        let next = sim_step(&s, &[task(0.5), task(0.5)], &WeightConfig::default(), StrategyKind::Uniform, &mut rng).unwrap();
        assert!((next.accuracies[0] - 0.3).abs() < 1e-9);
    }

    #[test]
    fn step_errors() {
        let mut rng = rng::stream(0, Purpose::Sim, 0);
        let s = state(vec![0.3], vec![1.0, 1.0]);
        assert!(matches!(
            sim_step(&s, &[task(0.5), task(0.5)], &WeightConfig::default(), StrategyKind::Uniform, &mut rng),
            Err(SimError::LengthMismatch { .. })
        ));
        let s = state(vec![0.3], vec![1.0]);
        let bad = SimTask { ceiling: 1.5, ..task(0.1) };
        assert!(matches!(
            sim_step(&s, &[bad], &WeightConfig::default(), StrategyKind::Uniform, &mut rng),
            Err(SimError::BadTask { .. })
        ));
    }

    #[test]
    fn trajectory_shape_and_determinism() {
        let tasks = [SimTask { noise_sd: 0.05, ..task(0.3) }, task(0.1)];
        let cfg = WeightConfig::default();
        let one = run_sim(&tasks, StrategyKind::Deepchest, &cfg, 1, 3).unwrap();
        assert_eq!(one.len(), 2);
        assert_eq!(one[0].accuracies, vec![0.0, 0.0]);
        assert_eq!(one[0].weights, WeightVector::ones(2));
        let a = run_sim(&tasks, StrategyKind::Deepchest, &cfg, 50, 3).unwrap();
        let b = run_sim(&tasks, StrategyKind::Deepchest, &cfg, 50, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, run_sim(&tasks, StrategyKind::Deepchest, &cfg, 50, 4).unwrap());
        assert!(matches!(run_sim(&tasks, StrategyKind::Deepchest, &cfg, 0, 3), Err(SimError::NoEpochs)));
    }

    #[test]
    fn symmetric_tasks_stay_identical() {
        let tasks = vec![task(0.3); 5];
        let traj = run_sim(&tasks, StrategyKind::Deepchest, &WeightConfig::default(), 100, 0).unwrap();
        for s in &traj {
            assert!(s.accuracies.iter().all(|&a| a == s.accuracies[0]));
            assert!(s.weights.as_slice().iter().all(|&w| w == s.weights[0]));
        }
    }

    #[test]
    fn seeds_agree_across_exec_modes() {
        let tasks = lagging_scenario(3, SimTask { noise_sd: 0.02, ..task(0.2) }, 0.5);
        let cfg = WeightConfig::default();
        let seeds = [1, 2, 3, 4];
        let seq = run_sim_seeds(&tasks, StrategyKind::Deepchest, &cfg, 30, &seeds, Exec::Sequential).unwrap();
        let par = run_sim_seeds(&tasks, StrategyKind::Deepchest, &cfg, 30, &seeds, Exec::Parallel).unwrap();
        assert_eq!(seq, par);
    }
}
