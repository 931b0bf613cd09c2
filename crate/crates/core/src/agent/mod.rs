//! Branching dueling Q-learning with a volatility auxiliary loss.

mod replay;
mod train;

pub use replay::{per_sample, ReplayBuffer, SampledBatch};
pub use train::{train, TrainLogRow, TrainOutcome, TRAIN_LOG_HEADER};

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, EnvError, EnvState};
use crate::marketdata::TradingDay;
use crate::neural::{backward, forward, forward_with_tape, ForwardOutput, NetworkParams, NeuralError, Upstream};
use crate::parallel;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("training needs at least one trading day")]
    EmptyDataset,
    #[error("replay buffer holds {size} transitions; batch needs {batch}")]
    Underfull { size: usize, batch: usize },
    #[error("invalid train config: {0}")]
    Config(String),
    #[error("training diverged to non-finite parameters")]
    Diverged,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of all environment steps over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
    pub batch_size: usize,
    /// Gradient steps between hard target-network refreshes.
    pub target_update_period: usize,
    pub epochs: usize,
    /// Weight of the volatility loss.
    pub aux_weight: f64,
    pub learning_rate: f64,
    pub seed: u64,
    /// Extra replays of each day from a random initial position.
    pub augmentations: usize,
    pub buffer_capacity: usize,
    pub per_alpha: f64,
    pub per_beta_start: f64,
    pub per_beta_end: f64,
    pub per_epsilon: f64,
    /// Stored rewards are `reward / initial_cash * reward_scale`.
    pub reward_scale: f64,
    /// The volatility head regresses `vol_scale * y_vol`.
    pub vol_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.5,
            batch_size: 32,
            target_update_period: 100,
            epochs: 5,
            aux_weight: 1.0,
            learning_rate: 5e-4,
            seed: 0,
            augmentations: 1,
            buffer_capacity: 50_000,
            per_alpha: 0.6,
            per_beta_start: 0.4,
            per_beta_end: 1.0,
            per_epsilon: 1e-3,
            reward_scale: 100.0,
            vol_scale: 1e4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::Config(m.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        for (name, e) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end)] {
            if !(0.0..=1.0).contains(&e) {
                return Err(AgentError::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.epsilon_decay_fraction) {
            return bad("epsilon_decay_fraction must lie in [0, 1]");
        }
        if !(self.aux_weight.is_finite() && self.aux_weight >= 0.0) {
            return bad("aux_weight must be >= 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.buffer_capacity < self.batch_size {
            return bad("buffer_capacity must be >= batch_size");
        }
        if self.target_update_period == 0 {
            return bad("target_update_period must be >= 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if !(self.per_alpha.is_finite() && self.per_alpha >= 0.0) {
            return bad("per_alpha must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.per_beta_start) || !(0.0..=1.0).contains(&self.per_beta_end) {
            return bad("per_beta_start and per_beta_end must lie in [0, 1]");
        }
        if !(self.per_epsilon.is_finite() && self.per_epsilon > 0.0) {
            return bad("per_epsilon must be > 0");
        }
        if !(self.reward_scale.is_finite() && self.reward_scale > 0.0) {
            return bad("reward_scale must be > 0");
        }
        if !(self.vol_scale.is_finite() && self.vol_scale > 0.0) {
            return bad("vol_scale must be > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Arc<EnvState>,
    pub action: Action,
    /// Training reward (hindsight variant, scaled).
    pub reward: f64,
    pub next_state: Option<Arc<EnvState>>,
    pub done: bool,
    pub vol_target: f64,
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Per-branch argmax; ties go to the lowest index.
pub fn greedy_action(output: &ForwardOutput) -> Action {
    Action {
        price_idx: argmax(&output.q_price),
        qty_idx: argmax(&output.q_qty),
    }
}

/// Epsilon-greedy over each branch independently; ties go to the lowest index.
pub fn select_action<R: Rng + ?Sized>(output: &ForwardOutput, epsilon: f64, rng: &mut R) -> Action {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Action {
            price_idx: rng.random_range(0..output.q_price.len()),
            qty_idx: rng.random_range(0..output.q_qty.len()),
        };
    }
    greedy_action(output)
}

/// Per-branch one-step targets `r + gamma * max_a Q_d^-(s', a)`; terminal transitions
/// return `r`.
pub fn td_targets(
    batch: &[&Transition],
    target: &NetworkParams,
    gamma: f64,
) -> Result<Vec<(f64, f64)>, AgentError> {
    let rows = parallel::map(batch, |t| -> Result<(f64, f64), NeuralError> {
        match (&t.next_state, t.done) {
            (Some(next), false) if gamma != 0.0 => {
                let out = forward(target, next)?;
                let max = |q: &[f64]| q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                Ok((
                    t.reward + gamma * max(&out.q_price),
                    t.reward + gamma * max(&out.q_qty),
                ))
            }
            _ => Ok((t.reward, t.reward)),
        }
    });
    rows.into_iter().map(|r| r.map_err(AgentError::from)).collect()
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    /// Weighted batch mean of `q_loss + aux_weight * vol_loss`.
    pub total: f64,
    pub q_loss: f64,
    pub vol_loss: f64,
    pub grads: NetworkParams,
    /// Mean absolute TD error across the two branches, per sample.
    pub td_abs: Vec<f64>,
}

/// Per sample: `½[(y_p - Q_p)² + (y_q - Q_q)²] + aux_weight * (vol_scale*y_vol - ŷ)²`,
/// weighted and averaged over the batch, with exact gradients.
pub fn loss(
    batch: &[&Transition],
    params: &NetworkParams,
    targets: &[(f64, f64)],
    aux_weight: f64,
    vol_scale: f64,
    weights: &[f64],
) -> Result<LossOutput, AgentError> {
    let n = batch.len();
    if n == 0 || targets.len() != n || weights.len() != n {
        return Err(AgentError::Config("batch, targets and weights must be non-empty and aligned".into()));
    }
    let inv_n = 1.0 / n as f64;
    let items: Vec<usize> = (0..n).collect();
    let per_sample = parallel::map(&items, |&i| -> Result<_, NeuralError> {
        let t = batch[i];
        let (out, tape) = forward_with_tape(params, &t.state)?;
        let (yp, yq) = targets[i];
        let w = weights[i];
        let ep = out.q_price[t.action.price_idx] - yp;
        let eq = out.q_qty[t.action.qty_idx] - yq;
        let ev = out.vol_pred - vol_scale * t.vol_target;
        let q_loss = 0.5 * (ep * ep + eq * eq);
        let vol_loss = ev * ev;
        let mut up = Upstream::zeros(out.q_price.len(), out.q_qty.len());
        up.q_price[t.action.price_idx] = w * inv_n * ep;
        up.q_qty[t.action.qty_idx] = w * inv_n * eq;
        up.vol_pred = w * inv_n * aux_weight * 2.0 * ev;
        let g = backward(params, &tape, &up)?;
        Ok((w * q_loss, w * vol_loss, 0.5 * (ep.abs() + eq.abs()), g))
    });
    let mut grads = params.zeros_like();
    let (mut q_sum, mut v_sum) = (0.0, 0.0);
    let mut td_abs = Vec::with_capacity(n);
    for r in per_sample {
        let (q, v, td, g) = r?;
        q_sum += q;
        v_sum += v;
        td_abs.push(td);
        grads.add_assign(&g);
    }
    let q_loss = q_sum * inv_n;
    let vol_loss = v_sum * inv_n;
    Ok(LossOutput {
        total: q_loss + aux_weight * vol_loss,
        q_loss,
        vol_loss,
        grads,
        td_abs,
    })
}

/// Population variance of one-minute close-to-close returns over `[t, min(t+h, T))`;
/// 0 when fewer than two returns are available.
pub fn compute_vol_target(day: &TradingDay, t: usize, horizon: usize) -> f64 {
    let end = (t + horizon).min(day.last_index());
    if end < t + 2 {
        return 0.0;
    }
    let returns: Vec<f64> = (t..end).map(|i| day.close(i + 1) / day.close(i) - 1.0).collect();
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n
}
