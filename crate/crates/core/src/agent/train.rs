use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    compute_vol_target, loss, select_action, td_targets, AgentError, ReplayBuffer, TrainConfig,
    Transition,
};
use crate::env::{Env, EnvConfig, PreparedDay};
use crate::neural::{adam_step, forward, AdamConfig, AdamState, NetConfig, NetworkParams};

pub const TRAIN_LOG_HEADER: &str = "epoch,step,loss_q,loss_vol,epsilon,train_tr";

/// One line of the training log, written at the end of every epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRow {
    pub epoch: usize,
    /// Environment steps taken so far.
    pub step: usize,
    /// Mean weighted Q loss over the epoch's gradient steps.
    pub loss_q: f64,
    pub loss_vol: f64,
    pub epsilon: f64,
    /// Chained base-reward return of the epoch's non-augmented replays.
    pub train_tr: f64,
}

impl TrainLogRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.epoch, self.step, self.loss_q, self.loss_vol, self.epsilon, self.train_tr
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub log: Vec<TrainLogRow>,
    pub transitions_stored: usize,
    pub gradient_steps: usize,
    /// Base (non-hindsight) rewards of every step, in order; handy for diagnostics.
    pub base_rewards: Vec<f64>,
}

struct Schedule {
    cfg: TrainConfig,
    total_steps: usize,
}

impl Schedule {
    fn epsilon(&self, step: usize) -> f64 {
        let decay = (self.cfg.epsilon_decay_fraction * self.total_steps as f64).max(1.0);
        let frac = (step as f64 / decay).min(1.0);
        self.cfg.epsilon_start + (self.cfg.epsilon_end - self.cfg.epsilon_start) * frac
    }

    fn beta(&self, step: usize) -> f64 {
        let frac = (step as f64 / self.total_steps.max(1) as f64).min(1.0);
        self.cfg.per_beta_start + (self.cfg.per_beta_end - self.cfg.per_beta_start) * frac
    }
}

/// Trains a fresh network on `days`.
///
/// Every epoch replays each day once from a flat start and `augmentations` more times
/// from a uniformly drawn initial position (account value unchanged). Transitions store
/// the hindsight reward; one gradient step follows every environment step once the
/// buffer can fill a batch, and the target network is hard-copied every
/// `target_update_period` gradient steps.
pub fn train(
    days: &[PreparedDay],
    env_cfg: &EnvConfig,
    cfg: &TrainConfig,
    net_cfg: &NetConfig,
) -> Result<TrainOutcome, AgentError> {
    if days.is_empty() {
        return Err(AgentError::EmptyDataset);
    }
    env_cfg.validate()?;
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = NetworkParams::new(net_cfg, env_cfg.n_price, env_cfg.n_qty, &mut rng);
    let mut target = params.clone();
    let mut adam = AdamState::new(
        &params,
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, cfg.per_alpha, cfg.per_epsilon);
    let per_epoch: usize = days
        .iter()
        .map(|d| (1 + cfg.augmentations) * d.tradable_minutes())
        .sum();
    let schedule = Schedule {
        cfg: cfg.clone(),
        total_steps: cfg.epochs * per_epoch,
    };

    let mut step = 0usize;
    let mut gradient_steps = 0usize;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut base_rewards = Vec::new();

    for epoch in 1..=cfg.epochs {
        let (mut q_sum, mut v_sum, mut updates) = (0.0, 0.0, 0usize);
        let mut growth = 1.0;
        for day in days {
            for replay in 0..=cfg.augmentations {
                let initial = (replay > 0).then(|| {
                    let pos = rng.random_range(-env_cfg.max_position..=env_cfg.max_position);
                    Env::augmented_initial(day, env_cfg, pos)
                });
                let (mut env, first) = Env::reset(day, env_cfg, initial)?;
                let c1 = env.initial_cash();
                let mut state = Arc::new(first);
                loop {
                    let out = forward(&params, &state)?;
                    let action = select_action(&out, schedule.epsilon(step), &mut rng);
                    let result = env.step(action)?;
                    base_rewards.push(result.reward);
                    let next = result.next_state.map(Arc::new);
                    buffer.push(Transition {
                        state: Arc::clone(&state),
                        action,
                        reward: result.hindsight_reward / c1 * cfg.reward_scale,
                        next_state: next.clone(),
                        done: result.done,
                        vol_target: compute_vol_target(&day.day, state.t, env_cfg.hindsight_horizon),
                    });
                    step += 1;

                    if buffer.len() >= cfg.batch_size {
                        let sample = buffer.sample(cfg.batch_size, schedule.beta(step), &mut rng)?;
                        let batch: Vec<&Transition> =
                            sample.indices.iter().map(|&i| buffer.get(i)).collect();
                        let targets = td_targets(&batch, &target, cfg.gamma)?;
                        let out = loss(&batch, &params, &targets, cfg.aux_weight, cfg.vol_scale, &sample.weights)?;
                        adam_step(&mut params, &out.grads, &mut adam)?;
                        buffer.update_priorities(&sample.indices, &out.td_abs);
                        q_sum += out.q_loss;
                        v_sum += out.vol_loss;
                        updates += 1;
                        gradient_steps += 1;
                        if gradient_steps.is_multiple_of(cfg.target_update_period) {
                            target = params.clone();
                        }
                    }

                    match next {
                        Some(s) => state = s,
                        None => {
                            if replay == 0 {
                                growth *= result.info.net_value;
                            }
                            break;
                        }
                    }
                }
            }
        }
        let denom = updates.max(1) as f64;
        log.push(TrainLogRow {
            epoch,
            step,
            loss_q: q_sum / denom,
            loss_vol: v_sum / denom,
            epsilon: schedule.epsilon(step),
            train_tr: growth - 1.0,
        });
    }
    if !params.is_finite() {
        return Err(AgentError::Diverged);
    }
    Ok(TrainOutcome {
        params,
        log,
        transitions_stored: buffer.len(),
        gradient_steps,
        base_rewards,
    })
}
