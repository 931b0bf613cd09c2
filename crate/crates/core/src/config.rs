//! Flat JSON run configuration.
//!
//! Every key is optional and falls back to its default; unknown keys are rejected.
//! Sensible search ranges for the hindsight bonus: `hindsight_horizon` in
//! {30, 60, 90, 120, 150, 180}, `hindsight_weight` around 0.1.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::TrainConfig;
use crate::env::{EnvConfig, ExecutionMode};
use crate::eval::{BaselineParams, DdMode};
use crate::neural::NetConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: &'static str, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // market and execution
    pub fee_rate: f64,
    pub leverage: f64,
    pub max_position: i64,
    pub n_price: usize,
    pub n_qty: usize,
    pub tick_size: f64,
    pub seq_len: usize,
    pub hindsight_weight: f64,
    pub hindsight_horizon: usize,
    pub warmup: usize,
    pub execution_mode: ExecutionMode,

    // learning
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_fraction: f64,
    pub batch_size: usize,
    pub target_update_period: usize,
    pub epochs: usize,
    pub aux_weight: f64,
    pub learning_rate: f64,
    pub augmentations: usize,
    pub buffer_capacity: usize,
    pub per_alpha: f64,
    pub per_beta_start: f64,
    pub per_beta_end: f64,
    pub per_epsilon: f64,
    pub reward_scale: f64,
    pub vol_scale: f64,

    // network widths
    pub macro_hidden: usize,
    pub macro_embed: usize,
    pub lstm_hidden: usize,
    pub head_hidden: usize,

    // baselines and metrics
    pub bollinger_window: usize,
    pub bollinger_k: f64,
    pub tsm_lookback: usize,
    pub dd_mode: DdMode,

    // run plumbing
    pub asset: String,
    pub train_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let e = EnvConfig::default();
        let t = TrainConfig::default();
        let n = NetConfig::default();
        let b = BaselineParams::default();
        Self {
            fee_rate: e.fee_rate,
            leverage: e.leverage,
            max_position: e.max_position,
            n_price: e.n_price,
            n_qty: e.n_qty,
            tick_size: e.tick_size,
            seq_len: e.seq_len,
            hindsight_weight: e.hindsight_weight,
            hindsight_horizon: e.hindsight_horizon,
            warmup: e.warmup,
            execution_mode: e.execution_mode,
            gamma: t.gamma,
            epsilon_start: t.epsilon_start,
            epsilon_end: t.epsilon_end,
            epsilon_decay_fraction: t.epsilon_decay_fraction,
            batch_size: t.batch_size,
            target_update_period: t.target_update_period,
            epochs: t.epochs,
            aux_weight: t.aux_weight,
            learning_rate: t.learning_rate,
            augmentations: t.augmentations,
            buffer_capacity: t.buffer_capacity,
            per_alpha: t.per_alpha,
            per_beta_start: t.per_beta_start,
            per_beta_end: t.per_beta_end,
            per_epsilon: t.per_epsilon,
            reward_scale: t.reward_scale,
            vol_scale: t.vol_scale,
            macro_hidden: n.macro_hidden,
            macro_embed: n.macro_embed,
            lstm_hidden: n.lstm_hidden,
            head_hidden: n.head_hidden,
            bollinger_window: b.bollinger_window,
            bollinger_k: b.bollinger_k,
            tsm_lookback: b.tsm_lookback,
            dd_mode: DdMode::default(),
            asset: "asset".to_string(),
            train_data: None,
            test_data: None,
            out_dir: PathBuf::from("out"),
            seed: t.seed,
        }
    }
}

fn invalid(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        message: message.into(),
    }
}

fn check(ok: bool, key: &'static str, message: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(invalid(key, message))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Pretty JSON of every key, defaults included.
    pub fn echo(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Range checks, naming the first offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        let positive = |x: f64| x.is_finite() && x > 0.0;
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        check(finite_nonneg(self.fee_rate), "fee_rate", "must be >= 0")?;
        check(self.leverage.is_finite() && self.leverage >= 1.0, "leverage", "must be >= 1")?;
        check(self.max_position >= 1, "max_position", "must be >= 1")?;
        check(self.n_price >= 1, "n_price", "must be >= 1")?;
        check(self.n_qty >= 1 && self.n_qty % 2 == 1, "n_qty", "must be odd and >= 1")?;
        check(positive(self.tick_size), "tick_size", "must be > 0")?;
        check(finite_nonneg(self.hindsight_weight), "hindsight_weight", "must be >= 0")?;
        check(self.hindsight_horizon >= 1, "hindsight_horizon", "must be >= 1")?;
        check(
            self.warmup >= crate::marketdata::INDICATOR_WARMUP,
            "warmup",
            "must cover the 30-minute indicator window (>= 29)",
        )?;
        check((0.0..1.0).contains(&self.gamma), "gamma", "must lie in [0, 1)")?;
        check(unit(self.epsilon_start), "epsilon_start", "must lie in [0, 1]")?;
        check(unit(self.epsilon_end), "epsilon_end", "must lie in [0, 1]")?;
        check(unit(self.epsilon_decay_fraction), "epsilon_decay_fraction", "must lie in [0, 1]")?;
        check(self.batch_size >= 1, "batch_size", "must be >= 1")?;
        check(self.target_update_period >= 1, "target_update_period", "must be >= 1")?;
        check(self.epochs >= 1, "epochs", "must be >= 1")?;
        check(finite_nonneg(self.aux_weight), "aux_weight", "must be >= 0")?;
        check(positive(self.learning_rate), "learning_rate", "must be > 0")?;
        check(
            self.buffer_capacity >= self.batch_size,
            "buffer_capacity",
            "must be >= batch_size",
        )?;
        check(finite_nonneg(self.per_alpha), "per_alpha", "must be >= 0")?;
        check(unit(self.per_beta_start), "per_beta_start", "must lie in [0, 1]")?;
        check(unit(self.per_beta_end), "per_beta_end", "must lie in [0, 1]")?;
        check(positive(self.per_epsilon), "per_epsilon", "must be > 0")?;
        check(positive(self.reward_scale), "reward_scale", "must be > 0")?;
        check(positive(self.vol_scale), "vol_scale", "must be > 0")?;
        for (key, v) in [
            ("macro_hidden", self.macro_hidden),
            ("macro_embed", self.macro_embed),
            ("lstm_hidden", self.lstm_hidden),
            ("head_hidden", self.head_hidden),
            ("bollinger_window", self.bollinger_window),
            ("tsm_lookback", self.tsm_lookback),
        ] {
            check(v >= 1, key, "must be >= 1")?;
        }
        check(finite_nonneg(self.bollinger_k), "bollinger_k", "must be >= 0")?;
        check(
            !self.asset.is_empty() && !self.asset.contains([',', '\n', '"']),
            "asset",
            "must be a non-empty label without commas, quotes or newlines",
        )?;
        Ok(())
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            fee_rate: self.fee_rate,
            leverage: self.leverage,
            max_position: self.max_position,
            n_price: self.n_price,
            n_qty: self.n_qty,
            tick_size: self.tick_size,
            seq_len: self.seq_len,
            hindsight_weight: self.hindsight_weight,
            hindsight_horizon: self.hindsight_horizon,
            warmup: self.warmup,
            execution_mode: self.execution_mode,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            gamma: self.gamma,
            epsilon_start: self.epsilon_start,
            epsilon_end: self.epsilon_end,
            epsilon_decay_fraction: self.epsilon_decay_fraction,
            batch_size: self.batch_size,
            target_update_period: self.target_update_period,
            epochs: self.epochs,
            aux_weight: self.aux_weight,
            learning_rate: self.learning_rate,
            seed: self.seed,
            augmentations: self.augmentations,
            buffer_capacity: self.buffer_capacity,
            per_alpha: self.per_alpha,
            per_beta_start: self.per_beta_start,
            per_beta_end: self.per_beta_end,
            per_epsilon: self.per_epsilon,
            reward_scale: self.reward_scale,
            vol_scale: self.vol_scale,
        }
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            macro_hidden: self.macro_hidden,
            macro_embed: self.macro_embed,
            lstm_hidden: self.lstm_hidden,
            head_hidden: self.head_hidden,
        }
    }

    pub fn baseline_params(&self) -> BaselineParams {
        BaselineParams {
            bollinger_window: self.bollinger_window,
            bollinger_k: self.bollinger_k,
            tsm_lookback: self.tsm_lookback,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.env_config(), EnvConfig::default());
        assert_eq!(cfg.train_config(), TrainConfig::default());
    }

    #[test]
    fn unknown_key_rejected() {
        let err = RunConfig::from_json(r#"{"gama": 0.5}"#).unwrap_err();
        assert!(err.to_string().contains("gama"), "{err}");
    }

    #[test]
    fn out_of_range_names_key() {
        match RunConfig::from_json(r#"{"gamma": 1.2}"#).unwrap_err() {
            ConfigError::Invalid { key, .. } => assert_eq!(key, "gamma"),
            other => panic!("{other}"),
        }
        match RunConfig::from_json(r#"{"n_qty": 10}"#).unwrap_err() {
            ConfigError::Invalid { key, .. } => assert_eq!(key, "n_qty"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn echo_round_trips() {
        let cfg = RunConfig {
            hindsight_horizon: 60,
            dd_mode: DdMode::Var,
            execution_mode: ExecutionMode::LobVwap,
            train_data: Some("a.csv".into()),
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::from_json(&cfg.echo()).unwrap(), cfg);
    }
}
