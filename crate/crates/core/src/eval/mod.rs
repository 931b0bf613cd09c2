//! Backtesting, rule-based baselines and performance metrics.
//!
//! Backtests run every test day as its own episode with the hindsight bonus switched
//! off, and chain the end-of-day net values so each day starts where the previous one
//! finished.

mod metrics;
mod report;

pub use metrics::{
    calmar, downside_deviation, max_drawdown, returns, sharpe, sortino, total_return, DdMode,
    MetricError, MetricsReport,
};
pub use report::{format_metric, write_metrics_csv, write_net_value_csv, MetricsRow, METRICS_HEADER, NET_VALUE_HEADER};

use chrono::NaiveDateTime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::greedy_action;
use crate::env::{Action, Env, EnvConfig, EnvError, EnvState, PreparedDay};
use crate::neural::{forward, NetworkParams, NeuralError};
use crate::parallel;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("backtest needs at least one trading day")]
    EmptyDataset,
    #[error("policy does not match the config: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Bah,
    Mv,
    Tsm,
}

impl BaselineKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::Bah => "bah",
            Self::Mv => "mv",
            Self::Tsm => "tsm",
        }
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bah" => Ok(Self::Bah),
            "mv" => Ok(Self::Mv),
            "tsm" => Ok(Self::Tsm),
            other => Err(format!("unknown baseline '{other}' (expected bah, mv or tsm)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    pub bollinger_window: usize,
    pub bollinger_k: f64,
    pub tsm_lookback: usize,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            bollinger_window: 20,
            bollinger_k: 2.0,
            tsm_lookback: 30,
        }
    }
}

/// Anything that can be backtested.
#[derive(Debug, Clone)]
pub enum Policy {
    /// Greedy actions from a trained network.
    Network(Box<NetworkParams>),
    Baseline(BaselineKind, BaselineParams),
    /// Uniform random branch indices, reseeded per day.
    Random { seed: u64 },
}

impl Policy {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Network(_) => "dqn",
            Self::Baseline(kind, _) => kind.label(),
            Self::Random { .. } => "random",
        }
    }
}

/// Net value over the test period.
#[derive(Debug, Clone, PartialEq)]
pub struct NetValueSeries {
    /// One point per decision minute plus the final close of each day.
    pub points: Vec<(NaiveDateTime, f64)>,
    /// `1.0` followed by the chained end-of-day value of each completed day.
    pub daily: Vec<f64>,
}

impl NetValueSeries {
    pub fn metrics(&self, mode: DdMode) -> MetricsReport {
        MetricsReport::from_daily(&self.daily, mode)
    }

    pub fn final_value(&self) -> f64 {
        *self.daily.last().unwrap_or(&1.0)
    }
}

/// Position a rule-based strategy wants to hold after minute `t`.
pub fn baseline_target(
    kind: BaselineKind,
    params: &BaselineParams,
    closes: &[f64],
    t: usize,
    max_position: i64,
) -> i64 {
    let p = closes[t];
    match kind {
        BaselineKind::Bah => max_position,
        BaselineKind::Mv => {
            let w = params.bollinger_window.max(1);
            if t + 1 < w {
                return 0;
            }
            let win = &closes[t + 1 - w..=t];
            let mean = win.iter().sum::<f64>() / w as f64;
            let sd = (win.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / w as f64).sqrt();
            if p < mean - params.bollinger_k * sd {
                max_position
            } else if p > mean + params.bollinger_k * sd {
                -max_position
            } else {
                0
            }
        }
        BaselineKind::Tsm => {
            let l = params.tsm_lookback;
            if l == 0 || t < l {
                return 0;
            }
            let ret = p / closes[t - l] - 1.0;
            if ret > 0.0 {
                max_position
            } else if ret < 0.0 {
                -max_position
            } else {
                0
            }
        }
    }
}

/// Action that moves the position towards `target`, crossing the spread as far as the
/// price grid allows.
pub fn action_towards(target: i64, position: i64, cfg: &EnvConfig) -> Action {
    let half = (cfg.n_qty as i64 - 1) / 2;
    let delta = target - position;
    let steps = if half == 0 {
        0
    } else {
        (delta as f64 * half as f64 / cfg.max_position as f64).round() as i64
    };
    let qty_idx = (half + steps).clamp(0, cfg.n_qty as i64 - 1) as usize;
    let price_idx = if delta < 0 { 0 } else { cfg.n_price - 1 };
    Action { price_idx, qty_idx }
}

fn check_policy(policy: &Policy, cfg: &EnvConfig) -> Result<(), EvalError> {
    if let Policy::Network(params) = policy {
        params.check_shapes()?;
        if params.n_price() != cfg.n_price || params.n_qty() != cfg.n_qty {
            return Err(EvalError::Mismatch(format!(
                "network branches are {}x{}, config asks for {}x{}",
                params.n_price(),
                params.n_qty(),
                cfg.n_price,
                cfg.n_qty
            )));
        }
    }
    Ok(())
}

struct DayRun {
    points: Vec<(NaiveDateTime, f64)>,
    final_value: f64,
}

fn run_day(policy: &Policy, day: &PreparedDay, index: usize, cfg: &EnvConfig) -> Result<DayRun, EvalError> {
    let (mut env, mut state) = Env::reset(day, cfg, None)?;
    let records = &day.day.records;
    let closes = day.day.closes();
    let mut rng = match policy {
        Policy::Random { seed } => {
            let mut r = ChaCha8Rng::seed_from_u64(*seed);
            r.set_stream(index as u64);
            Some(r)
        }
        _ => None,
    };
    let mut points = vec![(records[state.t].bar.timestamp, 1.0)];
    loop {
        let action = decide(policy, &state, &closes, cfg, rng.as_mut())?;
        let result = env.step(action)?;
        let value = result.info.net_value;
        match result.next_state {
            Some(next) => {
                points.push((records[next.t].bar.timestamp, value));
                state = next;
            }
            None => {
                // The last decision minute is the forced close; its point already exists.
                if let Some(last) = points.last_mut() {
                    last.1 = value;
                }
                return Ok(DayRun {
                    points,
                    final_value: value,
                });
            }
        }
    }
}

fn decide(
    policy: &Policy,
    state: &EnvState,
    closes: &[f64],
    cfg: &EnvConfig,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Action, EvalError> {
    Ok(match policy {
        Policy::Network(params) => {
            greedy_action(&forward(params, state)?)
        }
        Policy::Baseline(kind, bp) => {
            let target = baseline_target(*kind, bp, closes, state.t, cfg.max_position);
            action_towards(target, state.private.position, cfg)
        }
        Policy::Random { .. } => {
            let rng = rng.expect("random policy carries a generator");
            Action {
                price_idx: rng.random_range(0..cfg.n_price),
                qty_idx: rng.random_range(0..cfg.n_qty),
            }
        }
    })
}

/// Runs `policy` greedily over `days` with the base reward and chains the daily net
/// values. Days run in parallel; each day is sequential and deterministic.
pub fn backtest(policy: &Policy, days: &[PreparedDay], cfg: &EnvConfig) -> Result<NetValueSeries, EvalError> {
    if days.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let cfg = cfg.for_evaluation();
    cfg.validate()?;
    check_policy(policy, &cfg)?;
    let indexed: Vec<(usize, &PreparedDay)> = days.iter().enumerate().collect();
    let runs = parallel::map(&indexed, |(i, d)| run_day(policy, d, *i, &cfg));

    let mut points = Vec::new();
    let mut daily = vec![1.0];
    let mut level = 1.0;
    for run in runs {
        let run = run?;
        points.extend(run.points.iter().map(|&(ts, v)| (ts, level * v)));
        level *= run.final_value;
        daily.push(level);
        if level <= 0.0 {
            break;
        }
    }
    Ok(NetValueSeries { points, daily })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marketdata::{generate_synthetic, Pattern, SyntheticSpec};
    use crate::neural::NetConfig;

    fn days(pattern: Pattern, n: usize, seed: u64) -> Vec<PreparedDay> {
        let spec = SyntheticSpec {
            days: n,
            minutes_per_day: 120,
            pattern: Some(pattern),
            ..SyntheticSpec::default()
        };
        let raw = generate_synthetic(&spec, seed).unwrap();
        PreparedDay::prepare_all(&raw, EnvConfig::default().warmup).unwrap()
    }

    fn flat_spec(n: usize) -> Vec<PreparedDay> {
        let spec = SyntheticSpec {
            days: n,
            minutes_per_day: 90,
            pattern: Some(Pattern::Flat),
            volatility: 0.0,
            ..SyntheticSpec::default()
        };
        let raw = generate_synthetic(&spec, 3).unwrap();
        PreparedDay::prepare_all(&raw, EnvConfig::default().warmup).unwrap()
    }

    fn fee_free() -> EnvConfig {
        EnvConfig {
            fee_rate: 0.0,
            ..EnvConfig::default()
        }
    }

    #[test]
    fn flat_prices_are_neutral() {
        let d = flat_spec(3);
        let cfg = fee_free();
        let series = backtest(&Policy::Random { seed: 9 }, &d, &cfg).unwrap();
        assert!(series.points.iter().all(|&(_, v)| v == 1.0));
        for kind in [BaselineKind::Bah, BaselineKind::Mv, BaselineKind::Tsm] {
            let s = backtest(&Policy::Baseline(kind, BaselineParams::default()), &d, &cfg).unwrap();
            assert_eq!(s.metrics(DdMode::Std).tr, 0.0, "{kind:?}");
        }
    }

    #[test]
    fn bah_profits_on_rising_day() {
        let d = days(Pattern::Trend, 1, 5);
        let spec_cfg = EnvConfig::default();
        let s = backtest(&Policy::Baseline(BaselineKind::Bah, BaselineParams::default()), &d, &spec_cfg).unwrap();
        assert!(s.metrics(DdMode::Std).tr > 0.0);
    }

    #[test]
    fn series_starts_at_one_and_chains() {
        let d = days(Pattern::Sine, 3, 1);
        let s = backtest(&Policy::Random { seed: 2 }, &d, &EnvConfig::default()).unwrap();
        assert_eq!(s.points[0].1, 1.0);
        assert_eq!(s.daily.len(), 4);
        let per_day = d[0].tradable_minutes();
        assert_eq!(s.points.len(), 3 * per_day);
        assert_eq!(s.points[per_day - 1].1, s.daily[1]);
        assert_eq!(s.points.last().unwrap().1, s.final_value());
    }

    #[test]
    fn network_backtest_is_deterministic_and_checks_shapes() {
        let d = days(Pattern::VShape, 2, 4);
        let cfg = EnvConfig::default();
        let net = NetConfig {
            macro_hidden: 8,
            macro_embed: 8,
            lstm_hidden: 8,
            head_hidden: 8,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = NetworkParams::new(&net, cfg.n_price, cfg.n_qty, &mut rng);
        let policy = Policy::Network(Box::new(params.clone()));
        assert_eq!(backtest(&policy, &d, &cfg).unwrap(), backtest(&policy, &d, &cfg).unwrap());
        let wrong = EnvConfig {
            n_qty: 7,
            ..cfg.clone()
        };
        assert!(matches!(backtest(&policy, &d, &wrong), Err(EvalError::Mismatch(_))));
    }

    #[test]
    fn action_towards_reaches_target() {
        let cfg = EnvConfig::default();
        let a = action_towards(50, 0, &cfg);
        assert_eq!((a.price_idx, a.qty_idx), (4, 10));
        let a = action_towards(-50, 50, &cfg);
        assert_eq!((a.price_idx, a.qty_idx), (0, 0));
        let a = action_towards(0, 0, &cfg);
        assert_eq!(a.qty_idx, 5);
        let a = action_towards(0, 20, &cfg);
        assert_eq!(a.qty_idx, 3);
    }

    #[test]
    fn mv_goes_long_below_lower_band() {
        let mut closes = vec![100.0; 25];
        closes[24] = 95.0;
        let bp = BaselineParams::default();
        assert_eq!(baseline_target(BaselineKind::Mv, &bp, &closes, 24, 50), 50);
        closes[24] = 105.0;
        assert_eq!(baseline_target(BaselineKind::Mv, &bp, &closes, 24, 50), -50);
        assert_eq!(baseline_target(BaselineKind::Mv, &bp, &closes, 10, 50), 0);
    }
}
