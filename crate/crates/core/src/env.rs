//! The single-asset intraday trading MDP.
//!
//! Time runs from `warmup` to the day's last minute `T`. At each minute `t < T` the
//! agent's action decodes to a limit order executed against the minute-`t` book; `pos_t`
//! is the position after that fill. At `T` the position is force-closed whatever the
//! action and the episode ends.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exchange::{close_at_market, execute, Fill, LimitOrder};
use crate::marketdata::{
    macro_features, normalize_lob, DataError, NormalizedLob, TradingDay, INDICATOR_WARMUP,
    MACRO_DIM,
};

pub const PRIVATE_DIM: usize = 3;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("day has {len} minutes; needs more than warmup + 1 = {needed}")]
    DayTooShort { len: usize, needed: usize },
    #[error("episode already finished")]
    Terminal,
    #[error("initial position {0} exceeds the position cap")]
    PositionOutOfRange(i64),
    #[error("invalid env config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ExecutionMode {
    /// Admissible fill quantity comes from the book but is booked at the minute close,
    /// which makes the reward equal the account-value change.
    #[default]
    #[serde(rename = "close")]
    CloseBooked,
    /// Fills are booked at the book VWAP; reward is the account-value change.
    #[serde(rename = "lob-vwap")]
    LobVwap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub fee_rate: f64,
    pub leverage: f64,
    pub max_position: i64,
    pub n_price: usize,
    pub n_qty: usize,
    pub tick_size: f64,
    /// Micro sequences hold `seq_len + 1` minutes.
    pub seq_len: usize,
    pub hindsight_weight: f64,
    pub hindsight_horizon: usize,
    pub warmup: usize,
    pub execution_mode: ExecutionMode,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            fee_rate: 2.3e-5,
            leverage: 5.0,
            max_position: 50,
            n_price: 5,
            n_qty: 11,
            tick_size: 0.05,
            seq_len: 4,
            hindsight_weight: 0.1,
            hindsight_horizon: 30,
            warmup: INDICATOR_WARMUP,
            execution_mode: ExecutionMode::CloseBooked,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::Config(m.to_string()));
        if !(self.fee_rate.is_finite() && self.fee_rate >= 0.0) {
            return bad("fee_rate must be >= 0");
        }
        if !(self.leverage.is_finite() && self.leverage >= 1.0) {
            return bad("leverage must be >= 1");
        }
        if self.max_position < 1 {
            return bad("max_position must be >= 1");
        }
        if self.n_price < 1 || self.n_qty < 1 {
            return bad("branch sizes must be >= 1");
        }
        if self.n_qty.is_multiple_of(2) {
            return bad("n_qty must be odd");
        }
        if !(self.tick_size.is_finite() && self.tick_size > 0.0) {
            return bad("tick_size must be > 0");
        }
        if self.hindsight_horizon < 1 {
            return bad("hindsight_horizon must be >= 1");
        }
        if !(self.hindsight_weight.is_finite() && self.hindsight_weight >= 0.0) {
            return bad("hindsight_weight must be >= 0");
        }
        if self.warmup < INDICATOR_WARMUP {
            return bad("warmup must cover the 30-minute indicator window");
        }
        Ok(())
    }

    /// A copy with the hindsight bonus switched off, as used for evaluation.
    pub fn for_evaluation(&self) -> Self {
        Self {
            hindsight_weight: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivateState {
    pub position: i64,
    pub cash: f64,
    /// Fraction of the tradable session left, 1 at the first decision and 0 at the last.
    pub remaining_time: f64,
}

impl PrivateState {
    pub fn normalized(&self, max_position: i64, c1: f64) -> [f64; PRIVATE_DIM] {
        [
            self.position as f64 / max_position as f64,
            self.cash / c1,
            self.remaining_time,
        ]
    }

    /// Signed mark-to-market account value.
    pub fn equity(&self, price: f64) -> f64 {
        self.cash + self.position as f64 * price
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub macro_features: [f64; MACRO_DIM],
    pub lob_seq: Vec<NormalizedLob>,
    pub private_seq: Vec<[f64; PRIVATE_DIM]>,
    pub private: PrivateState,
    pub t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action {
    pub price_idx: usize,
    pub qty_idx: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub order: LimitOrder,
    pub fill: Fill,
    pub position: i64,
    pub cash: f64,
    /// Mark-to-market account value over initial cash, priced at the next close (or at
    /// the final close once flattened).
    pub net_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    /// `None` once the episode is over.
    pub next_state: Option<EnvState>,
    pub reward: f64,
    pub hindsight_reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// A trading day with its per-minute features computed once.
#[derive(Debug, Clone)]
pub struct PreparedDay {
    pub day: TradingDay,
    macro_rows: Vec<[f64; MACRO_DIM]>,
    lob_rows: Vec<NormalizedLob>,
    warmup: usize,
}

impl PreparedDay {
    pub fn new(day: TradingDay, warmup: usize) -> Result<Self, EnvError> {
        if day.len() <= warmup + 1 {
            return Err(EnvError::DayTooShort {
                len: day.len(),
                needed: warmup + 2,
            });
        }
        let macro_rows = (warmup..day.len())
            .map(|t| macro_features(&day, t))
            .collect::<Result<Vec<_>, _>>()?;
        let lob_rows = day
            .records
            .iter()
            .map(|r| normalize_lob(&r.lob))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            day,
            macro_rows,
            lob_rows,
            warmup,
        })
    }

    pub fn prepare_all(days: &[TradingDay], warmup: usize) -> Result<Vec<Self>, EnvError> {
        days.iter().map(|d| Self::new(d.clone(), warmup)).collect()
    }

    pub fn warmup(&self) -> usize {
        self.warmup
    }

    /// Number of decisions in one episode (`T - warmup + 1`).
    pub fn tradable_minutes(&self) -> usize {
        self.day.len() - self.warmup
    }

    /// Default starting cash: enough to carry `max_position` contracts at the first
    /// decision's close under the configured leverage.
    pub fn initial_cash(&self, cfg: &EnvConfig) -> f64 {
        cfg.max_position as f64 * self.day.close(self.warmup) / cfg.leverage
    }
}

/// Turns branch indices into a limit order, clamping quantity to the position cap and the
/// leverage margin rule. Reducing exposure is always allowed.
pub fn decode_action(
    action: Action,
    private: &PrivateState,
    close: f64,
    cfg: &EnvConfig,
) -> LimitOrder {
    let price_center = (cfg.n_price as f64 - 1.0) / 2.0;
    let target_price = (close + (action.price_idx as f64 - price_center) * cfg.tick_size)
        .max(f64::MIN_POSITIVE);
    let half = (cfg.n_qty as i64 - 1) / 2;
    if half == 0 || action.qty_idx as i64 == half {
        return LimitOrder {
            target_price,
            signed_qty: 0,
        };
    }
    let raw = (cfg.max_position as f64 * (action.qty_idx as i64 - half) as f64 / half as f64)
        .round() as i64;
    let pos = private.position;
    let margin_cap = (cfg.leverage * private.equity(close)).max(0.0) / close;
    let cap = (margin_cap.floor() as i64).min(cfg.max_position);
    let hi = cap.max(pos);
    let lo = (-cap).min(pos);
    let next = (pos + raw).clamp(lo, hi);
    LimitOrder {
        target_price,
        signed_qty: next - pos,
    }
}

/// `r + w * (p_{min(t+h, T)} - p_t) * pos_t`.
pub fn hindsight_reward(day: &TradingDay, t: usize, position: i64, reward: f64, cfg: &EnvConfig) -> f64 {
    // adding a zero bonus would turn -0.0 into +0.0
    if cfg.hindsight_weight == 0.0 {
        return reward;
    }
    let future = (t + cfg.hindsight_horizon).min(day.last_index());
    reward + cfg.hindsight_weight * (day.close(future) - day.close(t)) * position as f64
}

/// `(cash + p * |pos|) / c1`.
pub fn net_value(private: &PrivateState, p_close: f64, c1: f64) -> f64 {
    (private.cash + p_close * private.position.unsigned_abs() as f64) / c1
}

/// One episode over one prepared day.
pub struct Env<'a> {
    day: &'a PreparedDay,
    cfg: &'a EnvConfig,
    c1: f64,
    private: PrivateState,
    history: Vec<[f64; PRIVATE_DIM]>,
    t: usize,
    done: bool,
}

impl<'a> Env<'a> {
    /// Starting private state: flat with the default cash.
    pub fn default_initial(day: &PreparedDay, cfg: &EnvConfig) -> PrivateState {
        PrivateState {
            position: 0,
            cash: day.initial_cash(cfg),
            remaining_time: 1.0,
        }
    }

    /// Starting private state holding `position` contracts, with cash chosen so the
    /// account value still equals the default cash.
    pub fn augmented_initial(day: &PreparedDay, cfg: &EnvConfig, position: i64) -> PrivateState {
        let c1 = day.initial_cash(cfg);
        PrivateState {
            position,
            cash: c1 - position as f64 * day.day.close(day.warmup),
            remaining_time: 1.0,
        }
    }

    pub fn reset(
        day: &'a PreparedDay,
        cfg: &'a EnvConfig,
        initial: Option<PrivateState>,
    ) -> Result<(Self, EnvState), EnvError> {
        if day.day.len() <= cfg.warmup + 1 || day.warmup != cfg.warmup {
            return Err(EnvError::DayTooShort {
                len: day.day.len(),
                needed: cfg.warmup + 2,
            });
        }
        let mut private = initial.unwrap_or_else(|| Self::default_initial(day, cfg));
        if private.position.abs() > cfg.max_position {
            return Err(EnvError::PositionOutOfRange(private.position));
        }
        private.remaining_time = 1.0;
        let c1 = day.initial_cash(cfg);
        let env = Self {
            day,
            cfg,
            c1,
            private,
            history: vec![private.normalized(cfg.max_position, c1)],
            t: cfg.warmup,
            done: false,
        };
        let state = env.state();
        Ok((env, state))
    }

    pub fn initial_cash(&self) -> f64 {
        self.c1
    }

    pub fn private(&self) -> PrivateState {
        self.private
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn day(&self) -> &'a PreparedDay {
        self.day
    }

    fn remaining_time(&self, t: usize) -> f64 {
        let last = self.day.day.last_index();
        (last - t) as f64 / (last - self.cfg.warmup) as f64
    }

    /// Observation at the current minute.
    pub fn state(&self) -> EnvState {
        let k = self.cfg.seq_len;
        let t = self.t;
        let lob_seq = (0..=k)
            .map(|j| self.day.lob_rows[(t + j).saturating_sub(k)])
            .collect();
        let n = self.history.len();
        let private_seq = (0..=k)
            .map(|j| self.history[(n + j).saturating_sub(k + 1)])
            .collect();
        EnvState {
            macro_features: self.day.macro_rows[t - self.cfg.warmup],
            lob_seq,
            private_seq,
            private: self.private,
            t,
        }
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::Terminal);
        }
        let day = &self.day.day;
        let t = self.t;
        let last = day.last_index();
        let p_t = day.close(t);
        let lob = &day.records[t].lob;
        let prev = self.private;

        let (order, fill) = if t == last {
            let fill = close_at_market(prev.position, lob);
            (
                LimitOrder {
                    target_price: lob.bid_price[0],
                    signed_qty: -prev.position,
                },
                fill,
            )
        } else {
            let order = decode_action(action, &prev, p_t, self.cfg);
            (order, execute(&order, lob))
        };
        let delta = fill.filled_qty;
        let book_price = match self.cfg.execution_mode {
            ExecutionMode::CloseBooked => p_t,
            ExecutionMode::LobVwap if delta != 0 => fill.vwap,
            ExecutionMode::LobVwap => p_t,
        };
        let fee = self.cfg.fee_rate * book_price * delta.unsigned_abs() as f64;
        let position = prev.position + delta;
        let cash = prev.cash - delta as f64 * book_price - fee;
        let p_next = if t == last { p_t } else { day.close(t + 1) };

        let reward = match self.cfg.execution_mode {
            ExecutionMode::CloseBooked => {
                (p_next - p_t) * position as f64
                    - self.cfg.fee_rate * p_t * (position - prev.position).unsigned_abs() as f64
            }
            ExecutionMode::LobVwap => {
                (cash + position as f64 * p_next) - (prev.cash + prev.position as f64 * p_t)
            }
        };
        let hindsight = hindsight_reward(day, t, position, reward, self.cfg);

        let done = t == last;
        let next_t = if done { t } else { t + 1 };
        self.private = PrivateState {
            position,
            cash,
            remaining_time: self.remaining_time(next_t),
        };
        let info = StepInfo {
            order,
            fill,
            position,
            cash,
            net_value: self.private.equity(p_next) / self.c1,
        };
        let next_state = if done {
            self.done = true;
            None
        } else {
            self.t = next_t;
            self.history
                .push(self.private.normalized(self.cfg.max_position, self.c1));
            Some(self.state())
        };
        Ok(StepResult {
            next_state,
            reward,
            hindsight_reward: hindsight,
            done,
            info,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marketdata::{generate_synthetic, Pattern, SyntheticSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn prepared(pattern: Pattern, volatility: f64, seed: u64) -> PreparedDay {
        let spec = SyntheticSpec {
            pattern: Some(pattern),
            volatility,
            minutes_per_day: 120,
            ..SyntheticSpec::default()
        };
        let day = generate_synthetic(&spec, seed).unwrap().remove(0);
        PreparedDay::new(day, INDICATOR_WARMUP).unwrap()
    }

    const SKIP: Action = Action { price_idx: 2, qty_idx: 5 };

    #[test]
    fn reset_default_initial_private_state() {
        let day = prepared(Pattern::Sine, 0.001, 1);
        let cfg = EnvConfig::default();
        let (env, state) = Env::reset(&day, &cfg, None).unwrap();
        let p = day.day.close(29);
        assert_eq!(state.t, 29);
        assert_eq!(state.private.position, 0);
        assert_eq!(state.private.cash, 50.0 * p / 5.0);
        assert_eq!(state.private.remaining_time, 1.0);
        assert_eq!(env.initial_cash(), 50.0 * p / 5.0);
        assert_eq!(state.lob_seq.len(), 5);
        assert_eq!(state.private_seq.len(), 5);
    }

    #[test]
    fn reset_with_k_zero_and_position_override() {
        let day = prepared(Pattern::Flat, 0.0, 1);
        let cfg = EnvConfig { seq_len: 0, ..EnvConfig::default() };
        let init = Env::augmented_initial(&day, &cfg, 10);
        let (_, state) = Env::reset(&day, &cfg, Some(init)).unwrap();
        assert_eq!(state.lob_seq.len(), 1);
        assert_eq!(state.private_seq.len(), 1);
        assert_eq!(state.private.position, 10);
        assert_eq!(state.lob_seq[0], day.lob_rows[29]);
    }

    #[test]
    fn short_day_rejected() {
        let spec = SyntheticSpec { minutes_per_day: 30, ..SyntheticSpec::default() };
        let day = generate_synthetic(&spec, 0).unwrap().remove(0);
        assert!(matches!(PreparedDay::new(day, 29), Err(EnvError::DayTooShort { .. })));
    }

    #[test]
    fn decode_center_and_price_offsets() {
        let cfg = EnvConfig::default();
        let private = PrivateState { position: 0, cash: 1000.0, remaining_time: 1.0 };
        let o = decode_action(Action { price_idx: 2, qty_idx: 5 }, &private, 100.0, &cfg);
        assert_eq!(o.signed_qty, 0);
        assert_eq!(o.target_price, 100.0);
        let o = decode_action(Action { price_idx: 4, qty_idx: 6 }, &private, 100.0, &cfg);
        assert_eq!(o.signed_qty, 10);
        assert!((o.target_price - 100.1).abs() < 1e-12);
    }

    #[test]
    fn decode_clamps_to_position_cap() {
        let cfg = EnvConfig::default();
        let private = PrivateState { position: 40, cash: 1e9, remaining_time: 1.0 };
        let o = decode_action(Action { price_idx: 2, qty_idx: 10 }, &private, 100.0, &cfg);
        assert_eq!(o.signed_qty, 10);
        let o = decode_action(Action { price_idx: 2, qty_idx: 0 }, &private, 100.0, &cfg);
        assert_eq!(o.signed_qty, -50);
    }

    #[test]
    fn decode_applies_margin_rule() {
        let cfg = EnvConfig::default();
        // equity 500 at price 100 and 5x leverage allows 25 contracts
        let private = PrivateState { position: 0, cash: 500.0, remaining_time: 1.0 };
        let o = decode_action(Action { price_idx: 2, qty_idx: 10 }, &private, 100.0, &cfg);
        assert_eq!(o.signed_qty, 25);
        // already above the margin cap: can only reduce
        let over = PrivateState { position: 30, cash: -2500.0, remaining_time: 1.0 };
        let o = decode_action(Action { price_idx: 2, qty_idx: 7 }, &over, 100.0, &cfg);
        assert_eq!(o.signed_qty, 0);
        let o = decode_action(Action { price_idx: 2, qty_idx: 4 }, &over, 100.0, &cfg);
        assert_eq!(o.signed_qty, -10);
    }

    #[test]
    fn skip_with_flat_position_has_zero_reward() {
        let day = prepared(Pattern::Sine, 0.001, 2);
        let cfg = EnvConfig::default();
        let (mut env, _) = Env::reset(&day, &cfg, None).unwrap();
        loop {
            let r = env.step(SKIP).unwrap();
            assert_eq!(r.reward, 0.0);
            if r.done {
                break;
            }
        }
        assert!(matches!(env.step(SKIP), Err(EnvError::Terminal)));
    }

    #[test]
    fn reward_is_position_times_price_change() {
        let day = prepared(Pattern::Trend, 0.0, 3);
        let cfg = EnvConfig { fee_rate: 0.0, ..EnvConfig::default() };
        let (mut env, _) = Env::reset(&day, &cfg, None).unwrap();
        let r = env.step(Action { price_idx: 4, qty_idx: 6 }).unwrap();
        assert_eq!(r.info.position, 10);
        let expected = (day.day.close(30) - day.day.close(29)) * 10.0;
        assert!((r.reward - expected).abs() < 1e-12);
    }

    #[test]
    fn fee_term_on_flat_prices() {
        let day = prepared(Pattern::Flat, 0.0, 3);
        let cfg = EnvConfig::default();
        let (mut env, _) = Env::reset(&day, &cfg, None).unwrap();
        let r = env.step(Action { price_idx: 4, qty_idx: 6 }).unwrap();
        assert_eq!(r.info.position, 10);
        assert!((r.reward - -0.023).abs() < 1e-12);
    }

    #[test]
    fn passive_limit_does_not_fill() {
        let day = prepared(Pattern::Flat, 0.0, 3);
        let cfg = EnvConfig::default();
        let (mut env, _) = Env::reset(&day, &cfg, None).unwrap();
        // limit at the close sits below the best ask
        let r = env.step(Action { price_idx: 2, qty_idx: 10 }).unwrap();
        assert_eq!(r.info.position, 0);
        assert_eq!(r.info.order.signed_qty, 50);
    }

    #[test]
    fn hindsight_bonus_cases() {
        let day = prepared(Pattern::Trend, 0.0, 4).day;
        let cfg = EnvConfig { hindsight_weight: 0.1, hindsight_horizon: 30, ..EnvConfig::default() };
        let t = 40;
        let diff = day.close(t + 30) - day.close(t);
        let got = hindsight_reward(&day, t, 10, 1.25, &cfg);
        assert!((got - (1.25 + diff)).abs() < 1e-12);
        assert_eq!(hindsight_reward(&day, t, 0, 1.25, &cfg), 1.25);
        let off = EnvConfig { hindsight_weight: 0.0, ..cfg.clone() };
        assert_eq!(hindsight_reward(&day, t, 10, 1.25, &off), 1.25);
        // horizon truncated at the last minute
        let end = hindsight_reward(&day, 110, 1, 0.0, &cfg);
        assert!((end - 0.1 * (day.close(119) - day.close(110))).abs() < 1e-12);
    }

    #[test]
    fn net_value_examples() {
        let p = PrivateState { position: 0, cash: 1000.0, remaining_time: 1.0 };
        assert_eq!(net_value(&p, 100.0, 1000.0), 1.0);
        let p = PrivateState { position: -50, cash: 0.0, remaining_time: 1.0 };
        assert_eq!(net_value(&p, 20.0, 1000.0), 1.0);
        let p = PrivateState { position: 4, cash: 600.0, remaining_time: 1.0 };
        assert_eq!(net_value(&p, 100.0, 1000.0), 1.0);
    }

    #[test]
    fn conservation_and_flat_finish_under_random_actions() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for seed in 0..5 {
            let day = prepared(Pattern::Sine, 0.002, seed);
            for mode in [ExecutionMode::CloseBooked, ExecutionMode::LobVwap] {
                let cfg = EnvConfig { execution_mode: mode, ..EnvConfig::default() };
                let (mut env, _) = Env::reset(&day, &cfg, None).unwrap();
                let start_cash = env.private().cash;
                let mut total = 0.0;
                loop {
                    let a = Action {
                        price_idx: rng.random_range(0..5),
                        qty_idx: rng.random_range(0..11),
                    };
                    let r = env.step(a).unwrap();
                    assert!(r.info.position.abs() <= cfg.max_position);
                    total += r.reward;
                    if r.done {
                        break;
                    }
                }
                assert_eq!(env.private().position, 0);
                let delta = env.private().cash - start_cash;
                assert!((total - delta).abs() <= 1e-6 * delta.abs().max(1.0));
            }
        }
    }

    #[test]
    fn private_sequence_tracks_history() {
        let day = prepared(Pattern::Flat, 0.0, 1);
        let cfg = EnvConfig { seq_len: 2, fee_rate: 0.0, ..EnvConfig::default() };
        let (mut env, s0) = Env::reset(&day, &cfg, None).unwrap();
        assert!(s0.private_seq.iter().all(|p| *p == s0.private_seq[0]));
        let r = env.step(Action { price_idx: 4, qty_idx: 6 }).unwrap();
        let s1 = r.next_state.unwrap();
        assert_eq!(s1.private_seq[2][0], 10.0 / 50.0);
        assert_eq!(s1.private_seq[1], s0.private_seq[0]);
        let n = (119 - 29) as f64;
        assert!((s1.private_seq[2][2] - (n - 1.0) / n).abs() < 1e-15);
    }
}
