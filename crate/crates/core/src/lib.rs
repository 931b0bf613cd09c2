//! Intraday trading reinforcement-learning engine.
//!
//! The crate is organised bottom-up:
//!
//! - [`marketdata`]: minute bars, 5-level order book snapshots, CSV ingest, feature
//!   extraction and a seeded synthetic generator.
//! - [`exchange`]: immediate-or-cancel limit-order matching against a book snapshot.
//! - [`env`]: the trading MDP (state assembly, action decoding, reward, forced close).
//! - [`neural`]: a small f64 tensor engine with the fixed encoder/dueling-branch network,
//!   hand-written reverse-mode gradients and Adam.
//! - [`agent`]: prioritized replay, TD targets, the combined Q/volatility loss and the
//!   training loop.
//! - [`eval`]: backtesting, rule-based baselines and risk-adjusted metrics.
//! - [`config`]: the flat JSON run configuration shared with the command-line tool.
//!
//! With the default `parallel` feature, batch gradient evaluation, backtests over days and
//! the Monte Carlo helpers run on rayon; results are bit-identical to the sequential build
//! because every reduction happens in a fixed order.

pub mod agent;
pub mod config;
pub mod env;
pub mod eval;
pub mod exchange;
pub mod marketdata;
pub mod neural;
pub mod parallel;

pub use config::RunConfig;
