//! Minute bars, order book snapshots and the features derived from them.

mod features;
mod io;
mod synthetic;

pub use features::{
    compute_indicators, macro_features, normalize_lob, IndicatorVector, NormalizedLob,
    INDICATOR_COUNT, MACRO_DIM, MA_WINDOWS, NORMALIZED_LOB_DIM,
};
pub use io::{load_csv, read_csv, write_csv, CSV_HEADER};
pub use synthetic::{generate_synthetic, Pattern, SyntheticSpec};

use chrono::{NaiveDate, NaiveDateTime};
use thiserror::Error;

/// Number of book levels on each side.
pub const LOB_LEVELS: usize = 5;

/// Largest moving-average window is 30 minutes, so the first usable index is 29.
pub const INDICATOR_WARMUP: usize = 29;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("row {row}: timestamp {timestamp} does not increase within its day")]
    NonMonotonic { row: usize, timestamp: NaiveDateTime },
    #[error("row {row}: missing {column} with no earlier value to forward-fill from")]
    NothingToFill { row: usize, column: String },
    #[error("invalid rows after repair: {}", format_rows(.0))]
    InvalidRows(Vec<(usize, String)>),
    #[error("insufficient history: index {index} needs at least {needed}")]
    InsufficientHistory { index: usize, needed: usize },
    #[error("non-positive level-1 price")]
    NonPositivePrice,
    #[error("invalid generator parameter: {0}")]
    InvalidSpec(String),
    #[error("trading day {0} has fewer than 2 records")]
    ShortDay(NaiveDate),
}

fn format_rows(rows: &[(usize, String)]) -> String {
    rows.iter()
        .map(|(r, m)| format!("row {r} ({m})"))
        .collect::<Vec<_>>()
        .join("; ")
}

/// One OHLCV bar.
#[derive(Debug, Clone, PartialEq)]
pub struct Bar {
    pub timestamp: NaiveDateTime,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub adj_close: f64,
    pub volume: f64,
}

impl Bar {
    pub fn validate(&self) -> Result<(), String> {
        let prices = [self.open, self.high, self.low, self.close, self.adj_close];
        if prices.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err("prices must be finite and positive".into());
        }
        if !(self.volume.is_finite() && self.volume >= 0.0) {
            return Err("volume must be non-negative".into());
        }
        let body_lo = self.open.min(self.close);
        let body_hi = self.open.max(self.close);
        if self.low > body_lo || body_hi > self.high {
            return Err("bar violates low <= open,close <= high".into());
        }
        Ok(())
    }
}

/// End-of-minute snapshot of the best five levels on each side.
#[derive(Debug, Clone, PartialEq)]
pub struct LobSnapshot {
    pub bid_price: [f64; LOB_LEVELS],
    pub bid_qty: [u64; LOB_LEVELS],
    pub ask_price: [f64; LOB_LEVELS],
    pub ask_qty: [u64; LOB_LEVELS],
}

impl LobSnapshot {
    pub fn validate(&self) -> Result<(), String> {
        let all = self.bid_price.iter().chain(self.ask_price.iter());
        if all.clone().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err("book prices must be finite and positive".into());
        }
        if self.bid_price[0] >= self.ask_price[0] {
            return Err("crossed book: bid_price_1 >= ask_price_1".into());
        }
        for i in 1..LOB_LEVELS {
            if self.bid_price[i] >= self.bid_price[i - 1] {
                return Err(format!("bid prices not strictly decreasing at level {}", i + 1));
            }
            if self.ask_price[i] <= self.ask_price[i - 1] {
                return Err(format!("ask prices not strictly increasing at level {}", i + 1));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinuteRecord {
    pub bar: Bar,
    pub lob: LobSnapshot,
}

/// One calendar day of minute records, ordered by timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct TradingDay {
    pub date: NaiveDate,
    pub records: Vec<MinuteRecord>,
}

impl TradingDay {
    pub fn new(date: NaiveDate, records: Vec<MinuteRecord>) -> Result<Self, DataError> {
        if records.len() < 2 {
            return Err(DataError::ShortDay(date));
        }
        for (i, w) in records.windows(2).enumerate() {
            if w[1].bar.timestamp <= w[0].bar.timestamp {
                return Err(DataError::NonMonotonic {
                    row: i + 1,
                    timestamp: w[1].bar.timestamp,
                });
            }
        }
        Ok(Self { date, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Index of the final minute.
    pub fn last_index(&self) -> usize {
        self.records.len() - 1
    }

    pub fn close(&self, t: usize) -> f64 {
        self.records[t].bar.close
    }

    pub fn closes(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.bar.close).collect()
    }
}
