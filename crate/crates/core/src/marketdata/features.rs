use super::{DataError, LobSnapshot, TradingDay, INDICATOR_WARMUP, LOB_LEVELS};

pub const INDICATOR_COUNT: usize = 11;
/// Indicators followed by the scaled OHLCV vector.
pub const MACRO_DIM: usize = INDICATOR_COUNT + 5;
pub const NORMALIZED_LOB_DIM: usize = 4 * LOB_LEVELS;
pub const MA_WINDOWS: [usize; 6] = [5, 10, 15, 20, 25, 30];

/// The eleven price-ratio indicators of one minute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndicatorVector {
    pub z_open: f64,
    pub z_high: f64,
    pub z_low: f64,
    pub z_close: f64,
    pub z_adj_close: f64,
    /// Moving-average ratios for windows 5, 10, ..., 30.
    pub z_d: [f64; 6],
}

impl IndicatorVector {
    pub fn to_array(&self) -> [f64; INDICATOR_COUNT] {
        let mut out = [0.0; INDICATOR_COUNT];
        out[0] = self.z_open;
        out[1] = self.z_high;
        out[2] = self.z_low;
        out[3] = self.z_close;
        out[4] = self.z_adj_close;
        out[5..].copy_from_slice(&self.z_d);
        out
    }
}

/// Computes the indicators at minute `t` using only bars of the same day.
pub fn compute_indicators(day: &TradingDay, t: usize) -> Result<IndicatorVector, DataError> {
    if t < INDICATOR_WARMUP || t >= day.len() {
        return Err(DataError::InsufficientHistory {
            index: t,
            needed: INDICATOR_WARMUP,
        });
    }
    let bar = &day.records[t].bar;
    let prev = &day.records[t - 1].bar;
    let adj_t = bar.adj_close;
    let mut z_d = [0.0; 6];
    for (slot, &k) in z_d.iter_mut().zip(MA_WINDOWS.iter()) {
        // mean(adj)/adj_t - 1 written as the mean deviation so constant windows give exactly 0
        let dev: f64 = (0..k)
            .map(|i| day.records[t - i].bar.adj_close - adj_t)
            .sum();
        *slot = dev / k as f64 / adj_t;
    }
    Ok(IndicatorVector {
        z_open: bar.open / bar.close - 1.0,
        z_high: bar.high / bar.close - 1.0,
        z_low: bar.low / bar.close - 1.0,
        z_close: bar.close / prev.close - 1.0,
        z_adj_close: bar.adj_close / prev.adj_close - 1.0,
        z_d,
    })
}

/// Indicators concatenated with the raw OHLCV vector. Prices are divided by the day's
/// first close and volume by the day's mean volume (0 when the day traded nothing).
pub fn macro_features(day: &TradingDay, t: usize) -> Result<[f64; MACRO_DIM], DataError> {
    let ind = compute_indicators(day, t)?;
    let first_close = day.records[0].bar.close;
    let mean_volume =
        day.records.iter().map(|r| r.bar.volume).sum::<f64>() / day.len() as f64;
    let bar = &day.records[t].bar;
    let mut out = [0.0; MACRO_DIM];
    out[..INDICATOR_COUNT].copy_from_slice(&ind.to_array());
    out[INDICATOR_COUNT] = bar.open / first_close;
    out[INDICATOR_COUNT + 1] = bar.high / first_close;
    out[INDICATOR_COUNT + 2] = bar.low / first_close;
    out[INDICATOR_COUNT + 3] = bar.close / first_close;
    out[INDICATOR_COUNT + 4] = if mean_volume > 0.0 {
        bar.volume / mean_volume
    } else {
        0.0
    };
    Ok(out)
}

/// Per level `i`: `(bid_price_i/bid_price_1, ask_price_i/ask_price_1, bid_qty_i/bid_qty_1,
/// ask_qty_i/ask_qty_1)`. Quantity ratios of a side are 0 when its level-1 quantity is 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedLob(pub [f64; NORMALIZED_LOB_DIM]);

impl NormalizedLob {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn normalize_lob(lob: &LobSnapshot) -> Result<NormalizedLob, DataError> {
    let bp1 = lob.bid_price[0];
    let ap1 = lob.ask_price[0];
    if !(bp1 > 0.0 && ap1 > 0.0) {
        return Err(DataError::NonPositivePrice);
    }
    let bq1 = lob.bid_qty[0] as f64;
    let aq1 = lob.ask_qty[0] as f64;
    let ratio = |q: u64, q1: f64| if q1 > 0.0 { q as f64 / q1 } else { 0.0 };
    let mut out = [0.0; NORMALIZED_LOB_DIM];
    for i in 0..LOB_LEVELS {
        out[4 * i] = lob.bid_price[i] / bp1;
        out[4 * i + 1] = lob.ask_price[i] / ap1;
        out[4 * i + 2] = ratio(lob.bid_qty[i], bq1);
        out[4 * i + 3] = ratio(lob.ask_qty[i], aq1);
    }
    Ok(NormalizedLob(out))
}
