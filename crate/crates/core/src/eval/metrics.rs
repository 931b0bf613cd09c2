//! Total return, Sharpe, Calmar, Sortino and maximum drawdown over daily net values.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("undefined: zero volatility")]
    ZeroVolatility,
    #[error("undefined: zero drawdown")]
    ZeroDrawdown,
    #[error("undefined: no negative returns")]
    NoDownside,
    #[error("undefined: not enough observations")]
    TooShort,
}

/// Risk measure used by the Sortino ratio.
///
/// The source definition reads "DD is the variance of the negative return". `Std` is the
/// conventional downside deviation, the square root of the mean squared negative return;
/// `Var` keeps the literal variance reading (the same quantity without the square root).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DdMode {
    #[default]
    Std,
    Var,
}

/// Relative change between consecutive values.
pub fn returns(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `(n_last - n_first) / n_first`.
pub fn total_return(values: &[f64]) -> f64 {
    match (values.first(), values.last()) {
        (Some(first), Some(last)) => (last - first) / first,
        _ => 0.0,
    }
}

/// Mean over population standard deviation. A deviation at rounding level relative to
/// the mean counts as zero, so equal returns compounded in floating point stay undefined.
pub fn sharpe(returns: &[f64]) -> Result<f64, MetricError> {
    if returns.len() < 2 {
        return Err(MetricError::TooShort);
    }
    let m = mean(returns);
    let var = returns.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / returns.len() as f64;
    let sd = var.sqrt();
    if sd <= 1e-12 * m.abs() {
        return Err(MetricError::ZeroVolatility);
    }
    Ok(m / sd)
}

/// Largest relative decline from a running peak, single pass.
pub fn max_drawdown(values: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut mdd = 0.0f64;
    for &v in values {
        if v > peak {
            peak = v;
        }
        if peak > 0.0 {
            mdd = mdd.max((peak - v) / peak);
        }
    }
    mdd
}

/// Mean return over maximum drawdown.
pub fn calmar(values: &[f64]) -> Result<f64, MetricError> {
    let r = returns(values);
    if r.is_empty() {
        return Err(MetricError::TooShort);
    }
    let mdd = max_drawdown(values);
    if mdd == 0.0 {
        return Err(MetricError::ZeroDrawdown);
    }
    Ok(mean(&r) / mdd)
}

/// Downside risk of a return sequence under `mode`.
pub fn downside_deviation(returns: &[f64], mode: DdMode) -> Result<f64, MetricError> {
    let neg: Vec<f64> = returns.iter().copied().filter(|r| *r < 0.0).collect();
    if neg.is_empty() {
        return Err(MetricError::NoDownside);
    }
    let semivar = neg.iter().map(|r| r * r).sum::<f64>() / neg.len() as f64;
    Ok(match mode {
        DdMode::Std => semivar.sqrt(),
        DdMode::Var => semivar,
    })
}

/// Mean return over downside deviation.
pub fn sortino(returns: &[f64], mode: DdMode) -> Result<f64, MetricError> {
    let dd = downside_deviation(returns, mode)?;
    Ok(mean(returns) / dd)
}

/// All metrics of one net-value path. Undefined ratios are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub tr: f64,
    pub sr: Option<f64>,
    pub cr: Option<f64>,
    pub sor: Option<f64>,
    pub mdd: f64,
}

impl MetricsReport {
    /// Computes the report from daily (end-of-day) net values starting at 1.
    pub fn from_daily(values: &[f64], mode: DdMode) -> Self {
        let r = returns(values);
        Self {
            tr: total_return(values),
            sr: sharpe(&r).ok(),
            cr: calmar(values).ok(),
            sor: sortino(&r, mode).ok(),
            mdd: max_drawdown(values),
        }
    }
}
