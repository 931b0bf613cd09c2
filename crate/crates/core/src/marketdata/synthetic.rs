use chrono::{Datelike, Duration, NaiveDate, NaiveTime, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Bar, DataError, LobSnapshot, MinuteRecord, TradingDay, LOB_LEVELS};

/// Deterministic intraday price shape that repeats every day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    Flat,
    Trend,
    VShape,
    Sine,
}

impl std::str::FromStr for Pattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flat" => Ok(Self::Flat),
            "trend" => Ok(Self::Trend),
            "v-shape" | "vshape" => Ok(Self::VShape),
            "sine" => Ok(Self::Sine),
            "random" | "none" => Err("use no pattern for a random walk".into()),
            other => Err(format!("unknown pattern `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub days: usize,
    pub minutes_per_day: usize,
    pub initial_price: f64,
    pub tick_size: f64,
    /// Per-minute log-noise scale. Without a pattern it drives a geometric random walk;
    /// with one, a log random walk restarted each morning multiplies the shape, so the
    /// shape is the only predictable part of minute returns.
    pub volatility: f64,
    pub pattern: Option<Pattern>,
    /// Fractional depth of the v-shape trough and the sine half-range.
    pub amplitude: f64,
    /// Fractional change from open to close for `trend` and the v-shape end level.
    pub drift: f64,
    /// Minute of the v-shape trough; defaults to the middle of the day.
    pub pivot: Option<usize>,
    /// Level-i book depth is `base_depth * i` with +-20% jitter.
    pub base_depth: f64,
    pub start_date: NaiveDate,
    pub session_open: NaiveTime,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            days: 1,
            minutes_per_day: 240,
            initial_price: 100.0,
            tick_size: 0.05,
            volatility: 0.0005,
            pattern: None,
            amplitude: 0.02,
            drift: 0.01,
            pivot: None,
            base_depth: 20.0,
            start_date: NaiveDate::from_ymd_opt(2024, 1, 2).expect("valid date"),
            session_open: NaiveTime::from_hms_opt(9, 30, 0).expect("valid time"),
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidSpec(m.to_string()));
        if self.days == 0 {
            return bad("days must be positive");
        }
        if self.minutes_per_day < 2 {
            return bad("minutes_per_day must be at least 2");
        }
        if self.minutes_per_day > 24 * 60 {
            return bad("minutes_per_day must fit in one calendar day");
        }
        if !(self.initial_price.is_finite() && self.initial_price > 0.0) {
            return bad("initial_price must be positive");
        }
        if !(self.tick_size.is_finite() && self.tick_size > 0.0) {
            return bad("tick_size must be positive");
        }
        if !(self.volatility.is_finite() && self.volatility >= 0.0) {
            return bad("volatility must be non-negative");
        }
        if !(self.base_depth.is_finite() && self.base_depth > 0.0) {
            return bad("base_depth must be positive");
        }
        if !(0.0..1.0).contains(&self.amplitude) {
            return bad("amplitude must lie in [0, 1)");
        }
        if self.drift <= -1.0 {
            return bad("drift must exceed -1");
        }
        if let Some(p) = self.pivot {
            if p == 0 || p + 1 >= self.minutes_per_day {
                return bad("pivot must lie strictly inside the day");
            }
        }
        Ok(())
    }

    fn pivot_minute(&self) -> usize {
        self.pivot.unwrap_or(self.minutes_per_day / 2)
    }

    fn shape(&self, pattern: Pattern, t: usize) -> f64 {
        let p0 = self.initial_price;
        let last = (self.minutes_per_day - 1) as f64;
        let x = t as f64;
        match pattern {
            Pattern::Flat => p0,
            Pattern::Trend => p0 * (1.0 + self.drift * x / last),
            Pattern::Sine => {
                p0 * (1.0 + self.amplitude * (2.0 * std::f64::consts::PI * x / last).sin())
            }
            Pattern::VShape => {
                let pivot = self.pivot_minute();
                let trough = p0 * (1.0 - self.amplitude);
                if t <= pivot {
                    p0 + (trough - p0) * x / pivot as f64
                } else {
                    let end = p0 * (1.0 + self.drift);
                    trough + (end - trough) * (x - pivot as f64) / (last - pivot as f64)
                }
            }
        }
    }
}

fn next_weekday(mut d: NaiveDate) -> NaiveDate {
    loop {
        d += Duration::days(1);
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            return d;
        }
    }
}

/// Generates a reproducible dataset: a pure function of `(spec, seed)`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Vec<TradingDay>, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.minutes_per_day;
    let vol = spec.volatility;
    let tick = spec.tick_size;
    let mut date = spec.start_date;
    while matches!(date.weekday(), Weekday::Sat | Weekday::Sun) {
        date = next_weekday(date);
    }
    let mut walk_price = spec.initial_price;
    let mut days = Vec::with_capacity(spec.days);

    for _ in 0..spec.days {
        let open_ts = date.and_time(spec.session_open);
        let mut records = Vec::with_capacity(n);
        let mut prev_close: Option<f64> = None;
        let mut log_noise = 0.0;
        for t in 0..n {
            let eps: f64 = rng.sample(StandardNormal);
            let close = match spec.pattern {
                Some(p) => {
                    if t > 0 {
                        log_noise += vol * eps;
                    }
                    spec.shape(p, t) * log_noise.exp()
                }
                None => {
                    if t > 0 || prev_close.is_some() {
                        walk_price *= (vol * eps).exp();
                    }
                    walk_price
                }
            };
            let open = prev_close.unwrap_or(close);
            let up: f64 = rng.sample::<f64, _>(StandardNormal).abs();
            let down: f64 = rng.sample::<f64, _>(StandardNormal).abs();
            let high = open.max(close) * (vol * up).exp();
            let low = open.min(close) * (-vol * down).exp();
            let volume = rng.random_range(50u32..=500) as f64;

            let mut lob = LobSnapshot {
                bid_price: [0.0; LOB_LEVELS],
                bid_qty: [0; LOB_LEVELS],
                ask_price: [0.0; LOB_LEVELS],
                ask_qty: [0; LOB_LEVELS],
            };
            for i in 0..LOB_LEVELS {
                let offset = (i as f64 + 0.5) * tick;
                lob.bid_price[i] = close - offset;
                lob.ask_price[i] = close + offset;
                let level = (i + 1) as f64;
                let jb: f64 = rng.random_range(-1.0..=1.0);
                let ja: f64 = rng.random_range(-1.0..=1.0);
                lob.bid_qty[i] = (spec.base_depth * level * (1.0 + 0.2 * jb)).round().max(1.0) as u64;
                lob.ask_qty[i] = (spec.base_depth * level * (1.0 + 0.2 * ja)).round().max(1.0) as u64;
            }
            let bar = Bar {
                timestamp: open_ts + Duration::minutes(t as i64),
                open,
                high,
                low,
                close,
                adj_close: close,
                volume,
            };
            bar.validate()
                .and_then(|_| lob.validate())
                .map_err(|m| DataError::InvalidSpec(format!("generated minute {t}: {m}")))?;
            records.push(MinuteRecord { bar, lob });
            prev_close = Some(close);
        }
        days.push(TradingDay::new(date, records)?);
        date = next_weekday(date);
    }
    Ok(days)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(pattern: Pattern) -> SyntheticSpec {
        SyntheticSpec {
            pattern: Some(pattern),
            volatility: 0.0,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn flat_closes_equal_initial_price() {
        let days = generate_synthetic(&spec(Pattern::Flat), 1).unwrap();
        assert_eq!(days.len(), 1);
        assert_eq!(days[0].len(), 240);
        assert!(days[0].records.iter().all(|r| r.bar.close == 100.0));
    }

    #[test]
    fn same_seed_same_dataset() {
        let s = SyntheticSpec {
            days: 3,
            ..SyntheticSpec::default()
        };
        assert_eq!(generate_synthetic(&s, 9).unwrap(), generate_synthetic(&s, 9).unwrap());
        assert_ne!(generate_synthetic(&s, 9).unwrap(), generate_synthetic(&s, 10).unwrap());
    }

    #[test]
    fn v_shape_turns_at_pivot() {
        let s = SyntheticSpec {
            pivot: Some(97),
            ..spec(Pattern::VShape)
        };
        let closes = generate_synthetic(&s, 5).unwrap()[0].closes();
        // sign change of first differences located by scanning
        let diffs: Vec<f64> = closes.windows(2).map(|w| w[1] - w[0]).collect();
        let turn = diffs.iter().position(|d| *d > 0.0).unwrap();
        assert!(diffs[..turn].iter().all(|d| *d < 0.0));
        assert!(diffs[turn..].iter().all(|d| *d > 0.0));
        assert_eq!(turn, 97);
        let argmin = closes
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmin, 97);
    }

    #[test]
    fn book_is_symmetric_with_one_tick_spread() {
        let days = generate_synthetic(&spec(Pattern::Sine), 2).unwrap();
        for r in &days[0].records {
            let spread = r.lob.ask_price[0] - r.lob.bid_price[0];
            assert!((spread - 0.05).abs() < 1e-9);
            assert!(r.lob.bid_qty.iter().chain(r.lob.ask_qty.iter()).all(|&q| q > 0));
            let mid = 0.5 * (r.lob.ask_price[0] + r.lob.bid_price[0]);
            assert!((mid - r.bar.close).abs() < 1e-9);
        }
    }

    #[test]
    fn depth_grows_with_level_within_jitter() {
        let days = generate_synthetic(&SyntheticSpec::default(), 4).unwrap();
        for r in &days[0].records {
            for i in 0..LOB_LEVELS {
                let nominal = 20.0 * (i + 1) as f64;
                let q = r.lob.bid_qty[i] as f64;
                assert!(q >= (nominal * 0.8).round() && q <= (nominal * 1.2).round());
            }
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        for bad in [
            SyntheticSpec { initial_price: 0.0, ..Default::default() },
            SyntheticSpec { tick_size: -1.0, ..Default::default() },
            SyntheticSpec { days: 0, ..Default::default() },
            SyntheticSpec { minutes_per_day: 1, ..Default::default() },
        ] {
            assert!(matches!(generate_synthetic(&bad, 0), Err(DataError::InvalidSpec(_))));
        }
    }

    #[test]
    fn days_skip_weekends() {
        let s = SyntheticSpec { days: 5, ..Default::default() };
        let days = generate_synthetic(&s, 0).unwrap();
        // 2024-01-02 is a Tuesday
        let dates: Vec<String> = days.iter().map(|d| d.date.to_string()).collect();
        assert_eq!(dates.last().unwrap(), "2024-01-08");
    }
}
