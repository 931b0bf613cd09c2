use proptest::prelude::*;

use scalper_core::env::{decode_action, Action, EnvConfig, PreparedDay, PrivateState};
use scalper_core::eval::{backtest, max_drawdown, BaselineKind, BaselineParams, DdMode, Policy};
use scalper_core::exchange::{execute, LimitOrder};
use scalper_core::marketdata::{generate_synthetic, LobSnapshot, Pattern, SyntheticSpec, LOB_LEVELS};

fn book() -> impl Strategy<Value = LobSnapshot> {
    (
        50.0..150.0f64,
        prop::array::uniform5(1u32..4),
        prop::array::uniform5(1u32..4),
        prop::array::uniform5(0u64..50),
        prop::array::uniform5(0u64..50),
    )
        .prop_map(|(mid, bid_gaps, ask_gaps, bid_qty, ask_qty)| {
            let tick = 0.05;
            let mut lob = LobSnapshot {
                bid_price: [0.0; LOB_LEVELS],
                bid_qty,
                ask_price: [0.0; LOB_LEVELS],
                ask_qty,
            };
            let (mut bid, mut ask) = (mid - 0.5 * tick, mid + 0.5 * tick);
            for i in 0..LOB_LEVELS {
                lob.bid_price[i] = bid;
                lob.ask_price[i] = ask;
                bid -= tick * bid_gaps[i] as f64;
                ask += tick * ask_gaps[i] as f64;
            }
            lob
        })
}

fn brute_mdd(v: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..v.len() {
        for j in i..v.len() {
            best = best.max((v[i] - v[j]) / v[i]);
        }
    }
    best
}

proptest! {
    #[test]
    fn fill_never_exceeds_order(lob in book(), qty in -200i64..200, offset in -1.0..1.0f64) {
        let mid = 0.5 * (lob.bid_price[0] + lob.ask_price[0]);
        let fill = execute(&LimitOrder { target_price: mid + offset, signed_qty: qty }, &lob);
        prop_assert!(fill.filled_qty.abs() <= qty.abs());
        prop_assert!(fill.filled_qty == 0 || fill.filled_qty.signum() == qty.signum());
        if fill.filled_qty > 0 {
            prop_assert!(fill.vwap <= mid + offset + 1e-9);
        } else if fill.filled_qty < 0 {
            prop_assert!(fill.vwap >= mid + offset - 1e-9);
        }
    }

    #[test]
    fn larger_or_more_aggressive_orders_fill_more(
        lob in book(), qty in 1i64..150, extra in 0i64..50, offset in -0.5..0.5f64, more in 0.0..0.5f64,
    ) {
        let mid = 0.5 * (lob.bid_price[0] + lob.ask_price[0]);
        let base = execute(&LimitOrder { target_price: mid + offset, signed_qty: qty }, &lob);
        let bigger = execute(&LimitOrder { target_price: mid + offset, signed_qty: qty + extra }, &lob);
        let pricier = execute(&LimitOrder { target_price: mid + offset + more, signed_qty: qty }, &lob);
        prop_assert!(bigger.filled_qty >= base.filled_qty);
        prop_assert!(pricier.filled_qty >= base.filled_qty);
        let sell = execute(&LimitOrder { target_price: mid - offset, signed_qty: -qty }, &lob);
        let cheaper = execute(&LimitOrder { target_price: mid - offset - more, signed_qty: -qty }, &lob);
        prop_assert!(cheaper.filled_qty <= sell.filled_qty);
    }

    #[test]
    fn streaming_mdd_matches_brute_force(v in prop::collection::vec(0.01..10.0f64, 1..80)) {
        prop_assert_eq!(max_drawdown(&v), brute_mdd(&v));
    }

    #[test]
    fn new_peak_never_raises_mdd(v in prop::collection::vec(0.01..10.0f64, 1..50), bump in 0.0..5.0f64) {
        let peak = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut more = v.clone();
        more.push(peak + bump);
        prop_assert!(max_drawdown(&more) <= max_drawdown(&v));
    }

    #[test]
    fn decoded_orders_respect_position_cap(
        position in -80i64..80,
        cash in -5000.0..20000.0f64,
        price in 50.0..150.0f64,
        price_idx in 0usize..5,
        qty_idx in 0usize..11,
    ) {
        let cfg = EnvConfig::default();
        let private = PrivateState { position, cash, remaining_time: 0.5 };
        let order = decode_action(Action { price_idx, qty_idx }, &private, price, &cfg);
        let next = position + order.signed_qty;
        let margin = ((cfg.leverage * private.equity(price)).max(0.0) / price).floor() as i64;
        let cap = margin.min(cfg.max_position);
        // either within the cap, or strictly reducing exposure without flipping beyond it
        prop_assert!(next.abs() <= cap || next.abs() <= position.abs());
        prop_assert!(next.abs() <= cfg.max_position.max(position.abs()));
    }
}

fn prepared(initial_price: f64, tick_size: f64) -> Vec<PreparedDay> {
    let spec = SyntheticSpec {
        days: 4,
        minutes_per_day: 100,
        initial_price,
        tick_size,
        pattern: Some(Pattern::Sine),
        ..SyntheticSpec::default()
    };
    let raw = generate_synthetic(&spec, 21).unwrap();
    PreparedDay::prepare_all(&raw, EnvConfig::default().warmup).unwrap()
}

#[test]
fn metrics_invariant_to_currency_scale() {
    // doubling every price (and the tick) doubles initial cash; net values are unchanged
    let a = prepared(100.0, 0.05);
    let b = prepared(200.0, 0.1);
    let cfg_a = EnvConfig::default();
    let cfg_b = EnvConfig { tick_size: 0.1, ..cfg_a.clone() };
    assert_eq!(a[0].initial_cash(&cfg_a) * 2.0, b[0].initial_cash(&cfg_b));
    for policy in [
        Policy::Random { seed: 3 },
        Policy::Baseline(BaselineKind::Mv, BaselineParams::default()),
        Policy::Baseline(BaselineKind::Tsm, BaselineParams::default()),
    ] {
        let sa = backtest(&policy, &a, &cfg_a).unwrap();
        let sb = backtest(&policy, &b, &cfg_b).unwrap();
        assert_eq!(sa.metrics(DdMode::Std), sb.metrics(DdMode::Std), "{}", policy.label());
    }
}

#[test]
fn mv_enters_long_inside_lower_band_crossing() {
    let spec = SyntheticSpec {
        days: 1,
        minutes_per_day: 120,
        pattern: Some(Pattern::VShape),
        volatility: 0.001,
        pivot: Some(80),
        ..SyntheticSpec::default()
    };
    let raw = generate_synthetic(&spec, 1).unwrap();
    let closes = raw[0].closes();
    // hand simulation of the 20-minute, 2-sigma band
    let below: Vec<usize> = (19..closes.len())
        .filter(|&t| {
            let w = &closes[t - 19..=t];
            let m = w.iter().sum::<f64>() / 20.0;
            let sd = (w.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 20.0).sqrt();
            closes[t] < m - 2.0 * sd
        })
        .collect();
    let target = |t| scalper_core::eval::baseline_target(BaselineKind::Mv, &BaselineParams::default(), &closes, t, 50);
    let first_long = (29..closes.len()).find(|&t| target(t) > 0);
    let expected = below.iter().copied().find(|&t| t >= 29);
    assert!(expected.is_some());
    assert_eq!(first_long, expected);
    assert!(first_long.unwrap() <= 80, "entry at {first_long:?} is after the trough");
}
