//! Immediate-or-cancel matching of limit orders against a book snapshot.
//!
//! Fills never mutate the replayed book and unfilled remainders are cancelled.

use crate::marketdata::{LobSnapshot, LOB_LEVELS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitOrder {
    pub target_price: f64,
    /// Positive buys, negative sells, zero places no order.
    pub signed_qty: i64,
}

impl LimitOrder {
    pub const NONE: LimitOrder = LimitOrder {
        target_price: 0.0,
        signed_qty: 0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Fill {
    pub filled_qty: i64,
    /// Quantity-weighted average execution price; 0 when nothing filled.
    pub vwap: f64,
    pub levels_consumed: usize,
}

/// Walks the opposite side in price priority, taking every level whose price is no
/// worse than the limit.
pub fn execute(order: &LimitOrder, lob: &LobSnapshot) -> Fill {
    if order.signed_qty == 0 {
        return Fill::default();
    }
    let buy = order.signed_qty > 0;
    let (prices, qtys) = if buy {
        (&lob.ask_price, &lob.ask_qty)
    } else {
        (&lob.bid_price, &lob.bid_qty)
    };
    let mut remaining = order.signed_qty.unsigned_abs();
    let mut filled = 0u64;
    let mut notional = 0.0;
    let mut levels = 0;
    for i in 0..LOB_LEVELS {
        if remaining == 0 {
            break;
        }
        let crosses = if buy {
            prices[i] <= order.target_price
        } else {
            prices[i] >= order.target_price
        };
        if !crosses {
            break;
        }
        let take = remaining.min(qtys[i]);
        if take > 0 {
            filled += take;
            remaining -= take;
            notional += take as f64 * prices[i];
            levels += 1;
        }
    }
    if filled == 0 {
        return Fill::default();
    }
    let signed = if buy { filled as i64 } else { -(filled as i64) };
    Fill {
        filled_qty: signed,
        vwap: notional / filled as f64,
        levels_consumed: levels,
    }
}

/// Flattens `position` by crossing the whole opposite side. Whatever the book cannot
/// absorb fills at the price of the deepest level that had liquidity (level 1 if the
/// side is empty), so the result always has `|filled_qty| = |position|`.
pub fn close_at_market(position: i64, lob: &LobSnapshot) -> Fill {
    if position == 0 {
        return Fill::default();
    }
    let selling = position > 0;
    let (prices, qtys) = if selling {
        (&lob.bid_price, &lob.bid_qty)
    } else {
        (&lob.ask_price, &lob.ask_qty)
    };
    let order = LimitOrder {
        target_price: prices[LOB_LEVELS - 1],
        signed_qty: -position,
    };
    let fill = execute(&order, lob);
    let filled = fill.filled_qty.unsigned_abs();
    let wanted = position.unsigned_abs();
    if filled == wanted {
        return fill;
    }
    let backstop = (0..LOB_LEVELS)
        .rev()
        .find(|&i| qtys[i] > 0)
        .map_or(prices[0], |i| prices[i]);
    let rest = wanted - filled;
    let notional = fill.vwap * filled as f64 + backstop * rest as f64;
    Fill {
        filled_qty: -position,
        vwap: notional / wanted as f64,
        levels_consumed: fill.levels_consumed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn book(asks: &[(f64, u64)], bids: &[(f64, u64)]) -> LobSnapshot {
        let mut lob = LobSnapshot {
            bid_price: [0.0; LOB_LEVELS],
            bid_qty: [0; LOB_LEVELS],
            ask_price: [0.0; LOB_LEVELS],
            ask_qty: [0; LOB_LEVELS],
        };
        for i in 0..LOB_LEVELS {
            let (ap, aq) = asks.get(i).copied().unwrap_or((asks[0].0 + 0.5 * i as f64, 0));
            let (bp, bq) = bids.get(i).copied().unwrap_or((bids[0].0 - 0.1 * i as f64, 0));
            lob.ask_price[i] = ap;
            lob.ask_qty[i] = aq;
            lob.bid_price[i] = bp;
            lob.bid_qty[i] = bq;
        }
        lob.validate().unwrap();
        lob
    }

    #[test]
    fn multi_level_buy() {
        let lob = book(&[(100.0, 3), (100.5, 5)], &[(99.9, 10)]);
        let f = execute(&LimitOrder { target_price: 100.5, signed_qty: 6 }, &lob);
        assert_eq!(f.filled_qty, 6);
        assert!((f.vwap - 100.25).abs() < 1e-12);
        assert_eq!(f.levels_consumed, 2);
    }

    #[test]
    fn limit_below_best_ask_does_not_cross() {
        let lob = book(&[(100.0, 3), (100.5, 5)], &[(99.9, 10)]);
        let f = execute(&LimitOrder { target_price: 99.9, signed_qty: 10 }, &lob);
        assert_eq!(f, Fill::default());
    }

    #[test]
    fn single_level_full_fill() {
        let lob = book(&[(100.0, 3)], &[(99.9, 10)]);
        let f = execute(&LimitOrder { target_price: 100.0, signed_qty: 2 }, &lob);
        assert_eq!((f.filled_qty, f.vwap), (2, 100.0));
    }

    #[test]
    fn sell_walks_bids() {
        let lob = book(&[(100.0, 3)], &[(99.9, 2), (99.8, 4)]);
        let f = execute(&LimitOrder { target_price: 99.8, signed_qty: -5 }, &lob);
        assert_eq!(f.filled_qty, -5);
        assert!((f.vwap - (2.0 * 99.9 + 3.0 * 99.8) / 5.0).abs() < 1e-12);
    }

    #[test]
    fn close_flat_position_is_noop() {
        let lob = book(&[(100.0, 3)], &[(99.9, 10)]);
        assert_eq!(close_at_market(0, &lob).filled_qty, 0);
    }

    #[test]
    fn close_long_single_level() {
        let lob = book(&[(100.0, 3)], &[(99.9, 10), (99.8, 10)]);
        let f = close_at_market(4, &lob);
        assert_eq!((f.filled_qty, f.vwap), (-4, 99.9));
    }

    #[test]
    fn close_uses_backstop_beyond_book_depth() {
        let lob = book(&[(100.0, 3)], &[(99.9, 5), (99.8, 2)]);
        let f = close_at_market(8, &lob);
        assert_eq!(f.filled_qty, -8);
        assert!((f.vwap - 99.8625).abs() < 1e-12);
    }

    #[test]
    fn close_short_buys_back() {
        let lob = book(&[(100.0, 1), (100.5, 1)], &[(99.9, 5)]);
        let f = close_at_market(-3, &lob);
        assert_eq!(f.filled_qty, 3);
        assert!((f.vwap - (100.0 + 100.5 + 100.5) / 3.0).abs() < 1e-12);
    }
}
