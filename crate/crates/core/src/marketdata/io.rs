use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDateTime;

use super::{Bar, DataError, LobSnapshot, MinuteRecord, TradingDay, LOB_LEVELS};

pub const CSV_HEADER: &str = "timestamp,open,high,low,close,adj_close,volume,\
bid_price_1,bid_qty_1,ask_price_1,ask_qty_1,\
bid_price_2,bid_qty_2,ask_price_2,ask_qty_2,\
bid_price_3,bid_qty_3,ask_price_3,ask_qty_3,\
bid_price_4,bid_qty_4,ask_price_4,ask_qty_4,\
bid_price_5,bid_qty_5,ask_price_5,ask_qty_5";

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Price,
    Quantity,
}

/// Column layout after the timestamp: 6 bar fields then 4 per level.
fn value_columns(with_adj: bool) -> Vec<(String, Kind)> {
    let mut cols = vec![
        ("open".to_string(), Kind::Price),
        ("high".to_string(), Kind::Price),
        ("low".to_string(), Kind::Price),
        ("close".to_string(), Kind::Price),
    ];
    if with_adj {
        cols.push(("adj_close".to_string(), Kind::Price));
    }
    cols.push(("volume".to_string(), Kind::Quantity));
    for i in 1..=LOB_LEVELS {
        cols.push((format!("bid_price_{i}"), Kind::Price));
        cols.push((format!("bid_qty_{i}"), Kind::Quantity));
        cols.push((format!("ask_price_{i}"), Kind::Price));
        cols.push((format!("ask_qty_{i}"), Kind::Quantity));
    }
    cols
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

/// Loads a minute-level CSV file and groups it into trading days.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<TradingDay>, DataError> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file))
}

/// Parses CSV from any reader. Empty price cells are forward-filled from the previous
/// row, empty quantity cells become 0, and an absent `adj_close` column falls back to
/// `close`. Row numbers in errors are file line numbers (the header is line 1).
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<TradingDay>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::None)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let with_adj = header.iter().any(|h| h == "adj_close");
    let cols = value_columns(with_adj);
    let expected: Vec<&str> = std::iter::once("timestamp")
        .chain(cols.iter().map(|(n, _)| n.as_str()))
        .collect();
    if header != expected {
        return Err(DataError::Header(format!(
            "expected `{}`, found `{}`",
            expected.join(","),
            header.join(",")
        )));
    }

    let mut last: Vec<Option<f64>> = vec![None; cols.len()];
    let mut days: Vec<TradingDay> = Vec::new();
    let mut current: Vec<MinuteRecord> = Vec::new();
    let mut invalid: Vec<(usize, String)> = Vec::new();

    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        let ts_raw = rec.get(0).unwrap_or("").trim();
        let timestamp = parse_timestamp(ts_raw).ok_or_else(|| DataError::Parse {
            row,
            message: format!("bad timestamp `{ts_raw}`"),
        })?;
        let mut values = Vec::with_capacity(cols.len());
        for (j, (name, kind)) in cols.iter().enumerate() {
            let cell = rec.get(j + 1).unwrap_or("").trim();
            let v = if cell.is_empty() {
                match kind {
                    Kind::Price => last[j].ok_or_else(|| DataError::NothingToFill {
                        row,
                        column: name.clone(),
                    })?,
                    Kind::Quantity => 0.0,
                }
            } else {
                cell.parse::<f64>().map_err(|_| DataError::Parse {
                    row,
                    message: format!("bad number `{cell}` in {name}"),
                })?
            };
            if *kind == Kind::Price {
                last[j] = Some(v);
            }
            values.push(v);
        }

        let record = match build_record(timestamp, &values, with_adj) {
            Ok(r) => r,
            Err(msg) => {
                invalid.push((row, msg));
                continue;
            }
        };
        if let Some(prev) = current.last() {
            let prev_ts = prev.bar.timestamp;
            if prev_ts.date() == timestamp.date() {
                if timestamp <= prev_ts {
                    return Err(DataError::NonMonotonic { row, timestamp });
                }
            } else if timestamp.date() < prev_ts.date()
                || days.iter().any(|d| d.date == timestamp.date())
            {
                return Err(DataError::NonMonotonic { row, timestamp });
            } else {
                let date = prev_ts.date();
                days.push(TradingDay::new(date, std::mem::take(&mut current))?);
            }
        }
        current.push(record);
    }
    if !invalid.is_empty() {
        return Err(DataError::InvalidRows(invalid));
    }
    if let Some(first) = current.first() {
        let date = first.bar.timestamp.date();
        days.push(TradingDay::new(date, current)?);
    }
    Ok(days)
}

fn quantity(v: f64) -> Result<u64, String> {
    if v.is_finite() && v >= 0.0 && v.fract() == 0.0 {
        Ok(v as u64)
    } else {
        Err(format!("book quantity {v} is not a non-negative integer"))
    }
}

fn build_record(
    timestamp: NaiveDateTime,
    v: &[f64],
    with_adj: bool,
) -> Result<MinuteRecord, String> {
    let (adj_close, rest) = if with_adj { (v[4], &v[5..]) } else { (v[3], &v[4..]) };
    let bar = Bar {
        timestamp,
        open: v[0],
        high: v[1],
        low: v[2],
        close: v[3],
        adj_close,
        volume: rest[0],
    };
    let book = &rest[1..];
    let mut lob = LobSnapshot {
        bid_price: [0.0; LOB_LEVELS],
        bid_qty: [0; LOB_LEVELS],
        ask_price: [0.0; LOB_LEVELS],
        ask_qty: [0; LOB_LEVELS],
    };
    for i in 0..LOB_LEVELS {
        lob.bid_price[i] = book[4 * i];
        lob.bid_qty[i] = quantity(book[4 * i + 1])?;
        lob.ask_price[i] = book[4 * i + 2];
        lob.ask_qty[i] = quantity(book[4 * i + 3])?;
    }
    bar.validate()?;
    lob.validate()?;
    Ok(MinuteRecord { bar, lob })
}

/// Writes days in the canonical schema (with `adj_close`). Numbers use the shortest
/// representation that parses back to the same `f64`.
pub fn write_csv<W: Write>(days: &[TradingDay], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for day in days {
        for r in &day.records {
            let b = &r.bar;
            write!(
                out,
                "{},{},{},{},{},{},{}",
                b.timestamp.format(TIMESTAMP_FORMAT),
                b.open,
                b.high,
                b.low,
                b.close,
                b.adj_close,
                b.volume
            )?;
            for i in 0..LOB_LEVELS {
                write!(
                    out,
                    ",{},{},{},{}",
                    r.lob.bid_price[i], r.lob.bid_qty[i], r.lob.ask_price[i], r.lob.ask_qty[i]
                )?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}
