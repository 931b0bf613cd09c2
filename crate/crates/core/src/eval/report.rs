//! CSV output for metrics and net-value curves.

use std::io::{self, Write};

use chrono::NaiveDateTime;

use super::MetricsReport;

pub const METRICS_HEADER: &str = "asset,policy,tr,sr,cr,sor,mdd";
pub const NET_VALUE_HEADER: &str = "timestamp,net_value";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub asset: String,
    pub policy: String,
    pub report: MetricsReport,
}

/// Shortest round-trip decimal, or `NA` when undefined.
pub fn format_metric(value: Option<f64>) -> String {
    match value {
        Some(v) if v.is_finite() => v.to_string(),
        _ => "NA".to_string(),
    }
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for row in rows {
        let r = &row.report;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.asset,
            row.policy,
            format_metric(Some(r.tr)),
            format_metric(r.sr),
            format_metric(r.cr),
            format_metric(r.sor),
            format_metric(Some(r.mdd)),
        )?;
    }
    Ok(())
}

pub fn write_net_value_csv<W: Write>(points: &[(NaiveDateTime, f64)], mut out: W) -> io::Result<()> {
    writeln!(out, "{NET_VALUE_HEADER}")?;
    for (ts, v) in points {
        writeln!(out, "{},{}", ts.format("%Y-%m-%dT%H:%M:%S"), v)?;
    }
    Ok(())
}
