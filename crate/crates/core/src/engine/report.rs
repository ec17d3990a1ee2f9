//! Run report lines.

use crate::netmodel::fmt_float;

/// Metrics at one sampling instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReportSample {
    pub t: f64,
    pub att: f64,
    pub tp: usize,
    pub driving: usize,
    pub pending: usize,
    pub stranded: usize,
}

/// `t=<s> att=<s> tp=<n> driving=<n> pending=<n>`
pub fn report_line(s: &ReportSample) -> String {
    format!(
        "t={} att={} tp={} driving={} pending={}",
        fmt_float(s.t),
        fmt_float(s.att),
        s.tp,
        s.driving,
        s.pending
    )
}

/// `FINAL att=<s> tp=<n> stranded=<n>`
pub fn final_line(s: &ReportSample) -> String {
    format!("FINAL att={} tp={} stranded={}", fmt_float(s.att), s.tp, s.stranded)
}
