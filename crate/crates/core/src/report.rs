//! CSV reports and the line-delimited session log.

use std::io::Write;

use serde::Serialize;

use crate::analysis::{Prediction, Table1Row};
use crate::error::{Error, Result};
use crate::protocol::{SessionConfig, SessionResult};

pub const REPORT_HEADER: &str = "mu,measured_er,er_det_pred,er_opt_pred,sifted_bits,sift_rate_per_1000";

pub const TABLE1_HEADER: &str = "mu,n_pulses,measured_er,er_det_pred,er_opt_pred,er_pred,band_lo,band_hi,\
sifted_bits,sift_rate_per_1000,ref_measured_er,ref_er_det,ref_er_opt,ref_key_bits,ref_bit_rate_hz,pass";

/// `x` with six significant digits, positional notation.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub mu: f64,
    pub measured_er: f64,
    pub er_det_pred: f64,
    pub er_opt_pred: f64,
    pub sifted_bits: usize,
    pub sift_rate_per_1000: f64,
}

impl ReportRow {
    /// Predictions are recomputed from `cfg`, never taken from the result.
    pub fn new(cfg: &SessionConfig, result: &SessionResult, prediction: &Prediction) -> Result<Self> {
        let measured_er = result.measured_er.ok_or(Error::UndefinedRate("session produced no sifted bits"))?;
        Ok(ReportRow {
            mu: cfg.setup.mu_pair,
            measured_er,
            er_det_pred: prediction.er_det,
            er_opt_pred: prediction.er_opt,
            sifted_bits: result.sifted_bits(),
            sift_rate_per_1000: result.sift_rate_per_1000(),
        })
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            sig6(self.mu),
            sig6(self.measured_er),
            sig6(self.er_det_pred),
            sig6(self.er_opt_pred),
            self.sifted_bits,
            sig6(self.sift_rate_per_1000)
        )
    }
}

pub fn write_report<W: Write>(mut w: W, rows: &[ReportRow]) -> Result<()> {
    writeln!(w, "{REPORT_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.to_csv())?;
    }
    Ok(())
}

pub fn table1_csv_row(r: &Table1Row) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        sig6(r.mu),
        r.n_pulses,
        sig6(r.measured_er),
        sig6(r.prediction.er_det),
        sig6(r.prediction.er_opt),
        sig6(r.prediction.er_total()),
        sig6(r.band.0),
        sig6(r.band.1),
        r.sifted_bits,
        sig6(r.sift_rate_per_1000),
        sig6(r.published.measured_er.value),
        sig6(r.published.er_det.value),
        sig6(r.published.er_opt.value),
        r.published.key_bits,
        sig6(r.published.bit_rate_hz),
        if r.passed() { "pass" } else { "fail" }
    )
}

pub fn write_table1<W: Write>(mut w: W, rows: &[Table1Row]) -> Result<()> {
    writeln!(w, "{TABLE1_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", table1_csv_row(r))?;
    }
    Ok(())
}

/// Append one JSON object per line.
pub struct SessionLog<W: Write> {
    out: W,
}

impl<W: Write> SessionLog<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn event<T: Serialize>(&mut self, event: &str, body: &T) -> Result<()> {
        let mut v = serde_json::to_value(body).map_err(|e| Error::invalid(e.to_string()))?;
        if let serde_json::Value::Object(map) = &mut v {
            map.insert("event".into(), event.into());
        } else {
            v = serde_json::json!({ "event": event, "data": v });
        }
        serde_json::to_writer(&mut self.out, &v).map_err(std::io::Error::from)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.1), "0.100000");
        assert_eq!(sig6(0.0069068), "0.00690680");
        assert_eq!(sig6(1234.5678), "1234.57");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(123456789.0), "123456789");
    }

    #[test]
    fn log_lines_are_json() {
        let mut buf = Vec::new();
        let mut log = SessionLog::new(&mut buf);
        log.event("start", &serde_json::json!({"n": 3})).unwrap();
        log.event("note", &5).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines[0]["event"], "start");
        assert_eq!(lines[0]["n"], 3);
        assert_eq!(lines[1]["data"], 5);
    }
}
