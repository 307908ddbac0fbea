//! Report and run-log serialization. Infinite values are written as the
//! literal `inf`, undefined aggregates as `nan`, absent cells as `NA`.

use std::io::Write;

use crate::engine::LogRow;
use crate::error::{Error, Result};
use crate::metrics::ReportRow;

/// Identifying labels attached to every report row.
#[derive(Debug, Clone)]
pub struct ReportLabels {
    pub method: String,
    pub scenario: String,
    pub selector: String,
    pub picker: String,
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        }
    } else {
        format!("{v}")
    }
}

fn parse_f64(raw: &str) -> Option<f64> {
    match raw {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        "nan" => Some(f64::NAN),
        _ => raw.parse().ok(),
    }
}

pub fn write_report_csv<W: Write>(
    mut w: W,
    rows: &[ReportRow],
    labels: &ReportLabels,
) -> Result<()> {
    writeln!(
        w,
        "t,method,scenario,selector,picker,fcr,fcr_se,mean_len,median_len,inf_freq,mean_calib"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            labels.method,
            labels.scenario,
            labels.selector,
            labels.picker,
            fmt_f64(r.fcr),
            fmt_f64(r.fcr_se),
            fmt_f64(r.mean_len),
            fmt_f64(r.median_len),
            fmt_f64(r.inf_freq),
            fmt_f64(r.mean_calib),
        )?;
    }
    Ok(())
}

fn json_num(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else {
        serde_json::Value::String(fmt_f64(v))
    }
}

/// JSON variant with fields identical to the CSV schema.
pub fn write_report_json<W: Write>(
    mut w: W,
    rows: &[ReportRow],
    labels: &ReportLabels,
) -> Result<()> {
    let array: Vec<serde_json::Value> = rows
        .iter()
        .map(|r| {
            serde_json::json!({
                "t": r.t,
                "method": labels.method,
                "scenario": labels.scenario,
                "selector": labels.selector,
                "picker": labels.picker,
                "fcr": json_num(r.fcr),
                "fcr_se": json_num(r.fcr_se),
                "mean_len": json_num(r.mean_len),
                "median_len": json_num(r.median_len),
                "inf_freq": json_num(r.inf_freq),
                "mean_calib": json_num(r.mean_calib),
            })
        })
        .collect();
    let text =
        serde_json::to_string_pretty(&array).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    writeln!(w, "{text}")?;
    Ok(())
}

/// One row per time step: `t, s, method, alpha, calib_size, half_width,
/// covered`.
pub fn write_run_log_csv<W: Write>(mut w: W, rows: &[LogRow], method: &str) -> Result<()> {
    writeln!(w, "t,s,method,alpha,calib_size,half_width,covered")?;
    for r in rows {
        let calib = r
            .calib_size
            .map(|c| c.to_string())
            .unwrap_or_else(|| "NA".to_string());
        let hw = r
            .half_width
            .map(fmt_f64)
            .unwrap_or_else(|| "NA".to_string());
        let covered = match r.covered {
            Some(true) => "1",
            Some(false) => "0",
            None => "NA",
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.t,
            u8::from(r.selected),
            method,
            fmt_f64(r.alpha),
            calib,
            hw,
            covered,
        )?;
    }
    Ok(())
}

/// Parses a run log written by [`write_run_log_csv`]; returns the method
/// label and the rows.
pub fn read_run_log_csv(path: &std::path::Path) -> Result<(String, Vec<LogRow>)> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| Error::ingest(&display, 1, "empty run log".to_string()))?;
    if header.1 != "t,s,method,alpha,calib_size,half_width,covered" {
        return Err(Error::ingest(
            &display,
            1,
            "unexpected run-log header".to_string(),
        ));
    }
    let mut method = String::new();
    let mut rows = Vec::new();
    for (i, line) in lines {
        let row_no = i as u64 + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::ingest(
                &display,
                row_no,
                "expected 7 columns".to_string(),
            ));
        }
        let bad = |col: &str| Error::ingest(&display, row_no, format!("bad {col} cell"));
        let t: i64 = fields[0].parse().map_err(|_| bad("t"))?;
        let selected = match fields[1] {
            "1" => true,
            "0" => false,
            _ => return Err(bad("s")),
        };
        if method.is_empty() {
            method = fields[2].to_string();
        }
        let alpha = parse_f64(fields[3]).ok_or_else(|| bad("alpha"))?;
        let calib_size = match fields[4] {
            "NA" => None,
            raw => Some(raw.parse().map_err(|_| bad("calib_size"))?),
        };
        let half_width = match fields[5] {
            "NA" => None,
            raw => Some(parse_f64(raw).ok_or_else(|| bad("half_width"))?),
        };
        let covered = match fields[6] {
            "NA" => None,
            "1" => Some(true),
            "0" => Some(false),
            _ => return Err(bad("covered")),
        };
        rows.push(LogRow {
            t,
            selected,
            alpha,
            calib_size,
            half_width,
            covered,
        });
    }
    Ok((method, rows))
}
