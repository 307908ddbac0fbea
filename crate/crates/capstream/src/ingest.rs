//! CSV ingestion of user streams.
//!
//! Two schemas are accepted: `t, x_1..x_d, y` (a predictor is fitted on the
//! leading train split) and the precomputed `t, mu_hat, v, y`. The time
//! column must be strictly increasing; any malformed cell reports its row
//! and column and aborts without partial output.

use std::io::Read;

use crate::config::CsvSchemaKind;
use crate::error::{Error, Result};

/// One parsed row prior to predictor application.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub t: i64,
    pub x: Option<Vec<f64>>,
    pub mu_hat: Option<f64>,
    pub v: Option<f64>,
    pub y: f64,
}

/// Reads and validates a whole stream file.
pub fn ingest_path(path: &std::path::Path, schema: CsvSchemaKind) -> Result<Vec<RawRow>> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path)?;
    ingest_reader(file, schema, &display)
}

/// Reader-based ingestion; `source` names the origin in error messages.
pub fn ingest_reader<R: Read>(
    reader: R,
    schema: CsvSchemaKind,
    source: &str,
) -> Result<Vec<RawRow>> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);

    let headers = csv_reader
        .headers()
        .map_err(|e| Error::ingest(source, 0, e.to_string()))?
        .clone();
    let columns = validate_header(&headers, schema, source)?;

    let mut rows = Vec::new();
    let mut last_t: Option<i64> = None;
    for (i, record) in csv_reader.records().enumerate() {
        let row_no = i as u64 + 2; // 1-based, counting the header line
        let record = record.map_err(|e| Error::ingest(source, row_no, e.to_string()))?;
        let row = parse_row(&record, &columns, schema, source, row_no)?;
        if let Some(prev) = last_t {
            if row.t <= prev {
                return Err(Error::ingest(
                    source,
                    row_no,
                    format!("time index {} does not increase past {}", row.t, prev),
                ));
            }
        }
        last_t = Some(row.t);
        rows.push(row);
    }
    Ok(rows)
}

struct Columns {
    feature_count: usize,
}

fn validate_header(
    headers: &csv::StringRecord,
    schema: CsvSchemaKind,
    source: &str,
) -> Result<Columns> {
    let names: Vec<&str> = headers.iter().collect();
    match schema {
        CsvSchemaKind::Precomputed => {
            let expected = ["t", "mu_hat", "v", "y"];
            if names != expected {
                return Err(Error::ingest(
                    source,
                    1,
                    format!("expected header t,mu_hat,v,y, got {}", names.join(",")),
                ));
            }
            Ok(Columns { feature_count: 0 })
        }
        CsvSchemaKind::Features => {
            if names.first() != Some(&"t") || names.last() != Some(&"y") || names.len() < 3 {
                return Err(Error::ingest(
                    source,
                    1,
                    "expected header t,x_1..x_d,y".to_string(),
                ));
            }
            let d = names.len() - 2;
            for (i, name) in names[1..=d].iter().enumerate() {
                let expected = format!("x_{}", i + 1);
                if *name != expected {
                    return Err(Error::ingest(
                        source,
                        1,
                        format!("expected column {expected}, got {name}"),
                    ));
                }
            }
            Ok(Columns { feature_count: d })
        }
    }
}

fn parse_row(
    record: &csv::StringRecord,
    columns: &Columns,
    schema: CsvSchemaKind,
    source: &str,
    row_no: u64,
) -> Result<RawRow> {
    let cell = |idx: usize, name: &str| -> Result<f64> {
        let raw = record
            .get(idx)
            .ok_or_else(|| Error::ingest(source, row_no, format!("missing column {name}")))?;
        let value: f64 = raw.trim().parse().map_err(|_| {
            Error::ingest(
                source,
                row_no,
                format!("column {name}: `{raw}` is not numeric"),
            )
        })?;
        if !value.is_finite() {
            return Err(Error::ingest(
                source,
                row_no,
                format!("column {name}: `{raw}` is not finite"),
            ));
        }
        Ok(value)
    };
    let t_raw = record
        .get(0)
        .ok_or_else(|| Error::ingest(source, row_no, "missing column t".to_string()))?;
    let t = t_raw.trim().parse::<i64>().map_err(|_| {
        Error::ingest(
            source,
            row_no,
            format!("column t: `{t_raw}` is not an integer"),
        )
    })?;
    match schema {
        CsvSchemaKind::Precomputed => {
            let mu_hat = cell(1, "mu_hat")?;
            let v = cell(2, "v")?;
            let y = cell(3, "y")?;
            Ok(RawRow {
                t,
                x: None,
                mu_hat: Some(mu_hat),
                v: Some(v),
                y,
            })
        }
        CsvSchemaKind::Features => {
            let mut x = Vec::with_capacity(columns.feature_count);
            for j in 0..columns.feature_count {
                x.push(cell(j + 1, &format!("x_{}", j + 1))?);
            }
            let y = cell(columns.feature_count + 1, "y")?;
            Ok(RawRow {
                t,
                x: Some(x),
                mu_hat: None,
                v: None,
                y,
            })
        }
    }
}
