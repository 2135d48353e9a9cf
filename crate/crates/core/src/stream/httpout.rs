//! The `{"series":[{"name","columns","values"}]}` window document.

use serde::Serialize;
use serde_json::Value;

use super::point::{parse_rfc3339, rfc3339, DataPoint};
use crate::dataset::ChannelId;
use crate::error::{Error, Result};

/// Body served before any window has been emitted.
pub const EMPTY_SERIES: &str = r#"{"series":[]}"#;

#[derive(Debug, Clone, PartialEq)]
pub struct HttpOutPayload {
    pub name: String,
    pub columns: Vec<ChannelId>,
    pub points: Vec<DataPoint>,
}

#[derive(Serialize)]
struct Document<'a> {
    series: [Series<'a>; 1],
}

#[derive(Serialize)]
struct Series<'a> {
    name: &'a str,
    columns: Vec<&'a str>,
    values: Vec<Value>,
}

/// Serializes points under `columns`; absent fields become `null`.
pub fn httpout_json(name: &str, columns: &[ChannelId], points: &[DataPoint]) -> String {
    let mut header = vec!["time"];
    header.extend(columns.iter().map(|c| c.name()));
    let values: Vec<Value> = points
        .iter()
        .map(|p| {
            let mut row = Vec::with_capacity(columns.len() + 1);
            row.push(Value::from(rfc3339(p.timestamp)));
            row.extend(columns.iter().map(|&c| p.get(c).map_or(Value::Null, Value::from)));
            Value::Array(row)
        })
        .collect();
    let doc = Document {
        series: [Series {
            name,
            columns: header,
            values,
        }],
    };
    serde_json::to_string(&doc).expect("plain JSON values serialize")
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::Argument(format!("httpOut document: {}", msg.into()))
}

/// Inverse of [`httpout_json`] for a single-series document.
pub fn parse_httpout(text: &str) -> Result<HttpOutPayload> {
    let doc: Value = serde_json::from_str(text)?;
    let series = doc
        .get("series")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("missing series array"))?;
    let [s] = series.as_slice() else {
        return Err(malformed(format!("expected one series, found {}", series.len())));
    };
    let name = s
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed("series has no name"))?
        .to_string();
    let header = s
        .get("columns")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("series has no columns"))?;
    if header.first().and_then(Value::as_str) != Some("time") {
        return Err(malformed("first column must be time"));
    }
    let columns = header[1..]
        .iter()
        .map(|c| {
            c.as_str()
                .and_then(ChannelId::from_name)
                .ok_or_else(|| malformed(format!("unknown column {c}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = s
        .get("values")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("series has no values"))?;
    let points = rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let row = row
                .as_array()
                .filter(|r| r.len() == columns.len() + 1)
                .ok_or_else(|| malformed(format!("row {i} has the wrong width")))?;
            let time = row[0]
                .as_str()
                .ok_or_else(|| malformed(format!("row {i} time is not a string")))?;
            let mut p = DataPoint::new(parse_rfc3339(time)?);
            for (&c, v) in columns.iter().zip(&row[1..]) {
                match v {
                    Value::Null => {}
                    v => p.set(
                        c,
                        v.as_f64()
                            .ok_or_else(|| malformed(format!("row {i} {c} is not a number")))?,
                    ),
                }
            }
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HttpOutPayload { name, columns, points })
}
