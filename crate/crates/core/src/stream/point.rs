//! Stream points, time conversions and the line-protocol wire format.

use chrono::{DateTime, NaiveDateTime, SecondsFormat};
use serde::{Deserialize, Serialize};

use crate::dataset::{ChannelId, TimeSeriesFrame};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One timestamped reading; channels may be absent outside strict mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub timestamp: NaiveDateTime,
    values: [Option<f64>; 9],
}

impl DataPoint {
    pub fn new(timestamp: NaiveDateTime) -> Self {
        DataPoint {
            timestamp,
            values: [None; 9],
        }
    }

    pub fn with(mut self, channel: ChannelId, value: f64) -> Self {
        self.set(channel, value);
        self
    }

    pub fn set(&mut self, channel: ChannelId, value: f64) {
        self.values[channel.index()] = Some(value);
    }

    pub fn get(&self, channel: ChannelId) -> Option<f64> {
        self.values[channel.index()]
    }

    /// Present channels in canonical order.
    pub fn fields(&self) -> impl Iterator<Item = (ChannelId, f64)> + '_ {
        ChannelId::ALL.into_iter().filter_map(|c| self.get(c).map(|v| (c, v)))
    }

    pub fn field_count(&self) -> usize {
        self.values.iter().flatten().count()
    }

    pub fn missing_from<'a>(&'a self, schema: &'a [ChannelId]) -> impl Iterator<Item = ChannelId> + 'a {
        schema.iter().copied().filter(|&c| self.get(c).is_none())
    }
}

/// One point per frame row; missing cells become absent fields.
pub fn points_from_frame<T: Scalar>(frame: &TimeSeriesFrame<T>) -> Vec<DataPoint> {
    (0..frame.len())
        .map(|i| {
            let mut p = DataPoint::new(frame.timestamps()[i]);
            for (j, &c) in frame.channels().iter().enumerate() {
                let v = frame.column_at(j)[i];
                if v.is_finite() {
                    p.set(c, v.as_f64());
                }
            }
            p
        })
        .collect()
}

pub fn to_unix_nanos(t: NaiveDateTime) -> Result<i64> {
    t.and_utc()
        .timestamp_nanos_opt()
        .ok_or_else(|| Error::Argument(format!("{t} is outside the nanosecond epoch range")))
}

pub fn from_unix_nanos(nanos: i64) -> NaiveDateTime {
    DateTime::from_timestamp_nanos(nanos).naive_utc()
}

/// RFC 3339 in UTC, with fractional seconds only when present.
pub fn rfc3339(t: NaiveDateTime) -> String {
    t.and_utc().to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub fn parse_rfc3339(s: &str) -> Result<NaiveDateTime> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.naive_utc())
        .map_err(|e| Error::Argument(format!("bad RFC 3339 time {s:?}: {e}")))
}

/// Parses `<measurement> <field>=<value>[,<field>=<value>...] <unix-ns>`.
pub fn parse_line(line: &str) -> Result<(String, DataPoint)> {
    let bad = |msg: String| Error::LineProtocol(format!("{msg} in {line:?}"));
    let parts: Vec<&str> = line.split_ascii_whitespace().collect();
    let (measurement, fields, ts) = match parts.as_slice() {
        [m, f, t] => (*m, *f, *t),
        [_, _] | [_] => {
            return Err(bad("expected measurement, field set and timestamp".into()));
        }
        _ => return Err(bad(format!("expected 3 space-separated parts, found {}", parts.len()))),
    };
    let nanos: i64 = ts.parse().map_err(|_| bad(format!("bad timestamp {ts:?}")))?;
    let mut point = DataPoint::new(from_unix_nanos(nanos));
    for field in fields.split(',') {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| bad(format!("field {field:?} lacks `=`")))?;
        let channel = ChannelId::from_name(key).ok_or_else(|| bad(format!("unknown field {key:?}")))?;
        let v: f64 = value
            .parse()
            .map_err(|_| bad(format!("field {key} has non-numeric value {value:?}")))?;
        if !v.is_finite() {
            return Err(bad(format!("field {key} is not finite")));
        }
        if point.get(channel).is_some() {
            return Err(bad(format!("field {key} repeated")));
        }
        point.set(channel, v);
    }
    if point.field_count() == 0 {
        return Err(bad("empty field set".into()));
    }
    Ok((measurement.to_string(), point))
}

/// Serializes a point; `parse_line` inverts it exactly.
pub fn format_line(measurement: &str, point: &DataPoint) -> Result<String> {
    if point.field_count() == 0 {
        return Err(Error::LineProtocol("cannot write a point without fields".into()));
    }
    let fields: Vec<String> = point.fields().map(|(c, v)| format!("{}={}", c.name(), v)).collect();
    Ok(format!(
        "{} {} {}",
        measurement,
        fields.join(","),
        to_unix_nanos(point.timestamp)?
    ))
}
