//! Point buffer and sliding-window emission.

use std::collections::BTreeMap;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::point::{from_unix_nanos, parse_line, to_unix_nanos, DataPoint};
use super::task::StreamTaskSpec;
use crate::dataset::ChannelId;
use crate::error::{Error, Result};

/// Points in `(window_end - period, window_end]`, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    pub window_end: NaiveDateTime,
    pub points: Vec<DataPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ack {
    Buffered,
    /// Replaced a point with the same timestamp.
    Overwrote,
    /// Addressed to another measurement.
    Ignored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    /// Time advances with ingested timestamps; windows close at multiples of `every`.
    Virtual,
    /// Emission only through explicit [`StreamEngine::emit_window`] calls.
    Wall,
}

/// One task's buffer. A single writer ingests; readers take emitted batches.
///
/// Under the virtual clock a window ending at `b` is emitted as soon as a point later
/// than `b` arrives, so points must reach the engine in order to land in every window
/// they belong to. A point older than the last emitted window end is still buffered.
#[derive(Debug, Clone)]
pub struct StreamEngine {
    task: StreamTaskSpec,
    schema: Vec<ChannelId>,
    strict: bool,
    clock: Clock,
    buffer: BTreeMap<NaiveDateTime, DataPoint>,
    overwrites: u64,
    last_emit: Option<NaiveDateTime>,
    next_boundary: Option<NaiveDateTime>,
    latest_time: Option<NaiveDateTime>,
    latest: Option<WindowBatch>,
    pending: Vec<WindowBatch>,
    emitted: u64,
}

impl StreamEngine {
    pub fn new(task: StreamTaskSpec, schema: Vec<ChannelId>) -> Result<Self> {
        task.validate()?;
        if schema.is_empty() {
            return Err(Error::Argument("stream schema has no channels".into()));
        }
        Ok(StreamEngine {
            task,
            schema,
            strict: false,
            clock: Clock::Virtual,
            buffer: BTreeMap::new(),
            overwrites: 0,
            last_emit: None,
            next_boundary: None,
            latest_time: None,
            latest: None,
            pending: Vec::new(),
            emitted: 0,
        })
    }

    /// Reject points lacking any schema channel.
    pub fn strict(mut self, on: bool) -> Self {
        self.strict = on;
        self
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn task(&self) -> &StreamTaskSpec {
        &self.task
    }

    pub fn schema(&self) -> &[ChannelId] {
        &self.schema
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn overwrites(&self) -> u64 {
        self.overwrites
    }

    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    pub fn latest_batch(&self) -> Option<&WindowBatch> {
        self.latest.as_ref()
    }

    /// Batches emitted by the virtual clock since the last call, oldest first.
    pub fn take_emitted(&mut self) -> Vec<WindowBatch> {
        std::mem::take(&mut self.pending)
    }

    pub fn ingest_point(&mut self, point: DataPoint) -> Result<Ack> {
        if self.strict {
            if let Some(c) = point.missing_from(&self.schema).next() {
                return Err(Error::LineProtocol(format!(
                    "strict schema: point at {} lacks {}",
                    point.timestamp, c
                )));
            }
        }
        if self.clock == Clock::Virtual {
            self.advance_to(point.timestamp)?;
        }
        self.latest_time = self.latest_time.max(Some(point.timestamp));
        Ok(match self.buffer.insert(point.timestamp, point) {
            Some(_) => {
                self.overwrites += 1;
                Ack::Overwrote
            }
            None => Ack::Buffered,
        })
    }

    pub fn ingest_line(&mut self, line: &str) -> Result<Ack> {
        let (measurement, point) = parse_line(line)?;
        if measurement != self.task.measurement {
            return Ok(Ack::Ignored);
        }
        self.ingest_point(point)
    }

    /// Ingests every non-blank line, stopping at the first error (reported with its line number).
    pub fn ingest_lines(&mut self, body: &str) -> Result<Vec<Ack>> {
        body.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                self.ingest_line(l)
                    .map_err(|e| Error::LineProtocol(format!("line {}: {e}", i + 1)))
            })
            .collect()
    }

    fn align_up(&self, t: NaiveDateTime) -> Result<NaiveDateTime> {
        let every = self.task.every.nanos();
        let n = to_unix_nanos(t)?;
        let up = n.div_euclid(every) * every + if n.rem_euclid(every) == 0 { 0 } else { every };
        Ok(from_unix_nanos(up))
    }

    /// Emits every window whose end is strictly before `t`.
    fn advance_to(&mut self, t: NaiveDateTime) -> Result<()> {
        let mut b = match self.next_boundary {
            Some(b) => b,
            None => self.align_up(t)?,
        };
        while b < t {
            if let Some(batch) = self.emit_window(b) {
                self.pending.push(batch);
            }
            b += self.task.every.as_delta();
        }
        self.next_boundary = Some(b);
        Ok(())
    }

    /// Closes remaining windows up to the first boundary at or after the newest point.
    pub fn flush(&mut self) -> Result<()> {
        if let Some(t) = self.latest_time {
            let end = self.align_up(t)?;
            self.advance_to(end + chrono::TimeDelta::nanoseconds(1))?;
        }
        Ok(())
    }

    /// Emits the window ending at `now` iff at least `every` has passed since the last
    /// emission (or nothing was emitted yet).
    pub fn emit_window(&mut self, now: NaiveDateTime) -> Option<WindowBatch> {
        if let Some(last) = self.last_emit {
            if now - last < self.task.every.as_delta() {
                return None;
            }
        }
        let start = now - self.task.period.as_delta();
        let points: Vec<DataPoint> = self
            .buffer
            .range((std::ops::Bound::Excluded(start), std::ops::Bound::Included(now)))
            .map(|(_, p)| *p)
            .collect();
        let batch = WindowBatch {
            window_end: now,
            points,
        };
        // Nothing at or before `start` can enter a later window.
        self.buffer = self.buffer.split_off(&(start + chrono::TimeDelta::nanoseconds(1)));
        self.last_emit = Some(now);
        self.emitted += 1;
        self.latest = Some(batch.clone());
        Some(batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::task::Span;
    use chrono::{NaiveDate, TimeDelta};

    fn t0() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2016, 2, 15)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap()
    }

    fn task(period: Span, every: Span) -> StreamTaskSpec {
        StreamTaskSpec {
            period,
            every,
            ..StreamTaskSpec::default()
        }
    }

    fn point(t: NaiveDateTime, v: f64) -> DataPoint {
        DataPoint::new(t).with(ChannelId::Tp, v)
    }

    #[test]
    fn hourly_points_in_two_hour_window() {
        let mut e = StreamEngine::new(task(Span::hours(2), Span::hours(2)), vec![ChannelId::Tp])
            .unwrap()
            .with_clock(Clock::Wall);
        for h in 0..5 {
            e.ingest_point(point(t0() + TimeDelta::hours(h), h as f64)).unwrap();
        }
        let b = e.emit_window(t0() + TimeDelta::hours(4)).unwrap();
        assert_eq!(b.points.len(), 2);
        assert_eq!(b.points[0].timestamp, t0() + TimeDelta::hours(3));
        assert!(e.emit_window(t0() + TimeDelta::hours(5)).is_none());
        assert!(e.emit_window(t0() + TimeDelta::hours(6)).is_some());
    }

    #[test]
    fn empty_buffer_emits_empty_batch() {
        let mut e = StreamEngine::new(StreamTaskSpec::default(), ChannelId::ALL.to_vec()).unwrap();
        assert!(e.emit_window(t0()).unwrap().points.is_empty());
    }

    #[test]
    fn duplicate_timestamp_last_write_wins() {
        let mut e = StreamEngine::new(StreamTaskSpec::default(), ChannelId::ALL.to_vec()).unwrap();
        assert_eq!(e.ingest_point(point(t0(), 1.0)).unwrap(), Ack::Buffered);
        assert_eq!(e.ingest_point(point(t0(), 2.0)).unwrap(), Ack::Overwrote);
        assert_eq!(e.buffered(), 1);
        assert_eq!(e.overwrites(), 1);
        e.flush().unwrap();
        assert_eq!(e.latest_batch().unwrap().points[0].get(ChannelId::Tp), Some(2.0));
    }

    #[test]
    fn out_of_order_points_are_sorted() {
        let mut e = StreamEngine::new(task(Span::hours(1), Span::hours(1)), vec![ChannelId::Tp]).unwrap();
        e.ingest_point(point(t0() + TimeDelta::minutes(30), 2.0)).unwrap();
        e.ingest_point(point(t0() + TimeDelta::minutes(10), 1.0)).unwrap();
        e.flush().unwrap();
        let b = e.latest_batch().unwrap();
        assert_eq!(b.window_end, t0() + TimeDelta::hours(1));
        assert_eq!(
            b.points
                .iter()
                .map(|p| p.get(ChannelId::Tp).unwrap())
                .collect::<Vec<_>>(),
            vec![1.0, 2.0]
        );
    }

    #[test]
    fn strict_mode_and_routing() {
        let mut e = StreamEngine::new(StreamTaskSpec::default(), ChannelId::ALL.to_vec())
            .unwrap()
            .strict(true);
        assert!(e.ingest_line("water Tp=8.3,Redox=748 1455494400000000000").is_err());
        let mut lax = StreamEngine::new(StreamTaskSpec::default(), ChannelId::ALL.to_vec()).unwrap();
        assert_eq!(
            lax.ingest_line("water Tp=8.3,Redox=748 1455494400000000000").unwrap(),
            Ack::Buffered
        );
        assert_eq!(lax.ingest_line("air Tp=8.3 1455494400000000000").unwrap(), Ack::Ignored);
        let err = lax
            .ingest_lines("water Tp=1 1\n\nwater Tp 2\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn virtual_clock_emits_on_aligned_boundaries() {
        let mut e = StreamEngine::new(task(Span::hours(3), Span::hours(1)), vec![ChannelId::Tp]).unwrap();
        let start = t0() + TimeDelta::minutes(30);
        for m in 0..(5 * 60) {
            e.ingest_point(point(start + TimeDelta::minutes(m), m as f64)).unwrap();
        }
        e.flush().unwrap();
        let batches = e.take_emitted();
        let ends: Vec<_> = batches.iter().map(|b| b.window_end).collect();
        let expected: Vec<_> = (1..=6).map(|h| t0() + TimeDelta::hours(h)).collect();
        assert_eq!(ends, expected);
        // (end - 3h, end] at one-minute cadence, clipped by the stream start.
        let sizes: Vec<_> = batches.iter().map(|b| b.points.len()).collect();
        assert_eq!(sizes, vec![31, 91, 151, 180, 180, 149]);
    }
}
