//! First differencing and the augmented Dickey-Fuller unit-root test.
//!
//! The test regression has a constant and no trend:
//!
//! ```text
//! Δy_t = α + γ·y_{t−1} + Σ_{i=1..p} β_i·Δy_{t−i} + ε_t
//! ```
//!
//! The lag order `p` minimizes AIC over `0..=max_lag` on a common sample,
//! then the chosen model is refit on every usable observation. The statistic
//! is the t-ratio of γ̂.

use std::fmt;
use std::io::Write;

use chrono::NaiveDateTime;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ChannelId, TimeSeriesFrame};
use crate::error::{Error, Result};
use crate::linalg::LeastSquares;
use crate::scalar::Scalar;

/// Asymptotic critical values for the constant-only regression at 1%, 5%, 10%.
pub const CRITICAL_VALUES: [f64; 3] = [-3.43042, -2.86157, -2.56679];

const MIN_OBSERVATIONS: usize = 20;

/// A frame of first differences ∇y_t = y_t − y_{t−1}; labels stay aligned to t.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferencedFrame<T> {
    frame: TimeSeriesFrame<T>,
    origin: Vec<T>,
    origin_time: NaiveDateTime,
}

impl<T: Scalar> DifferencedFrame<T> {
    pub fn frame(&self) -> &TimeSeriesFrame<T> {
        &self.frame
    }

    pub fn into_frame(self) -> TimeSeriesFrame<T> {
        self.frame
    }

    /// First row of the original frame, one value per channel.
    pub fn origin(&self) -> &[T] {
        &self.origin
    }

    pub fn origin_time(&self) -> NaiveDateTime {
        self.origin_time
    }

    pub fn len(&self) -> usize {
        self.frame.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame.is_empty()
    }

    /// Rebuilds the level series by cumulative summation from the origin row.
    ///
    /// Labels of the origin row are not retained by differencing and come back as `false`.
    pub fn reconstruct(&self) -> Result<TimeSeriesFrame<T>> {
        let mut timestamps = Vec::with_capacity(self.len() + 1);
        timestamps.push(self.origin_time);
        timestamps.extend_from_slice(self.frame.timestamps());
        let columns = (0..self.frame.channels().len())
            .map(|j| {
                let mut level = self.origin[j];
                std::iter::once(level)
                    .chain(self.frame.column_at(j).iter().map(|&d| {
                        level += d;
                        level
                    }))
                    .collect()
            })
            .collect();
        let mut labels = vec![false];
        labels.extend_from_slice(self.frame.labels());
        TimeSeriesFrame::from_complete(timestamps, self.frame.channels().to_vec(), columns, labels)
    }
}

impl<T> AsRef<TimeSeriesFrame<T>> for DifferencedFrame<T> {
    fn as_ref(&self) -> &TimeSeriesFrame<T> {
        &self.frame
    }
}

impl<T> AsRef<TimeSeriesFrame<T>> for TimeSeriesFrame<T> {
    fn as_ref(&self) -> &TimeSeriesFrame<T> {
        self
    }
}

/// First differences of every channel; the first row is dropped.
pub fn difference<T: Scalar>(frame: &TimeSeriesFrame<T>) -> Result<DifferencedFrame<T>> {
    if frame.len() < 2 {
        return Err(Error::Argument(format!(
            "differencing needs at least 2 rows, got {}",
            frame.len()
        )));
    }
    if frame.has_missing() {
        return Err(Error::Precondition(
            "frame has missing cells; fill them before differencing".into(),
        ));
    }
    let columns = (0..frame.channels().len())
        .map(|j| frame.column_at(j).windows(2).map(|w| w[1] - w[0]).collect())
        .collect();
    let diffed = TimeSeriesFrame::from_complete(
        frame.timestamps()[1..].to_vec(),
        frame.channels().to_vec(),
        columns,
        frame.labels()[1..].to_vec(),
    )?;
    Ok(DifferencedFrame {
        frame: diffed,
        origin: frame.row(0),
        origin_time: frame.timestamps()[0],
    })
}

/// Differences a single series.
pub fn difference_series<T: Scalar>(y: &[T]) -> Vec<T> {
    y.windows(2).map(|w| w[1] - w[0]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "stationary@1%")]
    Stationary1,
    #[serde(rename = "stationary@5%")]
    Stationary5,
    #[serde(rename = "stationary@10%")]
    Stationary10,
    #[serde(rename = "non-stationary")]
    NonStationary,
}

impl Verdict {
    /// Strongest level whose critical value exceeds `statistic`.
    pub fn classify(statistic: f64) -> Verdict {
        if statistic < CRITICAL_VALUES[0] {
            Verdict::Stationary1
        } else if statistic < CRITICAL_VALUES[1] {
            Verdict::Stationary5
        } else if statistic < CRITICAL_VALUES[2] {
            Verdict::Stationary10
        } else {
            Verdict::NonStationary
        }
    }

    /// Whether the unit-root null is rejected at `level` (0.01, 0.05 or 0.10).
    pub fn rejects_at(self, level: f64) -> bool {
        let bound = if level <= 0.01 {
            Verdict::Stationary1
        } else if level <= 0.05 {
            Verdict::Stationary5
        } else {
            Verdict::Stationary10
        };
        self <= bound
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Stationary1 => "stationary@1%",
            Verdict::Stationary5 => "stationary@5%",
            Verdict::Stationary10 => "stationary@10%",
            Verdict::NonStationary => "non-stationary",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AdfResult<T> {
    pub statistic: T,
    pub lag: usize,
    pub observations: usize,
    pub critical_values: [T; 3],
    pub verdict: Verdict,
}

/// Schwert's default upper bound ⌊12·(n/100)^{1/4}⌋.
pub fn schwert_max_lag(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

/// Augmented Dickey-Fuller test with a constant and AIC lag selection.
pub fn adf_test<T: Scalar>(series: &[T], max_lag: Option<usize>) -> Result<AdfResult<T>> {
    let n = series.len();
    if let Some(i) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("series value at index {i}")));
    }
    if n < 2 || series.iter().all(|&v| v == series[0]) {
        return Err(Error::DegenerateInput("series has zero variance".into()));
    }
    let dy = difference_series(series);
    // keep at least half the differenced sample for estimation
    let cap = (dy.len() / 2).saturating_sub(2);
    let max_lag = max_lag.unwrap_or_else(|| schwert_max_lag(n)).min(cap);
    if dy.len().saturating_sub(max_lag) < MIN_OBSERVATIONS {
        return Err(Error::Argument(format!(
            "series of length {n} leaves fewer than {MIN_OBSERVATIONS} observations after lag trimming"
        )));
    }

    let lag = if max_lag == 0 {
        0
    } else {
        let full = LeastSquares::fit(&design(series, &dy, max_lag, max_lag), &dy[max_lag..])?;
        let nobs = T::from_count(full.observations());
        let mut best = (T::infinity(), 0);
        for p in 0..=max_lag {
            let k = T::from_count(p + 2);
            let rss = full.prefix_rss(p + 2);
            let aic = nobs * (rss / nobs).ln() + T::lit(2.0) * k;
            if aic < best.0 {
                best = (aic, p);
            }
        }
        best.1
    };

    let fit = LeastSquares::fit(&design(series, &dy, lag, lag), &dy[lag..])?;
    if fit.rss() <= T::zero() {
        return Err(Error::DegenerateInput(
            "test regression fits exactly; residual variance is zero".into(),
        ));
    }
    let statistic = fit.coefficients()[1] / fit.standard_errors()[1];
    if !statistic.is_finite() {
        return Err(Error::Numerical("ADF statistic is not finite".into()));
    }
    Ok(AdfResult {
        statistic,
        lag,
        observations: fit.observations(),
        critical_values: CRITICAL_VALUES.map(T::lit),
        verdict: Verdict::classify(statistic.as_f64()),
    })
}

/// Columns [1, y_{t−1}, Δy_{t−1}, …, Δy_{t−lags}] for rows t = start..dy.len().
fn design<T: Scalar>(y: &[T], dy: &[T], lags: usize, start: usize) -> Vec<Vec<T>> {
    let rows = start..dy.len();
    let mut cols = Vec::with_capacity(lags + 2);
    cols.push(vec![T::one(); rows.len()]);
    cols.push(rows.clone().map(|i| y[i]).collect());
    for l in 1..=lags {
        cols.push(rows.clone().map(|i| dy[i - l]).collect());
    }
    cols
}

/// Per-channel ADF results in canonical channel order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdfReport<T> {
    pub rows: Vec<(ChannelId, AdfResult<T>)>,
}

impl<T: Scalar> AdfReport<T> {
    pub fn get(&self, channel: ChannelId) -> Option<&AdfResult<T>> {
        self.rows.iter().find(|(c, _)| *c == channel).map(|(_, r)| r)
    }

    /// CSV with channels as columns and rows statistic, verdict, 1%, 5%, 10%.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![String::new()];
        header.extend(self.rows.iter().map(|(c, _)| c.name().to_string()));
        w.write_record(&header)?;
        let mut line = |label: &str, f: &dyn Fn(&AdfResult<T>) -> String| -> Result<()> {
            let mut rec = vec![label.to_string()];
            rec.extend(self.rows.iter().map(|(_, r)| f(r)));
            w.write_record(&rec)?;
            Ok(())
        };
        line("ADF Statistic", &|r| format!("{:.4}", r.statistic))?;
        line("verdict", &|r| r.verdict.to_string())?;
        line("1%", &|r| r.critical_values[0].to_string())?;
        line("5%", &|r| r.critical_values[1].to_string())?;
        line("10%", &|r| r.critical_values[2].to_string())?;
        w.flush().map_err(|e| Error::Io {
            path: "<csv writer>".into(),
            source: e,
        })
    }
}

/// Runs [`adf_test`] on every channel; the first failing channel is reported by name.
pub fn adf_report<T: Scalar, F: AsRef<TimeSeriesFrame<T>>>(frame: &F, max_lag: Option<usize>) -> Result<AdfReport<T>> {
    let frame = frame.as_ref();
    if frame.has_missing() {
        return Err(Error::Precondition("ADF report requires a cleaned frame".into()));
    }
    let mut channels = frame.channels().to_vec();
    channels.sort();
    let results: Vec<Result<(ChannelId, AdfResult<T>)>> = channels
        .par_iter()
        .map(|&c| {
            let col = frame.column(c).expect("channel from frame");
            adf_test(col, max_lag)
                .map(|r| (c, r))
                .map_err(|e| e.for_channel(c.name()))
        })
        .collect();
    Ok(AdfReport {
        rows: results.into_iter().collect::<Result<_>>()?,
    })
}
