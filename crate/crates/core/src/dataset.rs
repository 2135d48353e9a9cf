//! Loading, validating, gap-filling and splitting the water-quality series.

use std::fmt;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const TIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";
pub const TIME_COLUMN: &str = "Time";
pub const LABEL_COLUMN: &str = "EVENT";

/// One of the nine sensor channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChannelId {
    Tp,
    Cl,
    #[serde(rename = "pH")]
    Ph,
    Redox,
    Leit,
    Trueb,
    #[serde(rename = "Cl_2")]
    Cl2,
    Fm,
    #[serde(rename = "Fm_2")]
    Fm2,
}

impl ChannelId {
    /// All channels in canonical column order.
    pub const ALL: [ChannelId; 9] = [
        ChannelId::Tp,
        ChannelId::Cl,
        ChannelId::Ph,
        ChannelId::Redox,
        ChannelId::Leit,
        ChannelId::Trueb,
        ChannelId::Cl2,
        ChannelId::Fm,
        ChannelId::Fm2,
    ];

    /// Position in canonical order.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ChannelId::Tp => "Tp",
            ChannelId::Cl => "Cl",
            ChannelId::Ph => "pH",
            ChannelId::Redox => "Redox",
            ChannelId::Leit => "Leit",
            ChannelId::Trueb => "Trueb",
            ChannelId::Cl2 => "Cl_2",
            ChannelId::Fm => "Fm",
            ChannelId::Fm2 => "Fm_2",
        }
    }

    /// Resolves a column name, accepting the `Temp` and `Turbid` aliases.
    pub fn from_name(name: &str) -> Option<ChannelId> {
        let name = name.trim();
        match name {
            "Temp" => return Some(ChannelId::Tp),
            "Turbid" => return Some(ChannelId::Trueb),
            _ => {}
        }
        ChannelId::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn unit(self) -> &'static str {
        match self {
            ChannelId::Tp => "°C",
            ChannelId::Cl | ChannelId::Cl2 => "mg/L",
            ChannelId::Ph => "",
            ChannelId::Redox => "mV",
            ChannelId::Leit => "µS/cm",
            ChannelId::Trueb => "NTU",
            ChannelId::Fm | ChannelId::Fm2 => "m^3/h",
        }
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChannelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ChannelId::from_name(s).ok_or_else(|| Error::Schema(format!("unknown channel {s:?}")))
    }
}

/// Timestamp-indexed channels with a boolean event label and a missingness mask.
///
/// Missing cells hold NaN in `values` and `true` in the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesFrame<T> {
    timestamps: Vec<NaiveDateTime>,
    channels: Vec<ChannelId>,
    values: Vec<Vec<T>>,
    missing: Vec<Vec<bool>>,
    labels: Vec<bool>,
}

impl<T: Scalar> TimeSeriesFrame<T> {
    /// Builds a frame from per-channel columns where `None` marks a missing cell.
    pub fn new(
        timestamps: Vec<NaiveDateTime>,
        channels: Vec<ChannelId>,
        columns: Vec<Vec<Option<T>>>,
        labels: Vec<bool>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(columns.len());
        let mut missing = Vec::with_capacity(columns.len());
        for col in columns {
            missing.push(col.iter().map(|v| !matches!(v, Some(x) if x.is_finite())).collect());
            values.push(
                col.into_iter()
                    .map(|v| v.filter(|x| x.is_finite()).unwrap_or_else(T::nan))
                    .collect(),
            );
        }
        Self::from_parts(timestamps, channels, values, missing, labels)
    }

    /// Builds a frame from complete columns.
    pub fn from_complete(
        timestamps: Vec<NaiveDateTime>,
        channels: Vec<ChannelId>,
        columns: Vec<Vec<T>>,
        labels: Vec<bool>,
    ) -> Result<Self> {
        let cols = columns.into_iter().map(|c| c.into_iter().map(Some).collect()).collect();
        Self::new(timestamps, channels, cols, labels)
    }

    fn from_parts(
        timestamps: Vec<NaiveDateTime>,
        channels: Vec<ChannelId>,
        values: Vec<Vec<T>>,
        missing: Vec<Vec<bool>>,
        labels: Vec<bool>,
    ) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Schema("a frame needs at least one channel".into()));
        }
        for (i, c) in channels.iter().enumerate() {
            if channels[..i].contains(c) {
                return Err(Error::Schema(format!("duplicate channel {c}")));
            }
        }
        let n = timestamps.len();
        if values.len() != channels.len()
            || values.iter().any(|c| c.len() != n)
            || missing.iter().any(|c| c.len() != n)
            || labels.len() != n
        {
            return Err(Error::Schema(
                "channels and labels must match the timestamp count".into(),
            ));
        }
        if let Some(row) = (1..n).find(|&i| timestamps[i] <= timestamps[i - 1]) {
            return Err(Error::Ordering { row });
        }
        Ok(TimeSeriesFrame {
            timestamps,
            channels,
            values,
            missing,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn channels(&self) -> &[ChannelId] {
        &self.channels
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    /// Values of one channel; missing cells are NaN.
    pub fn column(&self, channel: ChannelId) -> Option<&[T]> {
        self.channel_index(channel).map(|j| self.values[j].as_slice())
    }

    pub fn column_at(&self, j: usize) -> &[T] {
        &self.values[j]
    }

    pub fn missing_mask(&self, channel: ChannelId) -> Option<&[bool]> {
        self.channel_index(channel).map(|j| self.missing[j].as_slice())
    }

    pub fn channel_index(&self, channel: ChannelId) -> Option<usize> {
        self.channels.iter().position(|&c| c == channel)
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().flatten().filter(|&&m| m).count()
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().flatten().any(|&m| m)
    }

    pub fn positive_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    /// Row `i` as one value per channel.
    pub fn row(&self, i: usize) -> Vec<T> {
        self.values.iter().map(|c| c[i]).collect()
    }

    /// Rows in `range`, preserving every column and the mask.
    pub fn slice(&self, range: Range<usize>) -> Self {
        TimeSeriesFrame {
            timestamps: self.timestamps[range.clone()].to_vec(),
            channels: self.channels.clone(),
            values: self.values.iter().map(|c| c[range.clone()].to_vec()).collect(),
            missing: self.missing.iter().map(|c| c[range.clone()].to_vec()).collect(),
            labels: self.labels[range].to_vec(),
        }
    }

    /// Rows at `idx`, which must be strictly increasing so time order survives.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        if idx.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument("row indices must be strictly increasing".into()));
        }
        if let Some(&i) = idx.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Argument(format!("row {i} out of range for {} rows", self.len())));
        }
        let pick = |c: &Vec<T>| idx.iter().map(|&i| c[i]).collect();
        Ok(TimeSeriesFrame {
            timestamps: idx.iter().map(|&i| self.timestamps[i]).collect(),
            channels: self.channels.clone(),
            values: self.values.iter().map(pick).collect(),
            missing: self
                .missing
                .iter()
                .map(|c| idx.iter().map(|&i| c[i]).collect())
                .collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        })
    }

    /// Keeps only `channels`, in the given order.
    pub fn select_channels(&self, channels: &[ChannelId]) -> Result<Self> {
        let mut values = Vec::with_capacity(channels.len());
        let mut missing = Vec::with_capacity(channels.len());
        for &c in channels {
            let j = self
                .channel_index(c)
                .ok_or_else(|| Error::MissingColumn(c.name().to_string()))?;
            values.push(self.values[j].clone());
            missing.push(self.missing[j].clone());
        }
        Self::from_parts(
            self.timestamps.clone(),
            channels.to_vec(),
            values,
            missing,
            self.labels.clone(),
        )
    }

    /// Feature matrix with one column per channel, in channel order.
    pub fn feature_matrix(&self) -> Matrix<T> {
        let cols: Vec<&[T]> = self.values.iter().map(|c| c.as_slice()).collect();
        Matrix::from_columns(&cols).expect("frame columns share a length")
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.name().to_string()).collect()
    }

    /// Writes the frame in the `Time,<channels>,EVENT` layout.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().from_writer(writer);
        let mut header = vec![TIME_COLUMN.to_string()];
        header.extend(self.channels.iter().map(|c| c.name().to_string()));
        header.push(LABEL_COLUMN.to_string());
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for i in 0..self.len() {
            record.clear();
            record.push(self.timestamps[i].format(TIME_FORMAT).to_string());
            for j in 0..self.channels.len() {
                if self.missing[j][i] {
                    record.push(String::new());
                } else {
                    record.push(self.values[j][i].to_string());
                }
            }
            record.push(if self.labels[i] { "True" } else { "False" }.to_string());
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<csv writer>".into(),
            source: e,
        })?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    NaiveDateTime::parse_from_str(s, TIME_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S"))
        .ok()
}

fn parse_label(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" => Some(true),
        "false" | "0" => Some(false),
        _ => None,
    }
}

/// Reads a frame from a CSV file holding a `Time` column, the `schema` channels and `EVENT`.
///
/// Extra columns (such as a leading unnamed index) are ignored.
pub fn parse_csv<T: Scalar>(path: impl AsRef<Path>, schema: &[ChannelId]) -> Result<TimeSeriesFrame<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_csv_reader(std::io::BufReader::new(file), schema)
}

pub fn parse_csv_reader<T: Scalar, R: Read>(reader: R, schema: &[ChannelId]) -> Result<TimeSeriesFrame<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let find = |pred: &dyn Fn(&str) -> bool| header.iter().position(|h| pred(h.trim()));

    let time_col =
        find(&|h| h.eq_ignore_ascii_case(TIME_COLUMN)).ok_or_else(|| Error::MissingColumn(TIME_COLUMN.into()))?;
    let label_col =
        find(&|h| h.eq_ignore_ascii_case(LABEL_COLUMN)).ok_or_else(|| Error::MissingColumn(LABEL_COLUMN.into()))?;
    let mut channel_cols = Vec::with_capacity(schema.len());
    for &c in schema {
        let j = find(&|h| ChannelId::from_name(h) == Some(c)).ok_or_else(|| Error::MissingColumn(c.name().into()))?;
        channel_cols.push(j);
    }

    let mut timestamps = Vec::new();
    let mut columns: Vec<Vec<Option<T>>> = vec![Vec::new(); schema.len()];
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        // header is line 1
        let row = i + 2;
        let raw_time = rec.get(time_col).unwrap_or("");
        let ts = parse_timestamp(raw_time).ok_or_else(|| Error::Timestamp {
            row,
            value: raw_time.to_string(),
        })?;
        if let Some(&prev) = timestamps.last() {
            if ts <= prev {
                return Err(Error::Ordering { row });
            }
        }
        timestamps.push(ts);
        for (col, &j) in columns.iter_mut().zip(&channel_cols) {
            let cell = rec.get(j).unwrap_or("").trim();
            col.push(T::from_str(cell).ok().filter(|v| v.is_finite()));
        }
        let raw_label = rec.get(label_col).unwrap_or("");
        labels.push(parse_label(raw_label).ok_or_else(|| Error::Label {
            row,
            value: raw_label.to_string(),
        })?);
    }
    TimeSeriesFrame::new(timestamps, schema.to_vec(), columns, labels)
}

/// Forward-fills every missing cell with the last observed value of its channel.
///
/// Rows before the first observation of any channel are dropped frame-wide.
pub fn fill_missing<T: Scalar>(frame: &TimeSeriesFrame<T>) -> Result<TimeSeriesFrame<T>> {
    let mut start = 0;
    for (j, mask) in frame.missing.iter().enumerate() {
        match mask.iter().position(|&m| !m) {
            Some(first) => start = start.max(first),
            None => return Err(Error::UnfixableChannel(frame.channels[j].name().into())),
        }
    }
    let n = frame.len();
    let values = frame
        .values
        .iter()
        .zip(&frame.missing)
        .map(|(col, mask)| {
            let mut last = col[start];
            (start..n)
                .map(|i| {
                    if !mask[i] {
                        last = col[i];
                    }
                    last
                })
                .collect()
        })
        .collect();
    let missing = vec![vec![false; n - start]; frame.channels.len()];
    TimeSeriesFrame::from_parts(
        frame.timestamps[start..].to_vec(),
        frame.channels.clone(),
        values,
        missing,
        frame.labels[start..].to_vec(),
    )
}

/// Chronological hold-out configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub holdout_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { holdout_fraction: 0.2 }
    }
}

impl SplitSpec {
    /// Size of the leading (training) part: ⌈(1 − f)·n⌉.
    pub fn train_len(&self, n: usize) -> Result<usize> {
        let f = self.holdout_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Argument(format!("holdout fraction {f} outside (0, 1)")));
        }
        let exact = (1.0 - f) * n as f64;
        // absorb representation error such as (1 - 0.2) * 10 = 8.000000000000002
        let train = (exact - 1e-9).ceil().max(0.0) as usize;
        Ok(train.min(n))
    }
}

/// Splits without shuffling into the earliest ⌈(1 − f)·n⌉ rows and the remainder.
pub fn chronological_split<T: Scalar>(
    frame: &TimeSeriesFrame<T>,
    spec: SplitSpec,
) -> Result<(TimeSeriesFrame<T>, TimeSeriesFrame<T>)> {
    if frame.is_empty() {
        return Err(Error::Argument("cannot split an empty frame".into()));
    }
    let n = frame.len();
    let cut = spec.train_len(n)?;
    Ok((frame.slice(0..cut), frame.slice(cut..n)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(i: i64) -> NaiveDateTime {
        NaiveDateTime::parse_from_str("2016-02-15 00:00:00", TIME_FORMAT).unwrap() + chrono::Duration::minutes(i)
    }

    fn single(col: Vec<Option<f64>>) -> TimeSeriesFrame<f64> {
        let n = col.len();
        TimeSeriesFrame::new(
            (0..n as i64).map(ts).collect(),
            vec![ChannelId::Cl],
            vec![col],
            vec![false; n],
        )
        .unwrap()
    }

    const HEADER: &str = "Time,Tp,Cl,pH,Redox,Leit,Trueb,Cl_2,Fm,Fm_2,EVENT\n";

    #[test]
    fn empty_cell_marks_exactly_one_missing() {
        let csv = format!(
            "{HEADER}\
             2016-02-15 00:00:00,8.3,0.15,8.4,748,470,0.05,0.15,1000,1200,False\n\
             2016-02-15 00:01:00,8.3,,8.4,748,470,0.05,0.15,1000,1200,True\n\
             2016-02-15 00:02:00,8.3,0.16,8.4,748,470,0.05,0.15,1000,1200,false\n"
        );
        let f: TimeSeriesFrame<f64> = parse_csv_reader(csv.as_bytes(), &ChannelId::ALL).unwrap();
        assert_eq!(f.len(), 3);
        assert_eq!(f.missing_count(), 1);
        assert!(f.missing_mask(ChannelId::Cl).unwrap()[1]);
        assert_eq!(f.labels(), &[false, true, false]);
    }

    #[test]
    fn label_literals_accept_case_and_digits() {
        for (s, v) in [("TRUE", true), ("1", true), ("False", false), ("0", false)] {
            assert_eq!(parse_label(s), Some(v));
        }
        assert_eq!(parse_label("yes"), None);
    }

    #[test]
    fn missing_column_is_named() {
        let csv = "Time,Tp,Cl,pH,Leit,Trueb,Cl_2,Fm,Fm_2,EVENT\n";
        let err = parse_csv_reader::<f64, _>(csv.as_bytes(), &ChannelId::ALL).unwrap_err();
        assert!(matches!(&err, Error::MissingColumn(c) if c == "Redox"), "{err}");
        assert!(err.to_string().contains("Redox"));
    }

    #[test]
    fn aliases_and_extra_index_column() {
        let csv = ",Time,Temp,Cl,pH,Redox,Leit,Turbid,Cl_2,Fm,Fm_2,EVENT\n\
                   0,2016-02-15 00:00:00,8.3,0.15,8.4,748,470,0.05,0.15,1000,1200,False\n";
        let f: TimeSeriesFrame<f64> = parse_csv_reader(csv.as_bytes(), &ChannelId::ALL).unwrap();
        assert_eq!(f.column(ChannelId::Tp).unwrap(), &[8.3]);
        assert_eq!(f.column(ChannelId::Trueb).unwrap(), &[0.05]);
    }

    #[test]
    fn bad_timestamp_reports_row() {
        let csv = format!("{HEADER}2016-02-15 00:00:00,1,1,1,1,1,1,1,1,1,False\n15/02/2016,1,1,1,1,1,1,1,1,1,False\n");
        let err = parse_csv_reader::<f64, _>(csv.as_bytes(), &ChannelId::ALL).unwrap_err();
        assert!(matches!(err, Error::Timestamp { row: 3, .. }), "{err}");
    }

    #[test]
    fn non_increasing_timestamps_rejected() {
        let csv = format!(
            "{HEADER}2016-02-15 00:01:00,1,1,1,1,1,1,1,1,1,False\n2016-02-15 00:01:00,1,1,1,1,1,1,1,1,1,False\n"
        );
        let err = parse_csv_reader::<f64, _>(csv.as_bytes(), &ChannelId::ALL).unwrap_err();
        assert!(matches!(err, Error::Ordering { row: 3 }), "{err}");
    }

    #[test]
    fn forward_fill_copies_last_known_value() {
        let f = single(vec![Some(1.0), None, None, Some(4.0)]);
        let g = fill_missing(&f).unwrap();
        assert_eq!(g.column(ChannelId::Cl).unwrap(), &[1.0, 1.0, 1.0, 4.0]);
        assert!(!g.has_missing());
    }

    #[test]
    fn complete_frame_is_unchanged() {
        let f = single(vec![Some(1.0), Some(2.0)]);
        assert_eq!(fill_missing(&f).unwrap(), f);
    }

    #[test]
    fn leading_gap_drops_rows_frame_wide() {
        let f = TimeSeriesFrame::new(
            (0..3).map(ts).collect(),
            vec![ChannelId::Cl, ChannelId::Ph],
            vec![vec![None, Some(2.0), None], vec![Some(7.0), Some(7.1), Some(7.2)]],
            vec![true, false, true],
        )
        .unwrap();
        let g = fill_missing(&f).unwrap();
        assert_eq!(g.column(ChannelId::Cl).unwrap(), &[2.0, 2.0]);
        assert_eq!(g.column(ChannelId::Ph).unwrap(), &[7.1, 7.2]);
        assert_eq!(g.labels(), &[false, true]);
        assert_eq!(g.timestamps()[0], ts(1));
    }

    #[test]
    fn all_missing_channel_is_unfixable() {
        let f = single(vec![None, None]);
        assert!(matches!(fill_missing(&f), Err(Error::UnfixableChannel(c)) if c == "Cl"));
    }

    #[test]
    fn split_sizes_follow_ceiling_rule() {
        let f = single((0..10).map(|v| Some(v as f64)).collect());
        let (a, b) = chronological_split(&f, SplitSpec { holdout_fraction: 0.2 }).unwrap();
        assert_eq!((a.len(), b.len()), (8, 2));
        assert!(a.timestamps().last().unwrap() < b.timestamps().first().unwrap());

        let f3 = single(vec![Some(1.0); 3]);
        let (a, b) = chronological_split(&f3, SplitSpec { holdout_fraction: 0.5 }).unwrap();
        assert_eq!((a.len(), b.len()), (2, 1));
    }

    #[test]
    fn split_fraction_out_of_range() {
        let f = single(vec![Some(1.0); 3]);
        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                chronological_split(&f, SplitSpec { holdout_fraction: bad }),
                Err(Error::Argument(_))
            ));
        }
    }

    #[test]
    fn f32_frames_parse() {
        let csv = format!("{HEADER}2016-02-15 00:00:00,8.3,0.15,8.4,748,470,0.05,0.15,1000,1200,False\n");
        let f: TimeSeriesFrame<f32> = parse_csv_reader(csv.as_bytes(), &ChannelId::ALL).unwrap();
        assert_eq!(f.column(ChannelId::Redox).unwrap(), &[748.0f32]);
    }
}
