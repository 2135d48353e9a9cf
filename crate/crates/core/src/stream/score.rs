//! Scoring streamed points with a trained classifier.

use std::collections::BTreeMap;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::engine::WindowBatch;
use super::point::DataPoint;
use crate::dataset::ChannelId;
use crate::error::{Error, Result};
use crate::models::TrainedClassifier;
use crate::scalar::Scalar;

/// A point the model flagged. `values` holds the raw (undifferenced) readings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyAlert {
    #[serde(with = "rfc3339_time")]
    pub time: NaiveDateTime,
    pub values: BTreeMap<ChannelId, f64>,
    pub predicted: bool,
    pub model: String,
}

mod rfc3339_time {
    use chrono::NaiveDateTime;
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::stream::point::{parse_rfc3339, rfc3339};

    pub fn serialize<S: Serializer>(t: &NaiveDateTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&rfc3339(*t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDateTime, D::Error> {
        let s = String::deserialize(d)?;
        parse_rfc3339(&s).map_err(serde::de::Error::custom)
    }
}

/// The channel behind each model feature, in model order.
pub fn model_channels<T: Scalar>(model: &TrainedClassifier<T>) -> Result<Vec<ChannelId>> {
    model
        .feature_names
        .iter()
        .map(|n| {
            ChannelId::from_name(n).ok_or_else(|| Error::Schema(format!("model feature {n:?} is not a sensor channel")))
        })
        .collect()
}

fn score_points<T: Scalar>(
    model: &TrainedClassifier<T>,
    model_id: &str,
    channels: &[ChannelId],
    points: &[DataPoint],
    prev: &DataPoint,
) -> Result<Vec<AnomalyAlert>> {
    let value = |p: &DataPoint, c: ChannelId| p.get(c).ok_or_else(|| Error::ChannelGap(c.name().into()));
    let mut alerts = Vec::new();
    let mut row = vec![T::zero(); channels.len()];
    let mut before = prev;
    for p in points {
        for (slot, &c) in row.iter_mut().zip(channels) {
            *slot = T::lit(value(p, c)?) - T::lit(value(before, c)?);
        }
        if model.predict_row(&row) {
            alerts.push(AnomalyAlert {
                time: p.timestamp,
                values: p.fields().collect(),
                predicted: true,
                model: model_id.to_string(),
            });
        }
        before = p;
    }
    Ok(alerts)
}

/// Differences each point against its predecessor (`prev_point` for the first),
/// predicts, and returns alerts for the positives.
pub fn score_stream<T: Scalar>(
    model: &TrainedClassifier<T>,
    batch: &WindowBatch,
    prev_point: &DataPoint,
) -> Result<Vec<AnomalyAlert>> {
    let channels = model_channels(model)?;
    score_points(model, &model.identifier(), &channels, &batch.points, prev_point)
}

/// Scores each streamed point once, however many overlapping windows contain it.
#[derive(Debug, Clone)]
pub struct StreamScorer<T> {
    model: TrainedClassifier<T>,
    model_id: String,
    channels: Vec<ChannelId>,
    prev: Option<DataPoint>,
    scored: u64,
}

impl<T: Scalar> StreamScorer<T> {
    pub fn new(model: TrainedClassifier<T>) -> Result<Self> {
        let channels = model_channels(&model)?;
        let model_id = model.identifier();
        Ok(StreamScorer {
            model,
            model_id,
            channels,
            prev: None,
            scored: 0,
        })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn scored(&self) -> u64 {
        self.scored
    }

    /// Scores the batch's points newer than the last one seen. The very first point of
    /// the stream only seeds the differencing.
    pub fn score_batch(&mut self, batch: &WindowBatch) -> Result<Vec<AnomalyAlert>> {
        let fresh: &[DataPoint] = match self.prev {
            Some(prev) => {
                let from = batch.points.partition_point(|p| p.timestamp <= prev.timestamp);
                &batch.points[from..]
            }
            None => match batch.points.split_first() {
                Some((first, rest)) => {
                    self.prev = Some(*first);
                    rest
                }
                None => return Ok(Vec::new()),
            },
        };
        let Some(prev) = self.prev else { return Ok(Vec::new()) };
        let alerts = score_points(&self.model, &self.model_id, &self.channels, fresh, &prev)?;
        if let Some(last) = fresh.last() {
            self.prev = Some(*last);
        }
        self.scored += fresh.len() as u64;
        Ok(alerts)
    }
}
