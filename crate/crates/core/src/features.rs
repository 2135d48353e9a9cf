//! Feature scoring: mutual information against the label, and recursive feature
//! elimination driven by learner importances.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{ChannelId, TimeSeriesFrame};
use crate::error::{Error, Result};
use crate::evaluation::{cross_validate, CvSpec, Metric};
use crate::models::CostModelSpec;
use crate::scalar::Scalar;

/// Equal-frequency bins per channel.
pub const MI_BINS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub channel: ChannelId,
    /// Nats.
    pub score: f64,
}

/// Equal-frequency bin of every value. Rows are ranked by (value, index); a run of
/// equal values takes the bin of its first rank, so ties never straddle a boundary.
pub fn equal_frequency_bins<T: Scalar>(values: &[T], bins: usize) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .expect("finite values")
            .then(a.cmp(&b))
    });
    let mut out = vec![0; n];
    let mut group_bin = 0;
    for (rank, &i) in order.iter().enumerate() {
        if rank == 0 || values[i] != values[order[rank - 1]] {
            group_bin = rank * bins / n;
        }
        out[i] = group_bin;
    }
    out
}

/// Plug-in mutual information (nats) between two discrete sequences.
pub fn discrete_mutual_information(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n == 0 {
        return 0.0;
    }
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut ma: BTreeMap<usize, usize> = BTreeMap::new();
    let mut mb: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *ma.entry(x).or_default() += 1;
        *mb.entry(y).or_default() += 1;
    }
    let nf = n as f64;
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let c = c as f64;
            c / nf * (c * nf / (ma[&x] as f64 * mb[&y] as f64)).ln()
        })
        .sum();
    mi.max(0.0)
}

/// MI between one continuous column (binned) and a binary label.
pub fn mutual_information<T: Scalar>(values: &[T], labels: &[bool]) -> Result<f64> {
    if values.len() != labels.len() {
        return Err(Error::Argument(format!(
            "{} values but {} labels",
            values.len(),
            labels.len()
        )));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("value at row {i}")));
    }
    let x = equal_frequency_bins(values, MI_BINS);
    let y: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    Ok(discrete_mutual_information(&x, &y))
}

/// One score per channel, highest first (ties in channel order).
pub fn mutual_information_scores<T: Scalar, F: AsRef<TimeSeriesFrame<T>>>(
    features: &F,
    labels: &[bool],
) -> Result<Vec<FeatureScore>> {
    let frame = features.as_ref();
    if frame.has_missing() {
        return Err(Error::Precondition("frame has missing cells".into()));
    }
    if labels.len() != frame.len() {
        return Err(Error::Argument(format!(
            "{} labels for {} rows",
            labels.len(),
            frame.len()
        )));
    }
    let mut scores = frame
        .channels()
        .iter()
        .enumerate()
        .map(|(j, &channel)| {
            mutual_information(frame.column_at(j), labels)
                .map(|score| FeatureScore { channel, score })
                .map_err(|e| e.for_channel(channel.name()))
        })
        .collect::<Result<Vec<_>>>()?;
    scores.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.channel.cmp(&b.channel)));
    Ok(scores)
}

pub fn write_scores_csv<W: Write>(scores: &[FeatureScore], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["channel", "score"])?;
    for s in scores {
        w.write_record([s.channel.name().to_string(), s.score.to_string()])?;
    }
    flush(w)
}

fn flush<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush().map_err(|e| Error::Io {
        path: "<csv writer>".into(),
        source: e,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RfeTarget {
    Keep(usize),
    /// Eliminate down to one feature, cross-validating F1 at every size.
    Scan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeRanking {
    /// 1 = retained longest; no ties.
    pub ranking: Vec<(ChannelId, usize)>,
    pub selected: Vec<ChannelId>,
    /// First removed first.
    pub eliminated: Vec<ChannelId>,
    /// Per-fold CV F1 for each feature count (scan mode only).
    pub per_k_scores: BTreeMap<usize, Vec<f64>>,
}

impl RfeRanking {
    pub fn rank_of(&self, channel: ChannelId) -> Option<usize> {
        self.ranking.iter().find(|(c, _)| *c == channel).map(|&(_, r)| r)
    }

    pub fn write_ranking_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["channel", "rank", "selected"])?;
        for (c, r) in &self.ranking {
            w.write_record([
                c.name().to_string(),
                r.to_string(),
                self.selected.contains(c).to_string(),
            ])?;
        }
        flush(w)
    }

    /// Long format: k, split index, F1.
    pub fn write_scan_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "split", "f1"])?;
        for (k, scores) in &self.per_k_scores {
            for (i, s) in scores.iter().enumerate() {
                w.write_record([k.to_string(), i.to_string(), s.to_string()])?;
            }
        }
        flush(w)
    }
}

/// Recursive feature elimination, one feature per round. `cv` is used only in scan mode.
pub fn rfe<T: Scalar, F: AsRef<TimeSeriesFrame<T>>>(
    model_spec: &CostModelSpec,
    features: &F,
    labels: &[bool],
    target: RfeTarget,
    cv: &CvSpec,
) -> Result<RfeRanking> {
    model_spec.validate()?;
    let frame = features.as_ref();
    let d = frame.channels().len();
    if labels.len() != frame.len() {
        return Err(Error::Argument(format!(
            "{} labels for {} rows",
            labels.len(),
            frame.len()
        )));
    }
    let stop = match target {
        RfeTarget::Keep(k) if k < 1 || k > d => {
            return Err(Error::Argument(format!("target k = {k} outside 1..={d}")));
        }
        RfeTarget::Keep(k) => k,
        RfeTarget::Scan => {
            if d == 0 {
                return Err(Error::Argument("no features".into()));
            }
            1
        }
    };
    let x = frame.feature_matrix();
    let names = frame.feature_names();
    let mut remaining: Vec<usize> = (0..d).collect();
    let mut eliminated = Vec::new();
    let mut per_k_scores = BTreeMap::new();
    let mut path: Vec<Vec<usize>> = Vec::new();
    loop {
        let xs = x.select_cols(&remaining);
        let ns: Vec<String> = remaining.iter().map(|&j| names[j].clone()).collect();
        let model = model_spec.fit(&xs, labels, &ns)?;
        let imp = model.feature_importances();
        if remaining.len() == stop {
            // Survivors ranked by the last model's importances.
            let mut order: Vec<usize> = (0..remaining.len()).collect();
            order.sort_by(|&a, &b| imp[b].partial_cmp(&imp[a]).unwrap().then(a.cmp(&b)));
            let survivors: Vec<usize> = order.iter().map(|&p| remaining[p]).collect();
            path.push(remaining.clone());
            let mut ranking: Vec<(ChannelId, usize)> = survivors
                .iter()
                .enumerate()
                .map(|(r, &j)| (frame.channels()[j], r + 1))
                .collect();
            for (r, &j) in eliminated.iter().rev().enumerate() {
                ranking.push((frame.channels()[j], survivors.len() + r + 1));
            }
            let eliminated: Vec<ChannelId> = eliminated.iter().map(|&j: &usize| frame.channels()[j]).collect();
            let mut selected: Vec<usize> = survivors;
            if target == RfeTarget::Scan {
                let mut best: Option<(f64, usize)> = None;
                for cols in &path {
                    let xs = x.select_cols(cols);
                    let ns: Vec<String> = cols.iter().map(|&j| names[j].clone()).collect();
                    let report = cross_validate(model_spec, None, &xs, labels, &ns, cv)?;
                    let scores = report.fold_values(Metric::F1);
                    let mean = report.mean(Metric::F1).unwrap_or(f64::NEG_INFINITY);
                    // Strictly better wins; on ties the smaller set, seen later, wins.
                    if best.map_or(true, |(m, _)| mean >= m) {
                        best = Some((mean, cols.len()));
                        selected = cols.clone();
                    }
                    per_k_scores.insert(cols.len(), scores);
                }
            }
            selected.sort_by_key(|&j| frame.channels()[j]);
            return Ok(RfeRanking {
                ranking,
                selected: selected.into_iter().map(|j| frame.channels()[j]).collect(),
                eliminated,
                per_k_scores,
            });
        }
        path.push(remaining.clone());
        // Least important goes; ties remove the later column.
        let worst = (0..remaining.len())
            .min_by(|&a, &b| imp[a].partial_cmp(&imp[b]).unwrap().then(b.cmp(&a)))
            .expect("at least one feature");
        eliminated.push(remaining.remove(worst));
    }
}
