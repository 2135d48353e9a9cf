//! Seeded surrogate water-quality data.
//!
//! Levels follow near-unit-root AR(1) processes around plausible plant baselines at
//! one-minute cadence. Event rows add jumps to the one-step changes: large random-sign
//! jumps in Redox, smaller ones in pH, conductivity and turbidity, and a one-sided rise
//! in Cl. Temperature carries no event signal. A share of event rows is deliberately
//! faint, and non-event rows see occasional flow-meter spikes, so no learner is perfect.

use chrono::{NaiveDate, NaiveDateTime, TimeDelta};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{ChannelId, TimeSeriesFrame};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub rows: usize,
    pub seed: u64,
    /// Target share of event rows.
    pub event_rate: f64,
    /// Mean event length in rows.
    pub event_length: f64,
    /// Share of event rows with only faint jumps.
    pub faint_share: f64,
    /// Share of cells left empty, for exercising gap filling.
    pub missing_rate: f64,
    pub start: NaiveDateTime,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            rows: 30_000,
            seed: 0,
            event_rate: 0.0142,
            event_length: 8.0,
            faint_share: 0.12,
            missing_rate: 0.0,
            start: NaiveDate::from_ymd_opt(2017, 8, 1)
                .expect("valid date")
                .and_hms_opt(0, 0, 0)
                .expect("valid time"),
        }
    }
}

impl SynthSpec {
    pub fn with_rows(mut self, rows: usize) -> Self {
        self.rows = rows;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Rows covering `days` at one-minute cadence.
    pub fn days(days: usize) -> Self {
        SynthSpec::default().with_rows(days * 24 * 60)
    }
}

struct Profile {
    channel: ChannelId,
    baseline: f64,
    /// Step noise.
    sigma: f64,
    /// Event jump range in units of sigma, with the probability an event row carries one.
    jump: (f64, f64),
    jump_prob: f64,
    /// Only upward jumps.
    one_sided: bool,
}

const PROFILES: [Profile; 9] = [
    Profile {
        channel: ChannelId::Tp,
        baseline: 8.0,
        sigma: 0.01,
        jump: (0.0, 0.0),
        jump_prob: 0.0,
        one_sided: false,
    },
    Profile {
        channel: ChannelId::Cl,
        baseline: 0.15,
        sigma: 0.001,
        jump: (1.0, 3.0),
        jump_prob: 0.7,
        one_sided: true,
    },
    Profile {
        channel: ChannelId::Ph,
        baseline: 8.4,
        sigma: 0.002,
        jump: (1.5, 5.0),
        jump_prob: 0.6,
        one_sided: false,
    },
    Profile {
        channel: ChannelId::Redox,
        baseline: 750.0,
        sigma: 0.5,
        jump: (3.0, 9.0),
        jump_prob: 1.0,
        one_sided: false,
    },
    Profile {
        channel: ChannelId::Leit,
        baseline: 210.0,
        sigma: 0.2,
        jump: (1.0, 4.0),
        jump_prob: 0.4,
        one_sided: false,
    },
    Profile {
        channel: ChannelId::Trueb,
        baseline: 0.13,
        sigma: 0.002,
        jump: (1.0, 4.0),
        jump_prob: 0.4,
        one_sided: false,
    },
    Profile {
        channel: ChannelId::Cl2,
        baseline: 0.12,
        sigma: 0.001,
        jump: (1.0, 3.0),
        jump_prob: 0.2,
        one_sided: false,
    },
    Profile {
        channel: ChannelId::Fm,
        baseline: 1300.0,
        sigma: 5.0,
        jump: (1.0, 3.0),
        jump_prob: 0.2,
        one_sided: false,
    },
    Profile {
        channel: ChannelId::Fm2,
        baseline: 1200.0,
        sigma: 5.0,
        jump: (1.0, 3.0),
        jump_prob: 0.2,
        one_sided: false,
    },
];

/// Pull toward the baseline per step; close to a unit root.
const REVERSION: f64 = 0.001;
const SPIKE_RATE: f64 = 0.004;

/// Event labels from a two-state chain with the requested rate and mean run length.
fn event_labels(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let stay = 1.0 - 1.0 / spec.event_length;
    let start = spec.event_rate / (spec.event_length * (1.0 - spec.event_rate));
    let mut on = false;
    (0..spec.rows)
        .map(|_| {
            on = if on {
                rng.gen_bool(stay)
            } else {
                rng.gen_bool(start.min(1.0))
            };
            on
        })
        .collect()
}

pub fn generate<T: Scalar>(spec: &SynthSpec) -> Result<TimeSeriesFrame<T>> {
    if spec.rows < 2 {
        return Err(Error::Argument("synthetic frame needs at least 2 rows".into()));
    }
    let probabilities = [spec.event_rate, spec.faint_share, spec.missing_rate];
    if probabilities.iter().any(|p| !(0.0..1.0).contains(p)) || spec.event_length < 1.0 {
        return Err(Error::Argument(
            "synthetic rates must lie in [0, 1) and event length ≥ 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let labels = event_labels(spec, &mut rng);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut levels: Vec<f64> = PROFILES.iter().map(|p| p.baseline).collect();
    let mut columns: Vec<Vec<Option<T>>> = vec![Vec::with_capacity(spec.rows); PROFILES.len()];
    for &event in &labels {
        let faint = event && rng.gen_bool(spec.faint_share);
        let spike = !event && rng.gen_bool(SPIKE_RATE);
        for (j, p) in PROFILES.iter().enumerate() {
            let mut step = p.sigma * std_normal.sample(&mut rng);
            if event && p.jump_prob > 0.0 && rng.gen_bool(p.jump_prob) {
                let size = if faint {
                    rng.gen_range(0.3..1.2)
                } else {
                    rng.gen_range(p.jump.0..p.jump.1)
                };
                let sign = if p.one_sided || rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                step += sign * size * p.sigma;
            }
            if spike && matches!(p.channel, ChannelId::Fm | ChannelId::Fm2 | ChannelId::Trueb) {
                step += p.sigma * rng.gen_range(-6.0..6.0);
            }
            levels[j] += step - REVERSION * (levels[j] - p.baseline);
            let missing = spec.missing_rate > 0.0 && rng.gen_bool(spec.missing_rate);
            columns[j].push((!missing).then(|| T::lit(levels[j])));
        }
    }
    let timestamps = (0..spec.rows)
        .map(|i| spec.start + TimeDelta::minutes(i as i64))
        .collect();
    TimeSeriesFrame::new(
        timestamps,
        PROFILES.iter().map(|p| p.channel).collect(),
        columns,
        labels,
    )
}
