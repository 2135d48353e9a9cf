use aquanomaly::dataset::{ChannelId, TimeSeriesFrame};
use aquanomaly::evaluation::CvSpec;
use aquanomaly::features::{
    discrete_mutual_information, equal_frequency_bins, mutual_information, mutual_information_scores, rfe, RfeTarget,
    MI_BINS,
};
use aquanomaly::models::CostModelSpec;
use aquanomaly::{Error, Matrix};
use chrono::{NaiveDate, TimeDelta};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn frame(columns: Vec<(ChannelId, Vec<f64>)>, labels: Vec<bool>) -> TimeSeriesFrame<f64> {
    let n = labels.len();
    let t0 = NaiveDate::from_ymd_opt(2017, 3, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap();
    let (channels, values): (Vec<_>, Vec<_>) = columns.into_iter().unzip();
    TimeSeriesFrame::from_complete(
        (0..n).map(|i| t0 + TimeDelta::minutes(i as i64)).collect(),
        channels,
        values,
        labels,
    )
    .unwrap()
}

/// Joint-histogram MI written out cell by cell over dense count tables.
fn histogram_oracle(x: &[usize], y: &[bool]) -> f64 {
    let bins = x.iter().max().unwrap() + 1;
    let mut joint = vec![[0usize; 2]; bins];
    for (&b, &l) in x.iter().zip(y) {
        joint[b][l as usize] += 1;
    }
    let n = x.len() as f64;
    let py = [0, 1].map(|c| joint.iter().map(|r| r[c]).sum::<usize>() as f64 / n);
    let mut mi = 0.0;
    for row in &joint {
        let px = (row[0] + row[1]) as f64 / n;
        for c in 0..2 {
            if row[c] > 0 {
                let p = row[c] as f64 / n;
                mi += p * (p / (px * py[c])).ln();
            }
        }
    }
    mi
}

/// Equal-frequency bins computed independently: bin of a value = ⌊first rank · B / n⌋.
fn rank_bins(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    values
        .iter()
        .map(|v| sorted.partition_point(|s| s < v) * MI_BINS / values.len())
        .collect()
}

fn label_entropy(y: &[bool]) -> f64 {
    let p = y.iter().filter(|&&l| l).count() as f64 / y.len() as f64;
    [p, 1.0 - p].iter().filter(|&&q| q > 0.0).map(|q| -q * q.ln()).sum()
}

#[test]
fn feature_equal_to_balanced_label_scores_ln2() {
    let y: Vec<bool> = (0..1000).map(|i| i % 2 == 0).collect();
    let x: Vec<f64> = y.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    assert!((mutual_information(&x, &y).unwrap() - 2f64.ln()).abs() < 1e-12);
}

#[test]
fn independent_feature_scores_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let x: Vec<f64> = (0..10_000).map(|_| noise.sample(&mut rng)).collect();
    let y: Vec<bool> = (0..10_000).map(|_| rng.gen_bool(0.3)).collect();
    let got = mutual_information(&x, &y).unwrap();
    let oracle = histogram_oracle(&rank_bins(&x), &y);
    assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
    assert!(got <= 0.01, "{got}");
}

#[test]
fn constant_channel_scores_zero_and_lengths_must_match() {
    assert_eq!(mutual_information(&[3.0; 50], &[true; 50]).unwrap(), 0.0);
    let y: Vec<bool> = (0..50).map(|i| i < 10).collect();
    assert_eq!(mutual_information(&[3.0; 50], &y).unwrap(), 0.0);
    assert!(matches!(
        mutual_information(&[1.0, 2.0], &[true]),
        Err(Error::Argument(_))
    ));
}

#[test]
fn scores_are_sorted_and_bounded_by_label_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let y: Vec<bool> = (0..3000).map(|_| rng.gen_bool(0.1)).collect();
    let strong: Vec<f64> = y
        .iter()
        .map(|&l| 3.0 * l as u8 as f64 + noise.sample(&mut rng))
        .collect();
    let weak: Vec<f64> = y
        .iter()
        .map(|&l| 0.5 * l as u8 as f64 + noise.sample(&mut rng))
        .collect();
    let none: Vec<f64> = (0..3000).map(|_| noise.sample(&mut rng)).collect();
    let f = frame(
        vec![(ChannelId::Tp, none), (ChannelId::Cl, weak), (ChannelId::Redox, strong)],
        y.clone(),
    );
    let scores = mutual_information_scores(&f, &y).unwrap();
    let order: Vec<ChannelId> = scores.iter().map(|s| s.channel).collect();
    assert_eq!(order, [ChannelId::Redox, ChannelId::Cl, ChannelId::Tp]);
    let h = label_entropy(&y);
    assert!(scores.iter().all(|s| s.score >= 0.0 && s.score <= h));
    let mut csv = Vec::new();
    aquanomaly::features::write_scores_csv(&scores, &mut csv).unwrap();
    assert!(String::from_utf8(csv).unwrap().starts_with("channel,score\nRedox,"));
    assert!(matches!(
        mutual_information_scores(&f, &y[1..]),
        Err(Error::Argument(_))
    ));
}

fn separable_problem(n: usize, seed: u64) -> (Vec<(ChannelId, Vec<f64>)>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let y: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.2)).collect();
    let signal = |scale: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
        y.iter().map(|&l| scale * l as u8 as f64 + noise.sample(rng)).collect()
    };
    let a = signal(2.5, &mut rng);
    let b = signal(1.5, &mut rng);
    let c = signal(1.0, &mut rng);
    let pure_noise: Vec<f64> = (0..n).map(|_| noise.sample(&mut rng)).collect();
    (
        vec![
            (ChannelId::Redox, a),
            (ChannelId::Ph, b),
            (ChannelId::Leit, c),
            (ChannelId::Tp, pure_noise),
        ],
        y,
    )
}

#[test]
fn pure_noise_feature_is_eliminated_first() {
    let (cols, y) = separable_problem(2000, 5);
    let f = frame(cols, y.clone());
    let cv = CvSpec {
        k: 3,
        repeats: 1,
        seed: 1,
        ..CvSpec::default()
    };
    for spec in [CostModelSpec::logistic(), CostModelSpec::forest().with_trees(40)] {
        // Oracle: importances of a model trained on every feature.
        let x = f.feature_matrix();
        let model = spec.fit(&x, &y, &f.feature_names()).unwrap();
        let imp = model.feature_importances();
        let weakest = (0..imp.len()).min_by(|&a, &b| imp[a].total_cmp(&imp[b])).unwrap();
        assert_eq!(f.channels()[weakest], ChannelId::Tp, "{} {imp:?}", spec.learner.name());

        let r = rfe(&spec, &f, &y, RfeTarget::Keep(1), &cv).unwrap();
        assert_eq!(r.eliminated[0], ChannelId::Tp, "{}", spec.learner.name());
        assert_eq!(r.rank_of(ChannelId::Tp), Some(4));
        assert_eq!(r.selected, [ChannelId::Redox]);
    }
}

#[test]
fn label_copy_survives_to_the_end() {
    let (mut cols, y) = separable_problem(600, 9);
    cols.insert(1, (ChannelId::Cl, y.iter().map(|&l| l as u8 as f64).collect()));
    let f = frame(cols, y.clone());
    let r = rfe(
        &CostModelSpec::forest().with_trees(30),
        &f,
        &y,
        RfeTarget::Keep(1),
        &CvSpec::default(),
    )
    .unwrap();
    assert_eq!(r.selected, [ChannelId::Cl]);
    assert_eq!(r.rank_of(ChannelId::Cl), Some(1));
    let mut ranks: Vec<usize> = r.ranking.iter().map(|&(_, k)| k).collect();
    ranks.sort_unstable();
    assert_eq!(ranks, (1..=5).collect::<Vec<_>>());
}

#[test]
fn keeping_every_feature_eliminates_nothing() {
    let (cols, y) = separable_problem(300, 2);
    let f = frame(cols, y.clone());
    let r = rfe(
        &CostModelSpec::logistic(),
        &f,
        &y,
        RfeTarget::Keep(4),
        &CvSpec::default(),
    )
    .unwrap();
    assert!(r.eliminated.is_empty());
    assert_eq!(r.selected.len(), 4);
    for bad in [0, 5] {
        assert!(matches!(
            rfe(
                &CostModelSpec::logistic(),
                &f,
                &y,
                RfeTarget::Keep(bad),
                &CvSpec::default()
            ),
            Err(Error::Argument(_))
        ));
    }
}

#[test]
fn scan_records_every_fold_for_every_size() {
    let (cols, y) = separable_problem(400, 3);
    let f = frame(cols, y.clone());
    let cv = CvSpec {
        k: 4,
        repeats: 2,
        seed: 0,
        ..CvSpec::default()
    };
    let r = rfe(&CostModelSpec::logistic(), &f, &y, RfeTarget::Scan, &cv).unwrap();
    assert_eq!(r.per_k_scores.keys().copied().collect::<Vec<_>>(), [1, 2, 3, 4]);
    assert!(r.per_k_scores.values().all(|v| v.len() == 8));
    assert!(!r.selected.is_empty() && r.selected.len() <= 4);
    let mut csv = Vec::new();
    r.write_scan_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 4 * 8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn discrete_mi_is_symmetric(pairs in prop::collection::vec((0usize..6, 0usize..4), 1..300)) {
        let (a, b): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let ab = discrete_mutual_information(&a, &b);
        let ba = discrete_mutual_information(&b, &a);
        prop_assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn mi_ignores_strictly_monotone_transforms(
        data in prop::collection::vec((-50.0f64..50.0, any::<bool>()), 2..400),
    ) {
        let (x, y): (Vec<f64>, Vec<bool>) = data.into_iter().unzip();
        let base = mutual_information(&x, &y).unwrap();
        let cubed: Vec<f64> = x.iter().map(|v| v.powi(3) + 2.0).collect();
        let exp_scaled: Vec<f64> = x.iter().map(|v| (v / 10.0).exp()).collect();
        prop_assert_eq!(equal_frequency_bins(&cubed, MI_BINS), equal_frequency_bins(&x, MI_BINS));
        prop_assert!((mutual_information(&cubed, &y).unwrap() - base).abs() < 1e-12);
        prop_assert!((mutual_information(&exp_scaled, &y).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn bins_match_rank_oracle(x in prop::collection::vec(prop_oneof![-5i32..5, -1000i32..1000], 1..300)) {
        let x: Vec<f64> = x.into_iter().map(f64::from).collect();
        prop_assert_eq!(equal_frequency_bins(&x, MI_BINS), rank_bins(&x));
    }
}

#[test]
fn matrix_path_agrees_with_frame_path() {
    let (cols, y) = separable_problem(500, 4);
    let f = frame(cols, y.clone());
    let x: Matrix<f64> = f.feature_matrix();
    for (j, s) in f.channels().iter().enumerate() {
        let direct = mutual_information(&x.column(j), &y).unwrap();
        let from_frame = mutual_information_scores(&f, &y).unwrap();
        let listed = from_frame.iter().find(|fs| fs.channel == *s).unwrap().score;
        assert_eq!(direct, listed);
    }
}
