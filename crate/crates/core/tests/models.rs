use aquanomaly::evaluation::confusion;
use aquanomaly::models::{
    balanced_weights, predict, total_cost, ClassWeights, CostMatrix, CostModelSpec, FittedModel, Learner,
    LogisticParams, SvmParams, TrainedClassifier, Weighting,
};
use aquanomaly::{Error, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("f{i}")).collect()
}

fn column(xs: &[f64]) -> Matrix<f64> {
    Matrix::from_vec(xs.len(), 1, xs.to_vec()).unwrap()
}

fn logistic(lambda: f64, w_pos: f64) -> CostModelSpec {
    CostModelSpec {
        learner: Learner::Logistic(LogisticParams {
            lambda,
            ..LogisticParams::default()
        }),
        weights: Weighting::Fixed(ClassWeights::new(1.0, w_pos).unwrap()),
        seed: 0,
    }
}

fn svm(params: SvmParams, w_pos: f64) -> CostModelSpec {
    CostModelSpec {
        learner: Learner::LinearSvm(params),
        weights: Weighting::Fixed(ClassWeights::new(1.0, w_pos).unwrap()),
        seed: 0,
    }
}

fn population_zscore(xs: &[f64]) -> Vec<f64> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    xs.iter().map(|v| (v - mean) / sd).collect()
}

/// Minimizes a 2-parameter function by repeatedly refining a grid around the best cell.
fn grid_minimize(f: impl Fn(f64, f64) -> f64, mut centre: (f64, f64), mut half: f64) -> (f64, f64) {
    for _ in 0..12 {
        let mut best = (f64::INFINITY, centre);
        for i in -40..=40 {
            for j in -40..=40 {
                let p = (centre.0 + half * i as f64 / 40.0, centre.1 + half * j as f64 / 40.0);
                let v = f(p.0, p.1);
                if v < best.0 {
                    best = (v, p);
                }
            }
        }
        centre = best.1;
        half /= 8.0;
    }
    centre
}

/// Weighted logistic objective in standardized coordinates, for one feature.
fn logistic_loss(z: &[f64], y: &[bool], w_pos: f64, lambda: f64, beta: f64, b: f64) -> f64 {
    let n = z.len() as f64;
    let data: f64 = z
        .iter()
        .zip(y)
        .map(|(&zi, &yi)| {
            let (w, s) = if yi { (w_pos, 1.0) } else { (1.0, -1.0) };
            w * (1.0 + (-s * (beta * zi + b)).exp()).ln()
        })
        .sum();
    data / n + lambda * beta * beta / 2.0
}

/// Weighted hinge objective in standardized coordinates, for one feature.
fn hinge_loss(z: &[f64], y: &[bool], w_pos: f64, lambda: f64, beta: f64, b: f64) -> f64 {
    let n = z.len() as f64;
    let data: f64 = z
        .iter()
        .zip(y)
        .map(|(&zi, &yi)| {
            let (w, s) = if yi { (w_pos, 1.0) } else { (1.0, -1.0) };
            w * (1.0 - s * (beta * zi + b)).max(0.0)
        })
        .sum();
    data / n + lambda * beta * beta / 2.0
}

/// Root of the model's decision function on a 1-D input, by bisection.
fn boundary(model: &TrainedClassifier<f64>, mut lo: f64, mut hi: f64) -> f64 {
    let f = |x: f64| model.score_row(&[x]);
    assert!(f(lo).signum() != f(hi).signum(), "no sign change in [{lo}, {hi}]");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid).signum() == f(lo).signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn sensitivity(model: &TrainedClassifier<f64>, x: &Matrix<f64>, y: &[bool]) -> f64 {
    let c = confusion(&predict(model, x).unwrap(), y).unwrap();
    c.tp as f64 / (c.tp + c.fn_) as f64
}

/// Overlapping 2-D clouds with a 10:1 imbalance.
fn imbalanced_cloud(seed: u64) -> (Matrix<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let shift = rng.gen_range(0.8..2.0);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..220 {
        let pos = i % 11 == 0;
        let c = if pos { shift } else { 0.0 };
        rows.push(vec![c + noise.sample(&mut rng), 0.5 * c + noise.sample(&mut rng)]);
        y.push(pos);
    }
    (Matrix::from_rows(&rows, 2).unwrap(), y)
}

#[test]
fn tripling_positive_weight_flips_ambiguous_midpoint() {
    let xs = [-1.0, 0.0, 1.0];
    let y = [false, false, true];
    let z = population_zscore(&xs);
    let lambda = 1.0;
    let mut decisions = Vec::new();
    for w_pos in [1.0, 3.0] {
        let model = logistic(lambda, w_pos).fit(&column(&xs), &y, &names(1)).unwrap();
        let (beta, b) = grid_minimize(|bt, bb| logistic_loss(&z, &y, w_pos, lambda, bt, bb), (0.0, 0.0), 8.0);
        // The midpoint standardizes to 0, so its decision value is the intercept.
        let got = model.score_row(&[0.0]);
        assert!(
            (got - b).abs() < 1e-4,
            "w_pos {w_pos}: model {got}, oracle {b} (beta {beta})"
        );
        decisions.push(model.predict_row(&[0.0]));
    }
    assert_eq!(decisions, [false, true]);
}

#[test]
fn symmetric_pair_puts_linear_boundaries_at_zero() {
    let x = column(&[-1.0, 1.0]);
    let y = [false, true];
    for spec in [CostModelSpec::logistic(), CostModelSpec::linear_svm()] {
        let m = spec.fit(&x, &y, &names(1)).unwrap();
        assert_eq!(predict(&m, &x).unwrap(), y);
        for v in [0.1, 0.5, 3.0] {
            assert!(m.predict_row(&[v]));
            assert!(!m.predict_row(&[-v]));
        }
        assert!(m.score_row(&[0.0]).abs() < 1e-9);
    }
}

#[test]
fn zero_iterations_predict_negative_everywhere() {
    let spec = svm(
        SvmParams {
            iterations: 0,
            ..SvmParams::default()
        },
        1.0,
    );
    let m = spec.fit(&column(&[-1.0, 1.0]), &[false, true], &names(1)).unwrap();
    let FittedModel::Linear(lin) = &m.model else {
        unreachable!()
    };
    assert_eq!(lin.coef, [0.0]);
    assert_eq!(lin.intercept, 0.0);
    assert!([-5.0, 0.0, 5.0].iter().all(|&v| !m.predict_row(&[v])));
}

#[test]
fn svm_reaches_weighted_hinge_optimum_and_boundary_moves_to_majority() {
    // Majority on the left, a few positives overlapping its right edge.
    let mut xs: Vec<f64> = (0..40).map(|i| i as f64 / 10.0).collect();
    xs.extend([3.0, 3.5, 4.2, 4.8, 5.5]);
    let y: Vec<bool> = (0..xs.len()).map(|i| i >= 40).collect();
    let z = population_zscore(&xs);
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let sd = (xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
    let params = SvmParams {
        lambda: 0.03,
        iterations: 100_000,
        t0: 1.0,
    };

    let mut previous = (f64::INFINITY, f64::INFINITY);
    let mut previous_sensitivity = 0.0;
    for w_pos in [1.0, 3.0, 9.0] {
        let model = svm(params, w_pos).fit(&column(&xs), &y, &names(1)).unwrap();
        let FittedModel::Linear(lin) = &model.model else {
            unreachable!()
        };
        let got = boundary(&model, -10.0, 20.0);
        // Sweep boundary positions c; for each, the best slope with b = −βc.
        let objective = |c: f64, beta: f64| hinge_loss(&z, &y, w_pos, params.lambda, beta, -beta * c);
        let (c, beta) = grid_minimize(objective, (0.0, 2.0), 4.0);
        let optimum = objective(c, beta);
        // The hinge optimum can be flat along the boundary, so compare objective values.
        let reached = hinge_loss(&z, &y, w_pos, params.lambda, lin.coef[0], lin.intercept);
        assert!(
            reached - optimum < 1e-3 * optimum,
            "w_pos {w_pos}: {reached} vs {optimum}"
        );
        let expected = mean + sd * c;
        assert!(
            got < previous.0 && expected < previous.1,
            "w_pos {w_pos}: {got}, oracle {expected}"
        );
        let sens = sensitivity(&model, &column(&xs), &y);
        assert!(sens >= previous_sensitivity);
        previous = (got, expected);
        previous_sensitivity = sens;
    }
    assert_eq!(previous_sensitivity, 1.0);
}

#[test]
fn raising_positive_weight_never_lowers_training_sensitivity() {
    for seed in 0..10 {
        let (x, y) = imbalanced_cloud(seed);
        // Below w_pos ≈ 4 the hinge optimum on a 10:1 set is nearly the all-negative model,
        // whose few positive calls are sign noise; the check starts where positives count.
        for (base, grid) in [
            (CostModelSpec::logistic(), &[1.0, 2.0, 4.0, 8.0, 16.0, 32.0][..]),
            (CostModelSpec::linear_svm(), &[4.0, 8.0, 16.0, 32.0, 64.0][..]),
        ] {
            let mut last = 0.0;
            for &w_pos in grid {
                let spec = base.with_weights(Weighting::Fixed(ClassWeights::new(1.0, w_pos).unwrap()));
                let s = sensitivity(&spec.fit(&x, &y, &names(2)).unwrap(), &x, &y);
                assert!(
                    s >= last,
                    "seed {seed} {} w_pos {w_pos}: {s} < {last}",
                    base.learner.name()
                );
                last = s;
            }
        }
    }
}

#[test]
fn logistic_converges_to_a_stationary_point() {
    for seed in 0..5 {
        let (x, y) = imbalanced_cloud(100 + seed);
        let m = CostModelSpec::logistic().fit(&x, &y, &names(2)).unwrap();
        let FittedModel::Linear(lin) = &m.model else {
            unreachable!()
        };
        assert!(lin.gradient_norm.unwrap() <= 1e-6);
        // Recompute the weighted gradient from the fitted parameters.
        let n = x.rows() as f64;
        let lambda = LogisticParams::default().lambda;
        let mut grad = [0.0; 3];
        for (row, &label) in x.row_iter().zip(&y) {
            let z: Vec<f64> = (0..2)
                .map(|j| (row[j] - lin.standardizer.mean[j]) / lin.standardizer.scale[j])
                .collect();
            let s = lin.intercept + lin.coef[0] * z[0] + lin.coef[1] * z[1];
            let r = m.weights.for_label(label) * (1.0 / (1.0 + (-s).exp()) - if label { 1.0 } else { 0.0 }) / n;
            grad[0] += r * z[0];
            grad[1] += r * z[1];
            grad[2] += r;
        }
        grad[0] += lambda * lin.coef[0];
        grad[1] += lambda * lin.coef[1];
        let norm = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        assert!(norm <= 1e-6, "seed {seed}: {norm}");
    }
}

#[test]
fn predictions_ignore_positive_feature_scaling() {
    let (x, y) = imbalanced_cloud(7);
    let (probe, _) = imbalanced_cloud(8);
    // Powers of two scale exactly, so every comparison is preserved bit for bit.
    for c in [0.25, 4.0, 1024.0] {
        let xs = x.map(|v| v * c);
        let ps = probe.map(|v| v * c);
        for spec in [
            CostModelSpec::logistic(),
            CostModelSpec::linear_svm(),
            CostModelSpec::forest().with_trees(25).with_seed(3),
        ] {
            let a = spec.fit(&x, &y, &names(2)).unwrap();
            let b = spec.fit(&xs, &y, &names(2)).unwrap();
            assert_eq!(
                predict(&a, &probe).unwrap(),
                predict(&b, &ps).unwrap(),
                "{} × {c}",
                spec.learner.name()
            );
        }
    }
    // Other constants agree on the training rows, away from floating-point ties.
    let xs = x.map(|v| v * 3.7);
    let a = CostModelSpec::forest().with_trees(25).fit(&x, &y, &names(2)).unwrap();
    let b = CostModelSpec::forest().with_trees(25).fit(&xs, &y, &names(2)).unwrap();
    assert_eq!(predict(&a, &x).unwrap(), predict(&b, &xs).unwrap());
}

#[test]
fn label_feature_gives_perfect_forest() {
    let (x, y) = imbalanced_cloud(11);
    let rows: Vec<Vec<f64>> = x
        .row_iter()
        .zip(&y)
        .map(|(r, &l)| vec![r[0], if l { 1.0 } else { 0.0 }, r[1]])
        .collect();
    let x = Matrix::from_rows(&rows, 3).unwrap();
    let m = CostModelSpec::forest().with_trees(50).fit(&x, &y, &names(3)).unwrap();
    assert_eq!(predict(&m, &x).unwrap(), y);
    let imp = m.feature_importances();
    assert!(imp[1] > imp[0] && imp[1] > imp[2], "{imp:?}");
    let positive = y.iter().position(|&l| l).unwrap();
    assert!(predict(&m, &x.select_rows(&[positive])).unwrap()[0]);
}

#[test]
fn single_sample_forest_is_all_leaves() {
    for label in [false, true] {
        let m = CostModelSpec::forest()
            .with_trees(20)
            .fit(&column(&[2.5]), &[label], &names(1))
            .unwrap();
        let FittedModel::Forest(f) = &m.model else {
            unreachable!()
        };
        assert!(f.trees.iter().all(|t| t.is_single_leaf()));
        assert!(f.trees.iter().all(|t| t.predict_row(&[-100.0]) == label));
        assert_eq!(m.predict_row(&[9.0]), label);
    }
}

#[test]
fn one_tree_forest_votes_like_its_tree() {
    let (x, y) = imbalanced_cloud(12);
    let (probe, _) = imbalanced_cloud(13);
    let m = CostModelSpec::forest().with_trees(1).fit(&x, &y, &names(2)).unwrap();
    let FittedModel::Forest(f) = &m.model else {
        unreachable!()
    };
    for r in probe.row_iter() {
        assert_eq!(m.predict_row(r), f.trees[0].predict_row(r));
    }
}

#[test]
fn learners_are_deterministic_and_seed_sensitive() {
    let (x, y) = imbalanced_cloud(14);
    let (probe, _) = imbalanced_cloud(15);
    for spec in [
        CostModelSpec::logistic(),
        CostModelSpec::linear_svm(),
        CostModelSpec::forest().with_trees(40).with_seed(5),
    ] {
        let a = spec.fit(&x, &y, &names(2)).unwrap();
        let b = spec.fit(&x, &y, &names(2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(predict(&a, &probe).unwrap(), predict(&b, &probe).unwrap());
    }
    let a = CostModelSpec::forest()
        .with_trees(40)
        .with_seed(5)
        .fit(&x, &y, &names(2))
        .unwrap();
    let b = CostModelSpec::forest()
        .with_trees(40)
        .with_seed(6)
        .fit(&x, &y, &names(2))
        .unwrap();
    assert_ne!(a.model, b.model);
}

#[test]
fn persisted_models_reload_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = imbalanced_cloud(16);
    for spec in [
        CostModelSpec::logistic(),
        CostModelSpec::linear_svm(),
        CostModelSpec::forest().with_trees(10),
    ] {
        let m = spec.fit(&x, &y, &names(2)).unwrap();
        let path = dir.path().join(format!("{}.json", spec.learner.name()));
        m.save(&path).unwrap();
        let back = TrainedClassifier::<f64>::load(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.identifier(), m.identifier());
        assert!(matches!(
            TrainedClassifier::<f32>::load(&path),
            Err(Error::ModelFormat(_))
        ));
        let bumped = m
            .to_json()
            .unwrap()
            .replacen("\"format_version\":1", "\"format_version\":99", 1);
        assert!(matches!(
            TrainedClassifier::<f64>::from_json(&bumped),
            Err(Error::ModelFormat(_))
        ));
    }
}

#[test]
fn prediction_contract() {
    let (x, y) = imbalanced_cloud(17);
    let m = CostModelSpec::logistic().fit(&x, &y, &names(2)).unwrap();
    assert!(predict(&m, &Matrix::zeros(0, 2)).unwrap().is_empty());
    assert!(matches!(
        predict(&m, &Matrix::zeros(3, 5)),
        Err(Error::Shape { expected: 2, got: 5 })
    ));
    for spec in [CostModelSpec::logistic(), CostModelSpec::linear_svm()] {
        assert!(matches!(
            spec.fit(&x, &vec![false; 220], &names(2)),
            Err(Error::DegenerateLabels)
        ));
    }
    let mut bad = x.clone();
    bad.set(4, 1, f64::NAN);
    assert!(matches!(
        CostModelSpec::logistic().fit(&bad, &y, &names(2)),
        Err(Error::NonFinite(_))
    ));
}

#[test]
fn weights_and_costs() {
    let mut labels = vec![false; 90];
    labels.extend([true; 10]);
    let w = balanced_weights(&labels).unwrap();
    assert!((w.w_neg - 0.5556).abs() < 1e-4 && (w.w_pos - 5.0).abs() < 1e-12);
    assert!(matches!(balanced_weights(&[true, true]), Err(Error::DegenerateLabels)));

    let cm = CostMatrix::new(5.0, 1.0).unwrap();
    let cw = cm.class_weights().unwrap();
    assert!((cw.w_pos / cw.w_neg - 5.0).abs() < 1e-12);
    let truth = [true, true, false, false, false, true, true];
    let pred = [false, false, true, true, true, true, true];
    let counts = confusion(&pred, &truth).unwrap();
    assert_eq!(total_cost(&counts, &cm), 13.0);
    assert_eq!(total_cost(&confusion(&truth, &truth).unwrap(), &cm), 0.0);
}
