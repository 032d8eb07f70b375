use jrnet::learn::{
    assign_folds, cross_validate, fit_lasso, lambda_grid, predict, ClassModel, FeatureTable,
    ScoreClass, SparseLinearModel, Target, MODEL_SCHEMA_VERSION,
};
use jrnet::Error;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const T: Target = Target::Valence;

fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("f{j}")).collect()
}

fn noise_rows(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..p).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

fn three_class_labels(n: usize) -> Vec<ScoreClass> {
    (0..n).map(|i| ScoreClass::ALL[i % 3]).collect()
}

/// Low/high problem where feature 0 separates the classes and two noise
/// features carry nothing.
fn separable(seed: u64) -> FeatureTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..40 {
        let high = i % 2 == 0;
        let mag = 0.5 + rng.random::<f64>();
        let x0 = if high { mag } else { -mag };
        rows.push(vec![x0, rng.sample(StandardNormal), rng.sample(StandardNormal)]);
        labels.push(if high { ScoreClass::High } else { ScoreClass::Low });
    }
    FeatureTable::with_labels(names(3), rows, labels).unwrap()
}

/// Mixed problem with signal on two columns and noise on the rest.
fn mixed(seed: u64, n: usize) -> FeatureTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = three_class_labels(n);
    let mut rows = noise_rows(&mut rng, n, 6);
    for (r, l) in rows.iter_mut().zip(&labels) {
        r[0] += l.index() as f64;
        r[1] -= 0.5 * l.index() as f64;
    }
    FeatureTable::with_labels(names(6), rows, labels).unwrap()
}

fn penalised_objective(z: &[f64], y: &[f64], b: f64, w: f64, lambda: f64) -> f64 {
    let n = z.len() as f64;
    let loss: f64 = z
        .iter()
        .zip(y)
        .map(|(zi, yi)| {
            let eta = b + w * zi;
            (1.0 + eta.exp()).ln() - yi * eta
        })
        .sum();
    loss / n + lambda * w.abs()
}

#[test]
fn separating_feature_matches_grid_oracle() {
    let table = separable(3);
    let lambda = 0.1;
    let model = fit_lasso(&table, T, lambda).unwrap();
    let high = model.class_model(ScoreClass::High).unwrap();
    assert!(high.weights[0] > 0.0);
    assert_eq!(high.weights[1], 0.0);
    assert_eq!(high.weights[2], 0.0);
    let low = model.class_model(ScoreClass::Low).unwrap();
    assert!(low.weights[0] < 0.0);
    assert!(model.class_model(ScoreClass::Medium).is_none());

    // independent standardisation of the separating column
    let x: Vec<f64> = table.rows.iter().map(|r| r[0]).collect();
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let z: Vec<f64> = x.iter().map(|v| (v - mean) / sd).collect();
    let y: Vec<f64> = table
        .valence
        .iter()
        .map(|&c| if c == ScoreClass::High { 1.0 } else { 0.0 })
        .collect();

    // coarse-to-fine grid over (b, w)
    let (mut cb, mut cw, mut span) = (0.0, 5.0, 5.0);
    for _ in 0..12 {
        let mut best = (f64::INFINITY, cb, cw);
        for a in -20..=20 {
            for c in -20..=20 {
                let b = cb + span * a as f64 / 20.0;
                let w = cw + span * c as f64 / 20.0;
                let f = penalised_objective(&z, &y, b, w, lambda);
                if f < best.0 {
                    best = (f, b, w);
                }
            }
        }
        cb = best.1;
        cw = best.2;
        span /= 4.0;
    }
    assert!((high.weights[0] - cw).abs() < 1e-3, "{} vs {cw}", high.weights[0]);
    assert!((high.intercept - cb).abs() < 1e-3, "{} vs {cb}", high.intercept);

    for (row, &label) in table.rows.iter().zip(&table.valence) {
        assert_eq!(predict(&model, row).unwrap().class, label);
    }
}

#[test]
fn huge_lambda_zeroes_weights_and_predicts_majority() {
    let mut table = mixed(1, 30);
    table.valence[0] = ScoreClass::High; // high is now the majority
    let model = fit_lasso(&table, T, 1e6).unwrap();
    assert_eq!(model.nonzero_weights(), 0);
    for row in &table.rows {
        assert_eq!(predict(&model, row).unwrap().class, ScoreClass::High);
    }
}

#[test]
fn lambda_max_is_the_zeroing_boundary() {
    let table = mixed(2, 45);
    let grid = lambda_grid(&table, T, 20, 1e-3).unwrap();
    assert_eq!(grid.len(), 20);
    assert!((grid[19] / grid[0] - 1e-3).abs() < 1e-12);
    assert!(grid.windows(2).all(|w| w[0] > w[1]));
    assert_eq!(fit_lasso(&table, T, grid[0]).unwrap().nonzero_weights(), 0);
    assert!(fit_lasso(&table, T, grid[0] * 0.95).unwrap().nonzero_weights() > 0);
}

#[test]
fn duplicated_rows_give_the_same_model() {
    let table = mixed(4, 30);
    let idx: Vec<usize> = (0..table.len()).flat_map(|i| [i, i]).collect();
    let doubled = table.subset(&idx);
    for lambda in [0.3, 0.05, 0.005] {
        let a = fit_lasso(&table, T, lambda).unwrap();
        let b = fit_lasso(&doubled, T, lambda).unwrap();
        for (ca, cb) in a.classes.iter().zip(&b.classes) {
            assert!((ca.intercept - cb.intercept).abs() < 1e-8);
            for (wa, wb) in ca.weights.iter().zip(&cb.weights) {
                assert!((wa - wb).abs() < 1e-8, "lambda {lambda}: {wa} vs {wb}");
            }
        }
    }
}

#[test]
fn sparsity_is_monotone_in_lambda() {
    for seed in 0..5 {
        let table = mixed(10 + seed, 36);
        let grid = lambda_grid(&table, T, 10, 1e-3).unwrap();
        let counts: Vec<usize> = grid
            .iter()
            .map(|&l| fit_lasso(&table, T, l).unwrap().nonzero_weights())
            .collect();
        assert!(
            counts.windows(2).all(|w| w[0] <= w[1]),
            "seed {seed}: {counts:?} over decreasing lambda"
        );
    }
}

#[test]
fn column_scaling_leaves_predictions_unchanged() {
    let table = mixed(5, 30);
    let mut scaled = table.clone();
    for r in scaled.rows.iter_mut() {
        r[0] *= 1000.0;
        r[3] *= 1e-3;
        r[4] *= 7.5;
    }
    let a = fit_lasso(&table, T, 0.02).unwrap();
    let b = fit_lasso(&scaled, T, 0.02).unwrap();
    for (ra, rb) in table.rows.iter().zip(&scaled.rows) {
        let pa = predict(&a, ra).unwrap();
        let pb = predict(&b, rb).unwrap();
        assert_eq!(pa.class, pb.class);
        for (sa, sb) in pa.scores.iter().zip(&pb.scores) {
            assert!((sa.1 - sb.1).abs() < 1e-8, "{sa:?} vs {sb:?}");
        }
    }
}

#[test]
fn refit_is_byte_identical() {
    let table = mixed(6, 30);
    let a = serde_json::to_string(&fit_lasso(&table, T, 0.01).unwrap()).unwrap();
    let b = serde_json::to_string(&fit_lasso(&table, T, 0.01).unwrap()).unwrap();
    assert_eq!(a, b);
}

fn intercept_model(intercepts: [f64; 3]) -> SparseLinearModel {
    SparseLinearModel {
        schema_version: MODEL_SCHEMA_VERSION,
        target: T,
        columns: names(2),
        lambda: 1.0,
        means: vec![0.0; 2],
        scales: vec![1.0; 2],
        classes: ScoreClass::ALL
            .iter()
            .zip(intercepts)
            .map(|(&class, intercept)| ClassModel {
                class,
                intercept,
                weights: vec![0.0; 2],
                sweeps: 0,
            })
            .collect(),
    }
}

#[test]
fn prediction_rules() {
    let m = intercept_model([0.1, 0.5, 0.2]);
    assert_eq!(predict(&m, &[3.0, -1.0]).unwrap().class, ScoreClass::Medium);
    let m = intercept_model([0.4, 0.1, 0.4]);
    assert_eq!(predict(&m, &[0.0, 0.0]).unwrap().class, ScoreClass::Low);
    assert!(matches!(predict(&m, &[0.0]), Err(Error::Schema(_))));

    let table = mixed(7, 30);
    let model = fit_lasso(&table, T, 0.01).unwrap();
    let mut shifted = model.clone();
    for c in shifted.classes.iter_mut() {
        c.intercept += 3.7;
    }
    for row in &table.rows {
        assert_eq!(predict(&model, row).unwrap().class, predict(&shifted, row).unwrap().class);
    }
}

#[test]
fn fit_errors() {
    let rows = vec![vec![1.0], vec![2.0], vec![3.0]];
    let single = FeatureTable::with_labels(names(1), rows.clone(), vec![ScoreClass::Low; 3]).unwrap();
    assert!(fit_lasso(&single, T, 0.1).is_err());
    let labels = vec![ScoreClass::Low, ScoreClass::High, ScoreClass::Low];
    let mut bad = FeatureTable::with_labels(names(1), rows, labels).unwrap();
    assert!(fit_lasso(&bad, T, -1.0).is_err());
    bad.rows[1][0] = f64::NAN;
    assert!(fit_lasso(&bad, T, 0.1).is_err());
}

#[test]
fn folds_are_stratified() {
    let labels = three_class_labels(61);
    let folds = assign_folds(&labels, 5, 9);
    for c in ScoreClass::ALL {
        let mut per = [0usize; 5];
        for (f, l) in folds.iter().zip(&labels) {
            if *l == c {
                per[*f] += 1;
            }
        }
        assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1, "{per:?}");
    }
    let mut sizes = [0usize; 5];
    folds.iter().for_each(|&f| sizes[f] += 1);
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    assert_eq!(folds, assign_folds(&labels, 5, 9));
}

#[test]
fn label_as_feature_is_classified_perfectly() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let labels = three_class_labels(45);
    let mut rows = noise_rows(&mut rng, 45, 4);
    for (r, l) in rows.iter_mut().zip(&labels) {
        r.push(l.index() as f64);
    }
    let table = FeatureTable::with_labels(names(5), rows, labels).unwrap();
    let grid = lambda_grid(&table, T, 20, 1e-3).unwrap();
    let report = cross_validate(&table, T, &grid, 5, 1).unwrap();
    assert_eq!(report.accuracy, 1.0);
    assert!(report.fold_accuracies.iter().all(|&a| a == 1.0));
    assert_eq!(report.confusion, [[15, 0, 0], [0, 15, 0], [0, 0, 15]]);
}

#[test]
fn permuted_labels_score_near_chance() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let rows = noise_rows(&mut rng, 60, 8);
        let mut labels = three_class_labels(60);
        labels.shuffle(&mut rng);
        let table = FeatureTable::with_labels(names(8), rows, labels).unwrap();
        let grid = lambda_grid(&table, T, 20, 1e-3).unwrap();
        let r = cross_validate(&table, T, &grid, 5, seed).unwrap();
        assert!((0.15..=0.55).contains(&r.accuracy), "seed {seed}: {}", r.accuracy);
        assert_eq!(r.confusion.iter().flatten().sum::<usize>(), 60);
    }
}

#[test]
fn small_class_is_rejected() {
    let mut labels = vec![ScoreClass::Low; 10];
    labels.extend(vec![ScoreClass::Medium; 4]);
    labels.extend(vec![ScoreClass::High; 10]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let table = FeatureTable::with_labels(names(2), noise_rows(&mut rng, 24, 2), labels).unwrap();
    match cross_validate(&table, T, &[0.1], 5, 0) {
        Err(Error::ClassTooSmall { class, count, k }) => {
            assert_eq!((class.as_str(), count, k), ("medium", 4, 5));
        }
        other => panic!("expected ClassTooSmall, got {other:?}"),
    }
    assert!(cross_validate(&table, T, &[0.1], 1, 0).is_err());
}

#[test]
fn cross_validation_is_deterministic() {
    let table = mixed(8, 30);
    let grid = lambda_grid(&table, T, 8, 1e-2).unwrap();
    let a = cross_validate(&table, T, &grid, 5, 3).unwrap();
    let b = cross_validate(&table, T, &grid, 5, 3).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert!(a.accuracy > 0.5, "signal columns should beat chance: {}", a.accuracy);
}
