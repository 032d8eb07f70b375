//! Lambda grid, stratified folds and nested cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lasso::{present_classes, validate_lambda, Standardized};
use super::{fit_lasso, fit_lasso_path, predict, FeatureTable, ScoreClass, Target};
use crate::error::{Error, Result};

/// Smallest lambda that zeroes every weight of every one-vs-rest model.
pub fn lambda_max(table: &FeatureTable, target: Target) -> Result<f64> {
    let labels = table.labels(target);
    let d = Standardized::new(&table.rows, table.columns.len())?;
    let n = d.n as f64;
    let mut best: f64 = 0.0;
    for c in present_classes(labels) {
        let y: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l == c))).collect();
        let ybar = y.iter().sum::<f64>() / n;
        for col in &d.cols {
            let g = col.iter().zip(&y).map(|(z, y)| z * (y - ybar)).sum::<f64>() / n;
            best = best.max(g.abs());
        }
    }
    Ok(best)
}

/// `n_points` values log-spaced from `lambda_max` down to `min_ratio · lambda_max`,
/// largest first.
pub fn lambda_grid(
    table: &FeatureTable,
    target: Target,
    n_points: usize,
    min_ratio: f64,
) -> Result<Vec<f64>> {
    if n_points == 0 {
        return Err(Error::InvalidParameter("lambda grid needs at least one point".into()));
    }
    if !(min_ratio > 0.0 && min_ratio <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda grid ratio must lie in (0, 1], got {min_ratio}"
        )));
    }
    let top = lambda_max(table, target)?;
    if top == 0.0 || n_points == 1 {
        return Ok(vec![top]);
    }
    let step = min_ratio.ln() / (n_points - 1) as f64;
    Ok((0..n_points).map(|i| top * (step * i as f64).exp()).collect())
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin,
/// the dealing position carrying over from one class to the next.
pub fn assign_folds(labels: &[ScoreClass], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; labels.len()];
    let mut next = 0;
    for c in ScoreClass::ALL {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            folds[i] = next % k;
            next += 1;
        }
    }
    folds
}

fn split(folds: &[usize], f: usize) -> (Vec<usize>, Vec<usize>) {
    (0..folds.len()).partition(|&i| folds[i] != f)
}

fn accuracy_on(models: &[super::SparseLinearModel], table: &FeatureTable, target: Target) -> Result<Vec<usize>> {
    let labels = table.labels(target);
    models
        .iter()
        .map(|m| {
            let mut hits = 0;
            for (row, &l) in table.rows.iter().zip(labels) {
                if predict(m, row)?.class == l {
                    hits += 1;
                }
            }
            Ok(hits)
        })
        .collect()
}

fn min_present_count(table: &FeatureTable, target: Target) -> usize {
    table
        .class_counts(target)
        .into_iter()
        .filter(|&c| c > 0)
        .min()
        .unwrap_or(0)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty lambda grid".into()));
    }
    grid.iter().try_for_each(|&l| validate_lambda(l))
}

/// Picks the lambda with the best mean inner validation accuracy; ties go
/// to the larger lambda. Returns the choice and the accuracy per grid point.
///
/// The inner fold count is `min(k, smallest class size)`. When that drops
/// below 2 the choice falls back to training accuracy.
pub fn select_lambda(
    table: &FeatureTable,
    target: Target,
    grid: &[f64],
    k: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    check_grid(grid)?;
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));
    let sorted: Vec<f64> = order.iter().map(|&i| grid[i]).collect();

    let inner_k = k.min(min_present_count(table, target));
    let mut scores = vec![0.0; grid.len()];
    if inner_k < 2 {
        let hits = accuracy_on(&fit_lasso_path(table, target, &sorted)?, table, target)?;
        for (pos, h) in hits.into_iter().enumerate() {
            scores[order[pos]] = h as f64 / table.len() as f64;
        }
    } else {
        let folds = assign_folds(table.labels(target), inner_k, seed);
        let per_fold: Vec<Vec<f64>> = (0..inner_k)
            .into_par_iter()
            .map(|f| {
                let (tr, va) = split(&folds, f);
                let val = table.subset(&va);
                let models = fit_lasso_path(&table.subset(&tr), target, &sorted)?;
                Ok(accuracy_on(&models, &val, target)?
                    .into_iter()
                    .map(|h| h as f64 / val.len() as f64)
                    .collect())
            })
            .collect::<Result<_>>()?;
        for (pos, &gi) in order.iter().enumerate() {
            scores[gi] = per_fold.iter().map(|a| a[pos]).sum::<f64>() / inner_k as f64;
        }
    }
    let mut best = order[0];
    for &gi in &order[1..] {
        if scores[gi] > scores[best] {
            best = gi;
        }
    }
    Ok((grid[best], scores))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub target: Target,
    pub k: usize,
    pub accuracy: f64,
    /// `confusion[true][predicted]`, classes ordered low, medium, high.
    pub confusion: [[usize; 3]; 3],
    /// Lambda chosen by cross-validation on the full table.
    pub selected_lambda: f64,
    pub fold_accuracies: Vec<f64>,
    pub fold_lambdas: Vec<f64>,
    pub lambda_grid: Vec<f64>,
}

/// Nested stratified k-fold evaluation: lambda is tuned inside each outer
/// training split, and the held-out fold is scored with a refit at that lambda.
pub fn cross_validate(
    table: &FeatureTable,
    target: Target,
    grid: &[f64],
    k: usize,
    seed: u64,
) -> Result<CvReport> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k must be at least 2, got {k}")));
    }
    check_grid(grid)?;
    let counts = table.class_counts(target);
    for c in ScoreClass::ALL {
        let count = counts[c.index()];
        if count > 0 && count < k {
            return Err(Error::ClassTooSmall {
                class: c.name().to_string(),
                count,
                k,
            });
        }
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::Degenerate(format!(
            "{target} labels contain a single class; nothing to discriminate"
        )));
    }

    let labels = table.labels(target);
    let folds = assign_folds(labels, k, seed);
    let outer: Vec<(f64, Vec<(ScoreClass, ScoreClass)>)> = (0..k)
        .into_par_iter()
        .map(|f| {
            let (tr, te) = split(&folds, f);
            let train = table.subset(&tr);
            let inner_seed = seed ^ (f as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let (lambda, _) = select_lambda(&train, target, grid, k, inner_seed)?;
            let model = fit_lasso(&train, target, lambda)?;
            let pairs = te
                .iter()
                .map(|&i| Ok((labels[i], predict(&model, &table.rows[i])?.class)))
                .collect::<Result<Vec<_>>>()?;
            Ok((lambda, pairs))
        })
        .collect::<Result<_>>()?;

    let mut confusion = [[0usize; 3]; 3];
    let mut fold_accuracies = Vec::with_capacity(k);
    let mut fold_lambdas = Vec::with_capacity(k);
    for (lambda, pairs) in &outer {
        let hits = pairs.iter().filter(|(t, p)| t == p).count();
        for (t, p) in pairs {
            confusion[t.index()][p.index()] += 1;
        }
        fold_accuracies.push(hits as f64 / pairs.len() as f64);
        fold_lambdas.push(*lambda);
    }
    let correct: usize = (0..3).map(|i| confusion[i][i]).sum();
    let (selected_lambda, _) = select_lambda(table, target, grid, k, seed)?;
    Ok(CvReport {
        target,
        k,
        accuracy: correct as f64 / table.len() as f64,
        confusion,
        selected_lambda,
        fold_accuracies,
        fold_lambdas,
        lambda_grid: grid.to_vec(),
    })
}
