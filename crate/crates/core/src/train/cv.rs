use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::objective::label_loss;
use super::optimize::train_full_batch;
use super::{TrainConfig, TrainingSet};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, tags, SeededRng};

/// `1e-5 * 2^i` for `i = 0..=4`.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..=4).map(|i| 1e-5 * f64::from(1u32 << i)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearch {
    pub grid: Vec<f64>,
    pub k_folds: usize,
}

impl Default for GridSearch {
    fn default() -> Self {
        Self {
            grid: default_lambda_grid(),
            k_folds: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_lambda: f64,
    /// `(lambda, mean validation label cross-entropy)` in grid order; empty
    /// when the grid had a single value.
    pub losses: Vec<(f64, f64)>,
}

/// Domain-stratified folds as `(train, validation)` position lists. Each
/// domain's positions are shuffled and dealt round-robin, the dealing pointer
/// carrying over from one domain to the next, so fold sizes and per-domain
/// fold counts each differ by at most one.
pub fn kfold_splits(domain_of: &[usize], k_folds: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let n = domain_of.len();
    if k_folds < 2 {
        return Err(Error::InvalidArgument("k_folds must be at least 2".into()));
    }
    if k_folds > n {
        return Err(Error::InvalidArgument(format!("k_folds={k_folds} exceeds the {n} instances")));
    }
    let n_domains = domain_of.iter().max().map_or(0, |m| m + 1);
    let mut fold_of = vec![0usize; n];
    let mut pointer = 0;
    for d in 0..n_domains {
        let mut pos: Vec<usize> = (0..n).filter(|&i| domain_of[i] == d).collect();
        SeededRng::new(derive_seed(seed, tags::FOLDS, d as u64)).shuffle(&mut pos);
        for i in pos {
            fold_of[i] = pointer % k_folds;
            pointer += 1;
        }
    }
    Ok((0..k_folds)
        .map(|f| (0..n).partition::<Vec<usize>, _>(|&i| fold_of[i] != f))
        .collect())
}

/// Picks the lambda with the lowest mean validation label cross-entropy over
/// `k_folds` folds (ties go to the smaller lambda).
pub fn grid_search_lambda(data: &TrainingSet, config: &TrainConfig, search: &GridSearch) -> Result<GridSearchResult> {
    let grid = &search.grid;
    if grid.is_empty() {
        return Err(Error::InvalidConfig("lambda grid is empty".into()));
    }
    if grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        return Err(Error::InvalidConfig("lambda grid values must be finite and >= 0".into()));
    }
    if grid.len() == 1 {
        return Ok(GridSearchResult {
            best_lambda: grid[0],
            losses: Vec::new(),
        });
    }
    let folds: Vec<(TrainingSet, TrainingSet)> = kfold_splits(&data.domain_of, search.k_folds, config.seed)?
        .into_iter()
        .map(|(tr, va)| (data.subset(&tr), data.subset(&va)))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..folds.len()).map(move |f| (g, f))).collect();
    let losses: Vec<f64> = jobs
        .par_iter()
        .map(|&(g, f)| {
            let (train, valid) = &folds[f];
            let trained = train_full_batch(train, &config.with_lambda(grid[g]))?;
            label_loss(&trained.model, valid)
        })
        .collect::<Result<_>>()?;
    let per_lambda: Vec<(f64, f64)> = grid
        .iter()
        .enumerate()
        .map(|(g, &l)| (l, losses[g * folds.len()..(g + 1) * folds.len()].iter().sum::<f64>() / folds.len() as f64))
        .collect();
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[a].total_cmp(&grid[b]));
    let mut best = order[0];
    for &i in &order[1..] {
        if per_lambda[i].1 < per_lambda[best].1 {
            best = i;
        }
    }
    Ok(GridSearchResult {
        best_lambda: per_lambda[best].0,
        losses: per_lambda,
    })
}
