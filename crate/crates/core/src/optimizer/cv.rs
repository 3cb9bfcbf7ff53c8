//! k-fold cross-validated grid search over `(alpha, beta, rank)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{apsd_fit, TrainSet};
use crate::data::Hyperparams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvGrid {
    pub folds: usize,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub ranks: Vec<usize>,
}

impl Default for CvGrid {
    fn default() -> Self {
        CvGrid {
            folds: 5,
            alphas: vec![1e-4, 1e-3, 1e-2],
            betas: vec![0.0, 1e-4, 1e-3],
            ranks: vec![1, 2, 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub alpha: f64,
    pub beta: f64,
    pub rank: usize,
    /// Mean squared block-density error on held-out folds.
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub best: Hyperparams,
    /// Every evaluated grid point, in grid order (alpha-major, then beta, then rank).
    pub scores: Vec<CvScore>,
}

fn held_out_mse(train: &TrainSet, val: &TrainSet, hp: &Hyperparams) -> Result<f64> {
    let w = apsd_fit(train, hp)?.weights;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (x, d) in val.features().iter().zip(val.densities()) {
        for (j, dj) in d.iter().enumerate() {
            let p: f64 = w.column(j).iter().zip(x.block(j)).map(|(a, b)| a * b).sum();
            sum += (p - dj).powi(2);
            n += 1;
        }
    }
    Ok(sum / n as f64)
}

/// Contiguous folds; the first `N mod folds` folds get one extra frame.
fn fold_ranges(n: usize, folds: usize) -> Vec<std::ops::Range<usize>> {
    let (base, extra) = (n / folds, n % folds);
    let mut start = 0;
    (0..folds)
        .map(|f| {
            let len = base + usize::from(f < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Scores every grid point with k-fold cross-validation and returns `base` with the best
/// `(alpha, beta, rank)` substituted. Ranks above `min(K, J)` are skipped. Ties go to the
/// earliest grid point.
pub fn cross_validate(train: &TrainSet, base: &Hyperparams, grid: &CvGrid) -> Result<CvOutcome> {
    if grid.folds < 2 || grid.folds > train.len() {
        return Err(Error::invalid(format!(
            "cross-validation needs 2 <= folds <= N = {}, got {}",
            train.len(),
            grid.folds
        )));
    }
    let max_rank = train.dim().min(train.num_blocks());
    let points: Vec<(f64, f64, usize)> = grid
        .alphas
        .iter()
        .flat_map(|&a| {
            grid.betas.iter().flat_map(move |&b| {
                grid.ranks
                    .iter()
                    .filter(move |&&r| r >= 1 && r <= max_rank)
                    .map(move |&r| (a, b, r))
            })
        })
        .collect();
    if points.is_empty() {
        return Err(Error::invalid("cross-validation grid is empty"));
    }

    let folds = fold_ranges(train.len(), grid.folds);
    let splits: Vec<(TrainSet, TrainSet)> = folds
        .iter()
        .map(|val| {
            let tr: Vec<usize> = (0..train.len()).filter(|i| !val.contains(i)).collect();
            let va: Vec<usize> = val.clone().collect();
            Ok((train.subset(&tr)?, train.subset(&va)?))
        })
        .collect::<Result<_>>()?;

    let scores: Vec<CvScore> = points
        .par_iter()
        .map(|&(alpha, beta, rank)| {
            let hp = Hyperparams {
                alpha,
                beta,
                rank,
                ..base.clone()
            };
            let total = splits
                .iter()
                .map(|(tr, va)| held_out_mse(tr, va, &hp))
                .sum::<Result<f64>>()?;
            Ok(CvScore {
                alpha,
                beta,
                rank,
                mse: total / splits.len() as f64,
            })
        })
        .collect::<Result<_>>()?;

    let best = scores
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.mse.total_cmp(&b.mse).then(i.cmp(j)))
        .map(|(_, s)| s)
        .unwrap();
    Ok(CvOutcome {
        best: Hyperparams {
            alpha: best.alpha,
            beta: best.beta,
            rank: best.rank,
            ..base.clone()
        },
        scores,
    })
}
