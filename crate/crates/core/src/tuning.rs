//! K-fold cross-validation of the Gaussian bandwidth `γ` and ridge `λ`.
//!
//! For every grid cell and fold, KRR coefficients `α = (K_tt + λI)⁻¹ε_t`
//! are fitted on the training part and the held-out residuals are predicted
//! through the cross-kernel. The ridge is not scaled by the training size
//! here; the chosen `λ` enters the statistics as `K + nλI`. The score of a
//! cell is the held-out squared error summed over folds and residual
//! components, divided by `n`.
//! Selection follows the one-standard-error rule: among cells scoring within
//! one fold standard error of the best, the largest `λ` wins, then the
//! smallest `γ`.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::sig17;
use crate::kernels::{kernel_matrix, median_heuristic, KernelConfig};
use crate::seeds::rng_from_seed;

/// Multipliers of the median-heuristic bandwidth in the default grid.
pub const DEFAULT_GAMMA_FACTORS: [f64; 13] = [
    1.0 / 64.0,
    1.0 / 32.0,
    1.0 / 16.0,
    0.125,
    0.25,
    0.5,
    1.0,
    2.0,
    4.0,
    8.0,
    16.0,
    32.0,
    64.0,
];
pub const DEFAULT_LAMBDAS: [f64; 7] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0];
pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneGrid {
    pub gamma_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

fn check_axis(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::input(format!("{name} grid is empty")));
    }
    if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::input(format!("{name} grid must be positive and finite")));
    }
    if v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::input(format!("{name} grid must be strictly ascending")));
    }
    Ok(())
}

impl TuneGrid {
    pub fn new(gamma_grid: Vec<f64>, lambda_grid: Vec<f64>, folds: usize, seed: u64) -> Result<Self> {
        check_axis("gamma", &gamma_grid)?;
        check_axis("lambda", &lambda_grid)?;
        if folds < 2 {
            return Err(Error::input("cross-validation needs at least two folds"));
        }
        Ok(Self {
            gamma_grid,
            lambda_grid,
            folds,
            seed,
        })
    }

    /// Fold label of each observation: a seeded shuffle of `0..n` dealt
    /// round-robin, so fold sizes differ by at most one.
    pub fn fold_assignment(&self, n: usize) -> Result<Vec<usize>> {
        if n < self.folds {
            return Err(Error::input(format!("{n} observations cannot fill {} folds", self.folds)));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_from_seed(self.seed));
        let mut fold = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            fold[i] = pos % self.folds;
        }
        Ok(fold)
    }
}

/// Median-heuristic bandwidth times {1/64, 1/32, …, 64}, `λ ∈ {1e−4, …, 1}`, 5 folds.
pub fn default_grid(x: &DMatrix<f64>, seed: u64) -> Result<TuneGrid> {
    let g = median_heuristic(x)?;
    TuneGrid::new(
        DEFAULT_GAMMA_FACTORS.iter().map(|f| f * g).collect(),
        DEFAULT_LAMBDAS.to_vec(),
        DEFAULT_FOLDS,
        seed,
    )
}

/// Held-out error of one (γ, λ, fold) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub gamma: f64,
    pub lambda: f64,
    pub fold: usize,
    pub sse: f64,
    pub n_holdout: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub gamma: f64,
    pub lambda: f64,
    /// Mean held-out squared error of the chosen cell.
    pub cv_error: f64,
    pub folds: usize,
    pub cv_table: Vec<CvCell>,
}

impl TuneResult {
    /// Mean held-out squared error of a grid pair.
    pub fn score(&self, gamma: f64, lambda: f64) -> Option<f64> {
        let cells: Vec<&CvCell> = self
            .cv_table
            .iter()
            .filter(|c| c.gamma == gamma && c.lambda == lambda)
            .collect();
        if cells.is_empty() {
            return None;
        }
        let n: usize = cells.iter().map(|c| c.n_holdout).sum();
        Some(cells.iter().map(|c| c.sse).sum::<f64>() / n as f64)
    }
}

pub fn tune(x: &DMatrix<f64>, eps: &DMatrix<f64>, grid: &TuneGrid) -> Result<TuneResult> {
    let folds = grid.fold_assignment(x.nrows())?;
    tune_with_folds(x, eps, grid, &folds)
}

/// [`tune`] with an explicit fold label per observation.
pub fn tune_with_folds(
    x: &DMatrix<f64>,
    eps: &DMatrix<f64>,
    grid: &TuneGrid,
    fold_of: &[usize],
) -> Result<TuneResult> {
    let n = x.nrows();
    if eps.nrows() != n || fold_of.len() != n {
        return Err(Error::input("covariates, residuals and fold labels disagree on n"));
    }
    if eps.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("residuals contain non-finite values"));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); grid.folds];
    for (i, &f) in fold_of.iter().enumerate() {
        if f >= grid.folds {
            return Err(Error::input(format!("fold label {f} out of range")));
        }
        members[f].push(i);
    }
    if let Some((f, m)) = members.iter().enumerate().find(|(_, m)| m.len() < 2) {
        return Err(Error::input(format!(
            "fold {f} has {} observation(s); every fold needs at least two",
            m.len()
        )));
    }
    let complements: Vec<Vec<usize>> = members
        .iter()
        .map(|hold| {
            let mut in_hold = vec![false; n];
            hold.iter().for_each(|&i| in_hold[i] = true);
            (0..n).filter(|&i| !in_hold[i]).collect()
        })
        .collect();

    let per_gamma = grid
        .gamma_grid
        .par_iter()
        .map(|&gamma| -> Result<Vec<CvCell>> {
            let k = kernel_matrix(&KernelConfig::gaussian(gamma)?, x)?;
            let mut cells = Vec::with_capacity(grid.lambda_grid.len() * grid.folds);
            let mut by_fold = Vec::with_capacity(grid.folds);
            for (hold, train) in members.iter().zip(&complements) {
                let k_tt = k.select_rows(train).select_columns(train);
                let k_ht = k.select_rows(hold).select_columns(train);
                let e_t = eps.select_rows(train);
                let e_h = eps.select_rows(hold);
                by_fold.push((k_tt, k_ht, e_t, e_h));
            }
            for &lambda in &grid.lambda_grid {
                for (f, (k_tt, k_ht, e_t, e_h)) in by_fold.iter().enumerate() {
                    let nt = k_tt.nrows();
                    let mut a = k_tt.clone();
                    for i in 0..nt {
                        a[(i, i)] += lambda;
                    }
                    let chol = a.cholesky().ok_or_else(|| {
                        Error::numerical(format!(
                            "K + nλI not positive definite in CV (γ = {gamma}, λ = {lambda})"
                        ))
                    })?;
                    let alpha = chol.solve(e_t);
                    let pred = k_ht * alpha;
                    cells.push(CvCell {
                        gamma,
                        lambda,
                        fold: f,
                        sse: (e_h - pred).norm_squared(),
                        n_holdout: e_h.nrows(),
                    });
                }
            }
            Ok(cells)
        })
        .collect::<Result<Vec<_>>>()?;
    let cv_table: Vec<CvCell> = per_gamma.into_iter().flatten().collect();

    let cells_of = |gamma: f64, lambda: f64| {
        cv_table.iter().filter(move |c| c.gamma == gamma && c.lambda == lambda)
    };
    let score_of = |gamma: f64, lambda: f64| cells_of(gamma, lambda).map(|c| c.sse).sum::<f64>() / n as f64;
    let mut min: Option<(f64, f64, f64)> = None;
    for &lambda in &grid.lambda_grid {
        for &gamma in &grid.gamma_grid {
            let score = score_of(gamma, lambda);
            if min.is_none_or(|(s, _, _)| score < s) {
                min = Some((score, gamma, lambda));
            }
        }
    }
    let (min_score, g0, l0) = min.expect("grids are nonempty");
    let fold_err: Vec<f64> = cells_of(g0, l0).map(|c| c.sse / c.n_holdout as f64).collect();
    let threshold = min_score + standard_error(&fold_err);

    // one-standard-error rule: the most regularised cell within one fold SE
    // of the minimum, scanning larger λ first, then smaller γ
    let mut best = None;
    'scan: for &lambda in grid.lambda_grid.iter().rev() {
        for &gamma in &grid.gamma_grid {
            let score = score_of(gamma, lambda);
            if score <= threshold {
                best = Some((score, gamma, lambda));
                break 'scan;
            }
        }
    }
    let (cv_error, gamma, lambda) = best.expect("grids are nonempty");
    Ok(TuneResult {
        gamma,
        lambda,
        cv_error,
        folds: grid.folds,
        cv_table,
    })
}

fn standard_error(v: &[f64]) -> f64 {
    let k = v.len() as f64;
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / k;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1.0);
    (var / k).sqrt()
}

/// CSV with columns `gamma, lambda, fold, sse, n_holdout`.
pub fn write_cv_table(path: &Path, cells: &[CvCell]) -> Result<()> {
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["gamma", "lambda", "fold", "sse", "n_holdout"]).map_err(io)?;
    for c in cells {
        w.write_record([
            sig17(c.gamma),
            sig17(c.lambda),
            c.fold.to_string(),
            sig17(c.sse),
            c.n_holdout.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
