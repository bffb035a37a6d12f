//! Gaussian kernel evaluation, kernel matrices and bandwidth heuristics.
//!
//! The kernel is `k(x, y) = exp(-γ‖x − y‖²)`; `γ` multiplies the *squared*
//! Euclidean distance. Kernel matrices are stored dense.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel family. Only the Gaussian kernel exists for now; new families
/// slot in as variants here and a branch in [`KernelConfig::eval_sq_dist`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    #[default]
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub family: KernelFamily,
    /// Inverse squared length-scale.
    pub gamma: f64,
}

impl KernelConfig {
    pub fn gaussian(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::input(format!("kernel gamma must be positive, got {gamma}")));
        }
        Ok(Self {
            family: KernelFamily::Gaussian,
            gamma,
        })
    }

    #[inline]
    pub fn eval_sq_dist(&self, sq_dist: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => (-self.gamma * sq_dist).exp(),
        }
    }
}

pub fn kernel_eval(cfg: &KernelConfig, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::input(format!(
            "kernel arguments have dimensions {} and {}",
            x.len(),
            y.len()
        )));
    }
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(cfg.eval_sq_dist(sq))
}

fn check_finite(name: &str, m: &DMatrix<f64>) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::input(format!(
                    "{name} has a non-finite entry at row {}, column {}",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    Ok(())
}

/// Squared distances between rows of `a` and rows of `b`, accumulated column
/// by column so that every caller sums in the same order.
fn sq_distances(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), b.nrows());
    for l in 0..a.ncols() {
        let ac = a.column(l);
        let bc = b.column(l);
        for j in 0..b.nrows() {
            let bj = bc[j];
            let mut col = out.column_mut(j);
            for i in 0..a.nrows() {
                let diff = ac[i] - bj;
                col[i] += diff * diff;
            }
        }
    }
    out
}

/// Kernel matrix `K_ij = k(x_i, x_j)` for the rows of `x`.
pub fn kernel_matrix(cfg: &KernelConfig, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() == 0 {
        return Err(Error::input("kernel matrix needs at least one observation"));
    }
    check_finite("covariate matrix", x)?;
    let mut k = sq_distances(x, x);
    let n = k.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = cfg.eval_sq_dist(k[(i, j)]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(j, j)] = 1.0;
    }
    Ok(k)
}

/// Cross-kernel matrix with column `j` equal to `(k(x_1, v_j), …, k(x_n, v_j))ᵀ`.
pub fn kernel_cross(cfg: &KernelConfig, x: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != v.ncols() {
        return Err(Error::input(format!(
            "covariates have {} columns but locations have {}",
            x.ncols(),
            v.ncols()
        )));
    }
    check_finite("covariate matrix", x)?;
    check_finite("location matrix", v)?;
    let mut k = sq_distances(x, v);
    k.apply(|s| *s = cfg.eval_sq_dist(*s));
    Ok(k)
}

/// Unsquared pairwise distances `‖x_i − x_j‖`, `i < j`.
pub fn pairwise_distances(x: &DMatrix<f64>) -> Vec<f64> {
    let sq = sq_distances(x, x);
    let n = x.nrows();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for j in 0..n {
        for i in 0..j {
            out.push(sq[(i, j)].sqrt());
        }
    }
    out
}

/// `1 / median` of the pairwise Euclidean distances. For an even number of
/// pairs the lower-middle order statistic is used.
pub fn median_heuristic(x: &DMatrix<f64>) -> Result<f64> {
    if x.nrows() < 2 {
        return Err(Error::input("median heuristic needs at least two observations"));
    }
    check_finite("covariate matrix", x)?;
    let mut dists = pairwise_distances(x);
    let mid = (dists.len() - 1) / 2;
    let (_, median, _) = dists.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let median = *median;
    if median <= 0.0 {
        return Err(Error::input(
            "median pairwise distance is zero; bandwidth is undefined",
        ));
    }
    Ok(1.0 / median)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    use crate::seeds::rng_from_seed;

    fn random_x(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rng_from_seed(seed);
        DMatrix::from_fn(n, d, |_, _| rng.gen_range(-2.0..2.0))
    }

    #[test]
    fn eval_examples() {
        let c = KernelConfig::gaussian(0.5).unwrap();
        assert_eq!(kernel_eval(&c, &[0.0], &[0.0]).unwrap(), 1.0);
        assert_relative_eq!(kernel_eval(&c, &[0.0], &[1.0]).unwrap(), (-0.5f64).exp());
        let c1 = KernelConfig::gaussian(1.0).unwrap();
        assert_relative_eq!(kernel_eval(&c1, &[1.0, 1.0], &[0.0, 0.0]).unwrap(), (-2.0f64).exp());
        assert!(kernel_eval(&c, &[0.0], &[0.0, 1.0]).is_err());
        assert!(KernelConfig::gaussian(0.0).is_err());
        assert!(KernelConfig::gaussian(f64::NAN).is_err());
    }

    #[test]
    fn matrix_examples() {
        let c = KernelConfig::gaussian(0.5).unwrap();
        let single = DMatrix::from_row_slice(1, 2, &[3.0, -1.0]);
        assert_eq!(kernel_matrix(&c, &single).unwrap(), DMatrix::from_element(1, 1, 1.0));
        let dup = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]);
        assert_eq!(kernel_matrix(&c, &dup).unwrap(), DMatrix::from_element(2, 2, 1.0));
        let bad = DMatrix::from_row_slice(2, 1, &[1.0, f64::INFINITY]);
        assert!(kernel_matrix(&c, &bad).is_err());
        assert!(kernel_matrix(&c, &DMatrix::zeros(0, 2)).is_err());
    }

    #[test]
    fn matrix_is_psd_by_dense_eigensolver() {
        let c = KernelConfig::gaussian(0.7).unwrap();
        let k = kernel_matrix(&c, &random_x(6, 2, 3)).unwrap();
        let min = k.symmetric_eigenvalues().min();
        assert!(min >= -1e-10, "min eigenvalue {min}");
    }

    #[test]
    fn cross_examples() {
        let c = KernelConfig::gaussian(0.5).unwrap();
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let v = DMatrix::from_row_slice(1, 1, &[2.0]);
        let kv = kernel_cross(&c, &x, &v).unwrap();
        assert_relative_eq!(kv[(0, 0)], (-2.0f64).exp());
        assert_relative_eq!(kv[(1, 0)], (-0.5f64).exp());
        let empty = kernel_cross(&c, &x, &DMatrix::zeros(0, 1)).unwrap();
        assert_eq!(empty.shape(), (2, 0));
        assert!(kernel_cross(&c, &x, &DMatrix::zeros(1, 2)).is_err());

        let xr = random_x(7, 3, 11);
        let k = kernel_matrix(&c, &xr).unwrap();
        let row = xr.rows(4, 1).into_owned();
        let col = kernel_cross(&c, &xr, &row).unwrap();
        assert_eq!(col.column(0), k.column(4));
    }

    #[test]
    fn median_examples() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 3.0]);
        assert_eq!(median_heuristic(&x).unwrap(), 0.5);
        let x2 = DMatrix::from_row_slice(2, 1, &[0.0, 2.0]);
        assert_eq!(median_heuristic(&x2).unwrap(), 0.5);
        let same = DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 1.0]);
        assert!(median_heuristic(&same).is_err());
        assert!(median_heuristic(&DMatrix::zeros(1, 1)).is_err());
        // four points, six distances {1,1,1,2,2,3}: lower-middle is index 2
        let x4 = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(median_heuristic(&x4).unwrap(), 1.0);
    }

    #[test]
    fn median_matches_exhaustive_enumeration() {
        let x = random_x(50, 3, 99);
        let mut all = Vec::new();
        for i in 0..50 {
            for j in (i + 1)..50 {
                let mut s = 0.0;
                for l in 0..3 {
                    s += (x[(i, l)] - x[(j, l)]).powi(2);
                }
                all.push(s.sqrt());
            }
        }
        all.sort_by(|a, b| a.total_cmp(b));
        let oracle = all[(all.len() - 1) / 2];
        assert_relative_eq!(median_heuristic(&x).unwrap(), 1.0 / oracle, max_relative = 1e-14);
    }

    proptest! {
        #[test]
        fn matrix_invariants(n in 1usize..12, d in 1usize..4, seed in any::<u64>(), gamma in 0.01f64..5.0) {
            let c = KernelConfig::gaussian(gamma).unwrap();
            let x = random_x(n, d, seed);
            let k = kernel_matrix(&c, &x).unwrap();
            for i in 0..n {
                prop_assert_eq!(k[(i, i)], 1.0);
                for j in 0..n {
                    prop_assert_eq!(k[(i, j)], k[(j, i)]);
                }
            }
            let min = k.clone().symmetric_eigenvalues().min();
            prop_assert!(min >= -(n as f64) * 1e-12);
            let cross = kernel_cross(&c, &x, &x).unwrap();
            prop_assert!((cross - &k).abs().max() <= 1e-14);

            // reversing the rows permutes K the same way
            let perm: Vec<usize> = (0..n).rev().collect();
            let xp = x.select_rows(&perm);
            let kp = kernel_matrix(&c, &xp).unwrap();
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(kp[(i, j)], k[(perm[i], perm[j])]);
                }
            }
        }
    }
}
