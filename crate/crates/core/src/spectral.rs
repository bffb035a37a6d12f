//! Symmetric eigendecomposition, regularized solves with `K + nλI`, and the
//! eigenvalue form of the quadratic statistics.
//!
//! Production statistics go through [`RegularizedFactorization`] (one
//! Cholesky factorization per test invocation). The eigen path exists to
//! cross-check identities and for diagnostics.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::kernels::{kernel_matrix, KernelConfig};

const EIGEN_EPS: f64 = 1e-14;
const EIGEN_MAX_ITER: usize = 10_000;

/// Eigenpairs of a kernel matrix, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    /// σᵢ² of `K`, descending; tiny negative values are clamped to zero.
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors `uᵢ` as columns, in the same order.
    pub eigenvectors: DMatrix<f64>,
}

fn symmetrize(k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !k.is_square() {
        return Err(Error::input(format!("matrix is {}×{}, not square", k.nrows(), k.ncols())));
    }
    Ok((k + k.transpose()) * 0.5)
}

fn clamp_negative(values: &mut [f64]) {
    let max = values.iter().cloned().fold(0.0f64, f64::max);
    let threshold = 1e-10 * max;
    for v in values.iter_mut() {
        if *v < 0.0 && *v > -threshold {
            *v = 0.0;
        }
    }
}

fn non_convergence(k: &DMatrix<f64>) -> Error {
    let diag_max = k.diagonal().amax();
    Error::numerical(format!(
        "symmetric eigensolver did not converge (n = {}, max |diag| = {diag_max:e}, frobenius norm = {:e})",
        k.nrows(),
        k.norm()
    ))
}

pub fn eigendecompose(k: &DMatrix<f64>) -> Result<EigenSystem> {
    let sym = symmetrize(k)?;
    let eig = SymmetricEigen::try_new(sym.clone(), EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or_else(|| non_convergence(&sym))?;
    let n = sym.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    clamp_negative(&mut values);
    let vectors = eig.eigenvectors.select_columns(&order);
    Ok(EigenSystem {
        eigenvalues: DVector::from_vec(values),
        eigenvectors: vectors,
    })
}

/// Eigenvalues only, descending. Much cheaper than [`eigendecompose`] for
/// large matrices.
pub fn symmetric_eigenvalues(k: &DMatrix<f64>) -> Result<Vec<f64>> {
    let sym = symmetrize(k)?;
    let eig = SymmetricEigen::try_new(sym.clone(), EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or_else(|| non_convergence(&sym))?;
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    clamp_negative(&mut values);
    Ok(values)
}

/// Cholesky factorization of `K + ridge·I`, reused for every solve.
#[derive(Debug, Clone)]
pub struct RegularizedFactorization {
    kernel: DMatrix<f64>,
    ridge: f64,
    chol: Cholesky<f64, Dyn>,
}

impl RegularizedFactorization {
    /// `ridge` is the full diagonal shift, i.e. `nλ`.
    pub fn new(kernel: DMatrix<f64>, ridge: f64) -> Result<Self> {
        if !(ridge.is_finite() && ridge > 0.0) {
            return Err(Error::numerical(format!("ridge must be positive, got {ridge}")));
        }
        if !kernel.is_square() {
            return Err(Error::input("kernel matrix is not square"));
        }
        let mut shifted = kernel.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += ridge;
        }
        let chol = Cholesky::new(shifted).ok_or_else(|| {
            Error::numerical(format!(
                "Cholesky factorization of K + {ridge:e}·I failed (n = {})",
                kernel.nrows()
            ))
        })?;
        Ok(Self { kernel, ridge, chol })
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn n(&self) -> usize {
        self.kernel.nrows()
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        reg_solve(self, b)
    }
}

/// `(K + nλI)⁻¹ b` through the stored factorization.
pub fn reg_solve(f: &RegularizedFactorization, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if b.nrows() != f.n() {
        return Err(Error::input(format!(
            "right-hand side has {} rows, kernel has {}",
            b.nrows(),
            f.n()
        )));
    }
    Ok(f.chol.solve(b))
}

/// Kernel, bandwidth and ridge shared by every statistic of one test
/// invocation. Without a ridge only the plain kernel matrix is available.
#[derive(Debug, Clone)]
pub struct KernelContext {
    config: KernelConfig,
    lambda: Option<f64>,
    kernel: DMatrix<f64>,
    factorization: Option<RegularizedFactorization>,
}

impl KernelContext {
    /// Kernel matrix of `x` plus the factorization of `K + nλI`.
    pub fn regularized(x: &DMatrix<f64>, config: KernelConfig, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::input(format!("lambda must be positive, got {lambda}")));
        }
        let kernel = kernel_matrix(&config, x)?;
        let n = kernel.nrows() as f64;
        let factorization = RegularizedFactorization::new(kernel.clone(), n * lambda)?;
        Ok(Self {
            config,
            lambda: Some(lambda),
            kernel,
            factorization: Some(factorization),
        })
    }

    pub fn plain(x: &DMatrix<f64>, config: KernelConfig) -> Result<Self> {
        Ok(Self {
            config,
            lambda: None,
            kernel: kernel_matrix(&config, x)?,
            factorization: None,
        })
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn gamma(&self) -> f64 {
        self.config.gamma
    }

    pub fn lambda(&self) -> Option<f64> {
        self.lambda
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn n(&self) -> usize {
        self.kernel.nrows()
    }

    pub fn factorization(&self) -> Result<&RegularizedFactorization> {
        self.factorization
            .as_ref()
            .ok_or_else(|| Error::input("kernel context has no ridge; a regularized context is required"))
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        reg_solve(self.factorization()?, b)
    }
}

/// Eigenvalue weighting of the quadratic statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralWeight {
    /// `(σ²/n) / (σ²/n + λ)²`
    Proj1,
    /// `(σ²/n) / (σ²/n + λ)`
    Proj2,
    /// `σ²/n`
    Kcm,
}

impl SpectralWeight {
    pub fn weight(self, sigma_sq_over_n: f64, lambda: f64) -> f64 {
        match self {
            SpectralWeight::Proj1 => sigma_sq_over_n / (sigma_sq_over_n + lambda).powi(2),
            SpectralWeight::Proj2 => sigma_sq_over_n / (sigma_sq_over_n + lambda),
            SpectralWeight::Kcm => sigma_sq_over_n,
        }
    }
}

/// `n Σᵢ wᵢ (εᵀuᵢ/√n)² = Σᵢ wᵢ (εᵀuᵢ)²`, which equals the matching direct
/// matrix statistic in [`crate::stats`].
pub fn spectral_statistic(
    eig: &EigenSystem,
    eps: &DVector<f64>,
    lambda: f64,
    weight: SpectralWeight,
) -> Result<f64> {
    let n = eig.eigenvalues.len();
    if eps.len() != n {
        return Err(Error::input(format!(
            "residual has length {}, eigensystem has order {n}",
            eps.len()
        )));
    }
    let proj = eig.eigenvectors.tr_mul(eps);
    let nf = n as f64;
    Ok(eig
        .eigenvalues
        .iter()
        .zip(proj.iter())
        .map(|(&s2, &c)| weight.weight(s2 / nf, lambda) * c * c)
        .sum())
}

/// Leading eigenvalues of the integral operator of the Gaussian kernel
/// `exp(-γ(x−y)²)` under a centered 1-d normal input law with standard
/// deviation `sigma_x`.
///
/// Closed form (Zhu, Williams, Rohwer & Morciniec 1998; Rasmussen & Williams,
/// *Gaussian Processes for Machine Learning*, §4.3.1):
/// with `a = 1/(4σₓ²)`, `b = γ`, `c = √(a² + 2ab)`, `A = a + b + c`,
/// `μₖ = √(2a/A) · (b/A)ᵏ` for `k = 0, 1, …`.
pub fn gaussian_measure_spectrum(gamma: f64, sigma_x: f64, count: usize) -> Result<Vec<f64>> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::input("gamma must be positive"));
    }
    if !(sigma_x.is_finite() && sigma_x > 0.0) {
        return Err(Error::input("sigma_x must be positive"));
    }
    let a = 1.0 / (4.0 * sigma_x * sigma_x);
    let b = gamma;
    let c = (a * a + 2.0 * a * b).sqrt();
    let big_a = a + b + c;
    let lead = (2.0 * a / big_a).sqrt();
    let ratio = b / big_a;
    Ok((0..count).map(|k| lead * ratio.powi(k as i32)).collect())
}
