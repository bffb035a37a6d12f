use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::kernel_cross;
use crate::seeds::rng_from_seed;
use crate::spectral::KernelContext;

/// Diagonal loading of the fitted covariance, relative to its mean variance.
pub const DEFAULT_LOCATION_RIDGE: f64 = 1e-8;

/// Multivariate normal fitted to the covariates, used to draw test locations.
#[derive(Debug, Clone)]
pub struct LocationSampler {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    factor: DMatrix<f64>,
    diagonal_fallback: bool,
}

/// Sample mean and (n − 1)-divisor covariance of `x`, with
/// `ridge·(trace/d)·I` added to the covariance (or `ridge·I` when the trace
/// is zero).
pub fn fit_location_sampler(x: &DMatrix<f64>, ridge: f64) -> Result<LocationSampler> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::input("location sampler needs at least two observations"));
    }
    if d == 0 {
        return Err(Error::input("location sampler needs at least one covariate"));
    }
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(Error::input("location ridge must be nonnegative"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("covariate matrix has non-finite entries"));
    }
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let mut cov = centered.tr_mul(&centered) / (n as f64 - 1.0);
    let avg_var = cov.trace() / d as f64;
    let load = if avg_var > 0.0 { ridge * avg_var } else { ridge };
    for i in 0..d {
        cov[(i, i)] += load;
    }
    let (factor, diagonal_fallback) = match cov.clone().cholesky() {
        Some(ch) => (ch.l(), false),
        None => (DMatrix::from_diagonal(&cov.diagonal().map(|v| v.max(0.0).sqrt())), true),
    };
    Ok(LocationSampler {
        mean,
        covariance: cov,
        factor,
        diagonal_fallback,
    })
}

impl LocationSampler {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Whether the covariance failed to factorize and only its diagonal is used.
    pub fn diagonal_fallback(&self) -> bool {
        self.diagonal_fallback
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationProvenance {
    pub mean: Vec<f64>,
    /// Row-major d×d covariance.
    pub covariance: Vec<f64>,
    pub seed: u64,
    pub diagonal_fallback: bool,
}

/// `J` test locations, fixed for one test invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationSet {
    /// J×d.
    pub points: DMatrix<f64>,
    pub provenance: LocationProvenance,
}

impl LocationSet {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    /// The first `j` locations.
    pub fn prefix(&self, j: usize) -> Result<LocationSet> {
        if j == 0 || j > self.len() {
            return Err(Error::input(format!("cannot take {j} of {} locations", self.len())));
        }
        Ok(LocationSet {
            points: self.points.rows(0, j).into_owned(),
            provenance: self.provenance.clone(),
        })
    }
}

pub fn sample_locations(sampler: &LocationSampler, j: usize, seed: u64) -> Result<LocationSet> {
    if j == 0 {
        return Err(Error::input("at least one location is required"));
    }
    let d = sampler.dim();
    let mut rng = rng_from_seed(seed);
    let mut points = DMatrix::zeros(j, d);
    for r in 0..j {
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let p = &sampler.mean + &sampler.factor * z;
        points.set_row(r, &p.transpose());
    }
    Ok(LocationSet {
        points,
        provenance: LocationProvenance {
            mean: sampler.mean.iter().copied().collect(),
            covariance: sampler.covariance.transpose().iter().copied().collect(),
            seed,
            diagonal_fallback: sampler.diagonal_fallback,
        },
    })
}

/// Cross-kernel columns `k(v_j)` at fixed locations, plus
/// `(K + nλI)⁻¹k(v_j)`, precomputed once per test invocation.
#[derive(Debug, Clone)]
pub struct LocationKernel {
    locations: LocationSet,
    cross: DMatrix<f64>,
    solved: DMatrix<f64>,
}

impl LocationKernel {
    pub fn new(ctx: &KernelContext, x: &DMatrix<f64>, locations: LocationSet) -> Result<Self> {
        if x.nrows() != ctx.n() {
            return Err(Error::input("covariates do not match the kernel context"));
        }
        let cross = kernel_cross(ctx.config(), x, &locations.points)?;
        let solved = ctx.solve(&cross)?;
        Ok(Self {
            locations,
            cross,
            solved,
        })
    }

    /// Build directly from a cross-kernel matrix (n×J).
    pub fn from_cross(ctx: &KernelContext, cross: DMatrix<f64>, locations: LocationSet) -> Result<Self> {
        if cross.nrows() != ctx.n() || cross.ncols() != locations.len() {
            return Err(Error::input("cross-kernel shape does not match context and locations"));
        }
        let solved = ctx.solve(&cross)?;
        Ok(Self {
            locations,
            cross,
            solved,
        })
    }

    pub fn len(&self) -> usize {
        self.cross.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.cross.ncols() == 0
    }

    pub fn locations(&self) -> &LocationSet {
        &self.locations
    }

    pub fn cross(&self) -> &DMatrix<f64> {
        &self.cross
    }

    pub fn solved(&self) -> &DMatrix<f64> {
        &self.solved
    }

    /// The first `j` locations with their precomputed columns.
    pub fn prefix(&self, j: usize) -> Result<LocationKernel> {
        Ok(LocationKernel {
            locations: self.locations.prefix(j)?,
            cross: self.cross.columns(0, j).into_owned(),
            solved: self.solved.columns(0, j).into_owned(),
        })
    }
}
