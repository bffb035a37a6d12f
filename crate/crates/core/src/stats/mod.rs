//! KRR test statistics, the KCM/GP benchmark quadratic form and random
//! test locations.
//!
//! Values are the displayed `n·T̂` quantities; for `q > 1` residual
//! components the per-component statistics are summed.

mod locations;
mod registry;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::KernelContext;

pub use locations::{
    fit_location_sampler, sample_locations, LocationKernel, LocationProvenance, LocationSampler,
    LocationSet, DEFAULT_LOCATION_RIDGE,
};
pub use registry::{
    builtin_statistics, KcmStatistic, KernelPolicy, Proj1Statistic, Proj2Statistic, Rand1Statistic,
    Rand2Statistic, StatEnv, StatisticRegistry, TestStatistic,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatName {
    Proj1,
    Proj2,
    Rand1,
    Rand2,
    Kcm,
    Gp,
    Icm,
}

impl StatName {
    pub fn as_str(self) -> &'static str {
        match self {
            StatName::Proj1 => "proj1",
            StatName::Proj2 => "proj2",
            StatName::Rand1 => "rand1",
            StatName::Rand2 => "rand2",
            StatName::Kcm => "kcm",
            StatName::Gp => "gp",
            StatName::Icm => "icm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatScale {
    pub n: usize,
    pub lambda: Option<f64>,
    pub gamma: f64,
    pub locations: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatValue {
    pub name: StatName,
    pub value: f64,
    pub scale: StatScale,
}

fn check_rows(eps: &DMatrix<f64>, n: usize) -> Result<()> {
    if eps.nrows() != n {
        return Err(Error::input(format!(
            "residual matrix has {} rows, kernel has order {n}",
            eps.nrows()
        )));
    }
    Ok(())
}

fn scale_of(ctx: &KernelContext, locations: Option<usize>) -> StatScale {
    StatScale {
        n: ctx.n(),
        lambda: ctx.lambda(),
        gamma: ctx.gamma(),
        locations,
    }
}

/// Frobenius inner product `Σ_r a_rᵀ b_r`.
fn columnwise_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// `n Σ_r a_rᵀ K a_r` with `a_r = (K + nλI)⁻¹ ε_r`.
pub fn stat_proj1(eps: &DMatrix<f64>, ctx: &KernelContext) -> Result<StatValue> {
    check_rows(eps, ctx.n())?;
    let a = ctx.solve(eps)?;
    let ka = ctx.kernel() * &a;
    Ok(StatValue {
        name: StatName::Proj1,
        value: ctx.n() as f64 * columnwise_dot(&a, &ka),
        scale: scale_of(ctx, None),
    })
}

/// `Σ_r ε_rᵀ (K + nλI)⁻¹ K ε_r`.
pub fn stat_proj2(eps: &DMatrix<f64>, ctx: &KernelContext) -> Result<StatValue> {
    check_rows(eps, ctx.n())?;
    let a = ctx.solve(eps)?;
    let ke = ctx.kernel() * eps;
    Ok(StatValue {
        name: StatName::Proj2,
        value: columnwise_dot(&a, &ke),
        scale: scale_of(ctx, None),
    })
}

/// Witness values `ε_rᵀ(K + nλI)⁻¹k(v_j)` as a q×J matrix.
pub fn location_witness(eps: &DMatrix<f64>, loc: &LocationKernel) -> Result<DMatrix<f64>> {
    check_rows(eps, loc.solved().nrows())?;
    Ok(eps.tr_mul(loc.solved()))
}

/// `n Σ_r Σ_j (ε_rᵀ(K + nλI)⁻¹k(v_j))²`.
pub fn stat_rand1(eps: &DMatrix<f64>, ctx: &KernelContext, loc: &LocationKernel) -> Result<StatValue> {
    check_rows(eps, ctx.n())?;
    let w = location_witness(eps, loc)?;
    Ok(StatValue {
        name: StatName::Rand1,
        value: ctx.n() as f64 * w.norm_squared(),
        scale: scale_of(ctx, Some(loc.len())),
    })
}

/// `n Σ_r (Σ_j ε_rᵀ(K + nλI)⁻¹k(v_j))²`.
pub fn stat_rand2(eps: &DMatrix<f64>, ctx: &KernelContext, loc: &LocationKernel) -> Result<StatValue> {
    check_rows(eps, ctx.n())?;
    let w = location_witness(eps, loc)?;
    let value = w.row_iter().map(|row| row.sum().powi(2)).sum::<f64>();
    Ok(StatValue {
        name: StatName::Rand2,
        value: ctx.n() as f64 * value,
        scale: scale_of(ctx, Some(loc.len())),
    })
}

/// `(1/n) Σ_r ε_rᵀ K ε_r` on a bare kernel matrix.
pub fn kcm_value(eps: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<f64> {
    check_rows(eps, k.nrows())?;
    let ke = k * eps;
    Ok(columnwise_dot(eps, &ke) / k.nrows() as f64)
}

/// The ICM/KCM/GP quadratic form `(1/n) Σ_r ε_rᵀ K ε_r`.
pub fn stat_kcm(eps: &DMatrix<f64>, ctx: &KernelContext) -> Result<StatValue> {
    Ok(StatValue {
        name: StatName::Kcm,
        value: kcm_value(eps, ctx.kernel())?,
        scale: scale_of(ctx, None),
    })
}

#[cfg(test)]
mod tests;
