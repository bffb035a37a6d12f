//! Multiplier bootstrap p-values.
//!
//! Replicate `b` multiplies the estimated residuals elementwise by an i.i.d.
//! multiplier vector `V_b`, projects the product with `Π̂`, and re-evaluates
//! the statistic on the same kernel and locations. `V_b` is drawn from a
//! generator seeded by `(master_seed, b)` only, so results do not depend on
//! execution order or on the number of worker threads.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{kernel_matrix, KernelConfig};
use crate::models::{augment, fit_ols, ols_coefficients, FittedModel};
use crate::orthogonal::ComponentProjectors;
use crate::registry::{Named, Registry};
use crate::seeds::{derive_seed, rng_from_seed};
use crate::stats::{kcm_value, LocationSet, StatEnv, StatName, StatScale, StatValue, TestStatistic};

/// Lower Mammen point `(1 − √5)/2`.
pub const MAMMEN_LOW: f64 = -0.618_033_988_749_894_9;
/// Upper Mammen point `(1 + √5)/2`.
pub const MAMMEN_HIGH: f64 = 1.618_033_988_749_895;
/// `P(V = MAMMEN_LOW) = (1 + √5)/(2√5)`.
pub const MAMMEN_P_LOW: f64 = 0.723_606_797_749_979;

/// Distribution of the i.i.d. bootstrap multipliers (mean 0, variance 1).
pub trait MultiplierFamily: Named + Send + Sync {
    fn draw(&self, n: usize, rng: &mut ChaCha8Rng) -> DVector<f64>;
}

pub type MultiplierRegistry = Registry<dyn MultiplierFamily>;

/// Mammen's two-point distribution.
pub struct Mammen;

/// Symmetric ±1 signs.
pub struct Rademacher;

impl Named for Mammen {
    fn name(&self) -> &str {
        "mammen"
    }
}

impl MultiplierFamily for Mammen {
    fn draw(&self, n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(n, |_, _| {
            if rng.gen::<f64>() < MAMMEN_P_LOW {
                MAMMEN_LOW
            } else {
                MAMMEN_HIGH
            }
        })
    }
}

impl Named for Rademacher {
    fn name(&self) -> &str {
        "rademacher"
    }
}

impl MultiplierFamily for Rademacher {
    fn draw(&self, n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(n, |_, _| if rng.gen::<bool>() { 1.0 } else { -1.0 })
    }
}

pub fn builtin_multipliers() -> MultiplierRegistry {
    let mut reg = MultiplierRegistry::new("multiplier family");
    reg.register(Arc::new(Mammen)).expect("unique");
    reg.register(Arc::new(Rademacher)).expect("unique");
    reg
}

pub fn mammen_multipliers(n: usize, seed: u64) -> DVector<f64> {
    Mammen.draw(n, &mut rng_from_seed(seed))
}

#[derive(Clone)]
pub struct BootstrapPlan {
    pub replicates: usize,
    pub master_seed: u64,
    pub family: Arc<dyn MultiplierFamily>,
}

impl std::fmt::Debug for BootstrapPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BootstrapPlan")
            .field("replicates", &self.replicates)
            .field("master_seed", &self.master_seed)
            .field("family", &self.family.name())
            .finish()
    }
}

impl BootstrapPlan {
    /// Mammen multipliers.
    pub fn new(replicates: usize, master_seed: u64) -> Result<Self> {
        Self::with_family(replicates, master_seed, Arc::new(Mammen))
    }

    pub fn with_family(
        replicates: usize,
        master_seed: u64,
        family: Arc<dyn MultiplierFamily>,
    ) -> Result<Self> {
        if replicates == 0 {
            return Err(Error::input("bootstrap needs at least one replicate"));
        }
        Ok(Self {
            replicates,
            master_seed,
            family,
        })
    }

    pub fn family_name(&self) -> &str {
        self.family.name()
    }

    /// Seed of replicate `b`.
    pub fn replicate_seed(&self, b: usize) -> u64 {
        derive_seed(self.master_seed, b as u64)
    }

    pub fn multipliers(&self, n: usize, b: usize) -> DVector<f64> {
        self.family.draw(n, &mut rng_from_seed(self.replicate_seed(b)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub statistic: StatValue,
    pub p_value: f64,
    pub replicates: usize,
    pub bootstrap_values: Option<Vec<f64>>,
    pub locations: Option<LocationSet>,
}

/// `(1 + #{b : T̃_b ≥ T̂}) / (B + 1)`.
pub fn bootstrap_p_value(observed: f64, replicates: &[f64]) -> f64 {
    let exceed = replicates.iter().filter(|&&t| t >= observed).count();
    (1 + exceed) as f64 / (replicates.len() + 1) as f64
}

/// One statistic with the kernel and locations it is evaluated on.
#[derive(Clone)]
pub struct BootstrapJob<'a> {
    pub statistic: Arc<dyn TestStatistic>,
    pub env: StatEnv<'a>,
}

/// `ε̂_i / √(1 − h_ii)` per component, with `h_ii` the leverage of `Π̂`'s
/// complement. Offsets the shrinkage of fitted residuals at high-leverage
/// points, which otherwise leaves the bootstrap under-dispersed.
pub fn leverage_scaled(residuals: &DMatrix<f64>, projectors: &ComponentProjectors) -> DMatrix<f64> {
    let mut out = residuals.clone();
    for (r, mut col) in out.column_iter_mut().enumerate() {
        let h = projectors.get(r).leverage();
        for (e, h) in col.iter_mut().zip(h.iter()) {
            *e /= (1.0 - h).max(1e-12).sqrt();
        }
    }
    out
}

/// Runs several statistics on the same multiplier draws.
///
/// With `projectors`, the observed statistic uses `Π̂ε̂` and replicate `b`
/// uses `Π̂(ε̂* ⊙ V_b)` with `ε̂*` the leverage-scaled residuals; without,
/// residuals are used as given (known-`θ₀` mode). For `q > 1` components the same `V_b` multiplies every column.
pub fn bootstrap_tests(
    residuals: &DMatrix<f64>,
    projectors: Option<&ComponentProjectors>,
    jobs: &[BootstrapJob<'_>],
    plan: &BootstrapPlan,
) -> Result<Vec<TestReport>> {
    let n = residuals.nrows();
    let transform = |m: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        match projectors {
            Some(p) => p.apply(m),
            None => Ok(m.clone()),
        }
    };
    let eps = transform(residuals)?;
    let observed = jobs
        .iter()
        .map(|j| j.statistic.evaluate(&eps, &j.env))
        .collect::<Result<Vec<_>>>()?;
    let base = match projectors {
        Some(p) => leverage_scaled(residuals, p),
        None => residuals.clone(),
    };
    let per_replicate = (0..plan.replicates)
        .into_par_iter()
        .map(|b| {
            let v = plan.multipliers(n, b);
            let mut perturbed = base.clone();
            for mut col in perturbed.column_iter_mut() {
                col.component_mul_assign(&v);
            }
            let perturbed = transform(&perturbed)?;
            jobs.iter()
                .map(|j| j.statistic.evaluate(&perturbed, &j.env).map(|s| s.value))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(observed
        .into_iter()
        .enumerate()
        .map(|(k, stat)| {
            let values: Vec<f64> = per_replicate.iter().map(|r| r[k]).collect();
            TestReport {
                p_value: bootstrap_p_value(stat.value, &values),
                statistic: stat,
                replicates: plan.replicates,
                bootstrap_values: Some(values),
                locations: jobs[k].env.locations.map(|l| l.locations().clone()),
            }
        })
        .collect())
}

/// Multiplier bootstrap of one statistic with the model's own projector.
pub fn bootstrap_test(
    fm: &FittedModel,
    statistic: Arc<dyn TestStatistic>,
    env: StatEnv<'_>,
    plan: &BootstrapPlan,
) -> Result<TestReport> {
    let projectors = ComponentProjectors::from_model(fm)?;
    let job = BootstrapJob { statistic, env };
    let mut reports = bootstrap_tests(&fm.residuals, Some(&projectors), &[job], plan)?;
    Ok(reports.remove(0))
}

/// Bandwidth of the ICM benchmark kernel.
pub const ICM_GAMMA: f64 = 0.5;

struct WildSetup {
    xa: DMatrix<f64>,
    fitted: DVector<f64>,
    resid: DVector<f64>,
}

impl WildSetup {
    fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(Self, FittedModel)> {
        let fm = fit_ols(x, y)?;
        let resid = fm.residuals.column(0).into_owned();
        let fitted = y - &resid;
        Ok((
            Self {
                xa: augment(x),
                fitted,
                resid,
            },
            fm,
        ))
    }

    /// `(θ̂*_b, ε̂*_b)` from `Y* = Ŷ + ε̂ ⊙ V_b`.
    fn replicate(&self, plan: &BootstrapPlan, b: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let v = plan.multipliers(self.resid.len(), b);
        let y_star = &self.fitted + self.resid.component_mul(&v);
        let theta = ols_coefficients(&self.xa, &y_star)?;
        let r = y_star - &self.xa * &theta;
        let n = r.len();
        Ok((theta, DMatrix::from_column_slice(n, 1, r.as_slice())))
    }
}

/// ICM benchmark: `εᵀKε/n` with `γ = 0.5` and a wild bootstrap that
/// regenerates the outcome and re-estimates the linear model each replicate.
pub fn wild_bootstrap_icm(x: &DMatrix<f64>, y: &DVector<f64>, plan: &BootstrapPlan) -> Result<TestReport> {
    let (setup, fm) = WildSetup::new(x, y)?;
    let config = KernelConfig::gaussian(ICM_GAMMA)?;
    let k = kernel_matrix(&config, x)?;
    let observed = kcm_value(&fm.residuals, &k)?;
    let values = (0..plan.replicates)
        .into_par_iter()
        .map(|b| {
            let (_, r) = setup.replicate(plan, b)?;
            kcm_value(&r, &k)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(TestReport {
        statistic: StatValue {
            name: StatName::Icm,
            value: observed,
            scale: StatScale {
                n: x.nrows(),
                lambda: None,
                gamma: ICM_GAMMA,
                locations: None,
            },
        },
        p_value: bootstrap_p_value(observed, &values),
        replicates: plan.replicates,
        bootstrap_values: Some(values),
        locations: None,
    })
}

/// Re-estimated coefficients of wild replicate `b`.
pub fn wild_bootstrap_coefficients(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    plan: &BootstrapPlan,
    b: usize,
) -> Result<DVector<f64>> {
    let (setup, _) = WildSetup::new(x, y)?;
    Ok(setup.replicate(plan, b)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::KernelContext;
    use crate::stats::{builtin_statistics, StatEnv};

    #[test]
    fn mammen_support_and_constants() {
        let s5 = 5f64.sqrt();
        assert_eq!(MAMMEN_LOW, 0.5 * (1.0 - s5));
        assert_eq!(MAMMEN_HIGH, 0.5 * (1.0 + s5));
        assert!((MAMMEN_P_LOW - (1.0 + s5) / (2.0 * s5)).abs() < 1e-15);
        let v = mammen_multipliers(1000, 3);
        assert!(v.iter().all(|&x| x == MAMMEN_LOW || x == MAMMEN_HIGH));
        assert_eq!(v, mammen_multipliers(1000, 3));
        assert_ne!(v, mammen_multipliers(1000, 4));
    }

    #[test]
    fn mammen_moments() {
        let n = 1_000_000;
        let v = mammen_multipliers(n, 11);
        let mean = v.mean();
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let third = v.iter().map(|x| x.powi(3)).sum::<f64>() / n as f64;
        assert!(mean.abs() <= 4.0 / (n as f64).sqrt(), "{mean}");
        assert!((var - 1.0).abs() <= 0.01, "{var}");
        // E V³ = 1 for Mammen
        assert!((third - 1.0).abs() <= 0.05, "{third}");
    }

    #[test]
    fn rademacher_moments() {
        let v = Rademacher.draw(100_000, &mut rng_from_seed(5));
        assert!(v.iter().all(|&x| x == 1.0 || x == -1.0));
        assert!(v.mean().abs() < 4.0 / (100_000f64).sqrt());
        let reg = builtin_multipliers();
        assert_eq!(reg.names(), vec!["mammen", "rademacher"]);
    }

    #[test]
    fn p_value_convention() {
        assert_eq!(bootstrap_p_value(1.0, &[0.0, 2.0, 1.0, 0.5]), 3.0 / 5.0);
        assert_eq!(bootstrap_p_value(0.0, &[0.0; 9]), 1.0);
        assert_eq!(bootstrap_p_value(10.0, &[0.0; 9]), 0.1);
        assert!(BootstrapPlan::new(0, 1).is_err());
    }

    #[test]
    fn zero_residuals_give_unit_p_value() {
        let x = DMatrix::from_fn(20, 2, |i, j| ((i * 3 + j * 7) % 11) as f64 / 5.0);
        let ctx = KernelContext::regularized(&x, KernelConfig::gaussian(0.5).unwrap(), 0.1).unwrap();
        let reg = builtin_statistics();
        let plan = BootstrapPlan::new(19, 2).unwrap();
        let jobs: Vec<BootstrapJob> = ["proj1", "proj2", "kcm"]
            .iter()
            .map(|s| BootstrapJob {
                statistic: reg.get(s).unwrap(),
                env: StatEnv::new(&ctx),
            })
            .collect();
        let reports = bootstrap_tests(&DMatrix::zeros(20, 1), None, &jobs, &plan).unwrap();
        for r in reports {
            assert_eq!(r.statistic.value, 0.0);
            assert_eq!(r.p_value, 1.0);
            assert_eq!(r.bootstrap_values.unwrap().len(), 19);
        }
    }

    #[test]
    fn wild_refit_moves_coefficients() {
        let x = DMatrix::from_fn(30, 2, |i, j| ((i * 5 + j * 3) % 13) as f64 / 4.0);
        let y = DVector::from_fn(30, |i, _| 1.0 + x[(i, 0)] - x[(i, 1)] + ((i * 7) % 5) as f64 / 3.0);
        let plan = BootstrapPlan::new(5, 9).unwrap();
        let fm = fit_ols(&x, &y).unwrap();
        for b in 0..5 {
            let theta = wild_bootstrap_coefficients(&x, &y, &plan, b).unwrap();
            assert!((theta - &fm.theta_hat).amax() > 1e-8);
        }
        let exact = DVector::from_fn(30, |i, _| 1.0 + x[(i, 0)] - x[(i, 1)]);
        let r = wild_bootstrap_icm(&x, &exact, &plan).unwrap();
        assert!(r.statistic.value < 1e-20);
        assert_eq!(r.p_value, 1.0);
    }
}
