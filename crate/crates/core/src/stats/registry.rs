use std::sync::Arc;

use nalgebra::DMatrix;

use super::{stat_kcm, stat_proj1, stat_proj2, stat_rand1, stat_rand2, LocationKernel, StatName, StatValue};
use crate::error::{Error, Result};
use crate::registry::{Named, Registry};
use crate::spectral::KernelContext;

/// How a statistic's kernel bandwidth is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelPolicy {
    /// Cross-validated `(γ, λ)`.
    Tuned,
    /// `γ = 1 / median pairwise distance`, no ridge.
    MedianHeuristic,
    /// Fixed `γ`, no ridge.
    Fixed(f64),
}

/// Everything a statistic may read besides the residuals.
#[derive(Clone, Copy)]
pub struct StatEnv<'a> {
    pub kernel: &'a KernelContext,
    pub locations: Option<&'a LocationKernel>,
}

impl<'a> StatEnv<'a> {
    pub fn new(kernel: &'a KernelContext) -> Self {
        Self {
            kernel,
            locations: None,
        }
    }

    pub fn with_locations(kernel: &'a KernelContext, locations: &'a LocationKernel) -> Self {
        Self {
            kernel,
            locations: Some(locations),
        }
    }

    fn require_locations(&self, who: &str) -> Result<&'a LocationKernel> {
        self.locations
            .ok_or_else(|| Error::input(format!("statistic `{who}` needs test locations")))
    }
}

/// A quadratic-form test statistic of (orthogonalized) residuals.
pub trait TestStatistic: Named + Send + Sync {
    fn kernel_policy(&self) -> KernelPolicy {
        KernelPolicy::Tuned
    }

    fn needs_locations(&self) -> bool {
        false
    }

    fn evaluate(&self, eps: &DMatrix<f64>, env: &StatEnv<'_>) -> Result<StatValue>;
}

pub type StatisticRegistry = Registry<dyn TestStatistic>;

pub struct Proj1Statistic;
pub struct Proj2Statistic;
pub struct Rand1Statistic;
pub struct Rand2Statistic;

impl Named for Proj1Statistic {
    fn name(&self) -> &str {
        "proj1"
    }
}

impl TestStatistic for Proj1Statistic {
    fn evaluate(&self, eps: &DMatrix<f64>, env: &StatEnv<'_>) -> Result<StatValue> {
        stat_proj1(eps, env.kernel)
    }
}

impl Named for Proj2Statistic {
    fn name(&self) -> &str {
        "proj2"
    }
}

impl TestStatistic for Proj2Statistic {
    fn evaluate(&self, eps: &DMatrix<f64>, env: &StatEnv<'_>) -> Result<StatValue> {
        stat_proj2(eps, env.kernel)
    }
}

impl Named for Rand1Statistic {
    fn name(&self) -> &str {
        "rand1"
    }
}

impl TestStatistic for Rand1Statistic {
    fn needs_locations(&self) -> bool {
        true
    }

    fn evaluate(&self, eps: &DMatrix<f64>, env: &StatEnv<'_>) -> Result<StatValue> {
        stat_rand1(eps, env.kernel, env.require_locations("rand1")?)
    }
}

impl Named for Rand2Statistic {
    fn name(&self) -> &str {
        "rand2"
    }
}

impl TestStatistic for Rand2Statistic {
    fn needs_locations(&self) -> bool {
        true
    }

    fn evaluate(&self, eps: &DMatrix<f64>, env: &StatEnv<'_>) -> Result<StatValue> {
        stat_rand2(eps, env.kernel, env.require_locations("rand2")?)
    }
}

/// `(1/n) εᵀKε` under a configurable bandwidth policy. Registered as
/// `kcm` (tuned kernel), `gp` (median heuristic) and `gp05` (`γ = 0.5`);
/// fed orthogonalized residuals, `εᵀΠ̂ᵀKΠ̂ε` is the orthogonal-kernel form.
pub struct KcmStatistic {
    name: &'static str,
    tag: StatName,
    policy: KernelPolicy,
}

impl KcmStatistic {
    pub fn new(name: &'static str, tag: StatName, policy: KernelPolicy) -> Self {
        Self { name, tag, policy }
    }
}

impl Named for KcmStatistic {
    fn name(&self) -> &str {
        self.name
    }
}

impl TestStatistic for KcmStatistic {
    fn kernel_policy(&self) -> KernelPolicy {
        self.policy
    }

    fn evaluate(&self, eps: &DMatrix<f64>, env: &StatEnv<'_>) -> Result<StatValue> {
        let mut v = stat_kcm(eps, env.kernel)?;
        v.name = self.tag;
        Ok(v)
    }
}

/// `proj1`, `proj2`, `rand1`, `rand2`, `kcm`, `gp`, `gp05`.
pub fn builtin_statistics() -> StatisticRegistry {
    let mut reg = StatisticRegistry::new("statistic");
    let entries: Vec<Arc<dyn TestStatistic>> = vec![
        Arc::new(Proj1Statistic),
        Arc::new(Proj2Statistic),
        Arc::new(Rand1Statistic),
        Arc::new(Rand2Statistic),
        Arc::new(KcmStatistic::new("kcm", StatName::Kcm, KernelPolicy::Tuned)),
        Arc::new(KcmStatistic::new("gp", StatName::Gp, KernelPolicy::MedianHeuristic)),
        Arc::new(KcmStatistic::new("gp05", StatName::Gp, KernelPolicy::Fixed(0.5))),
    ];
    for e in entries {
        reg.register(e).expect("builtin statistic names are unique");
    }
    reg
}
