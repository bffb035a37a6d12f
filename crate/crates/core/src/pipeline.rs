//! One test invocation: tune the kernel, build the kernels each statistic
//! asks for, draw test locations once, and bootstrap every requested
//! statistic on shared multiplier draws.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bootstrap::{
    bootstrap_tests, builtin_multipliers, wild_bootstrap_icm, BootstrapJob, BootstrapPlan, TestReport,
};
use crate::error::{Error, Result};
use crate::kernels::{median_heuristic, KernelConfig};
use crate::models::{FittedModel, ModelTag};
use crate::orthogonal::ComponentProjectors;
use crate::seeds::{derive_seed, BOOTSTRAP, LOCATIONS, TUNING};
use crate::spectral::KernelContext;
use crate::stats::{
    builtin_statistics, TestStatistic, fit_location_sampler, sample_locations, KernelPolicy, LocationKernel, LocationSet,
    StatEnv, StatisticRegistry, DEFAULT_LOCATION_RIDGE,
};
use crate::tuning::{default_grid, tune, CvCell, TuneGrid};

/// Name of the wild-bootstrap ICM benchmark, which re-estimates the model
/// and so sits outside the statistic registry.
pub const ICM: &str = "icm";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Tuning {
    /// 5-fold CV over the default grid.
    Cv,
    Fixed { gamma: f64, lambda: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub statistics: Vec<String>,
    /// Location counts `J` for the random-location statistics. The largest
    /// set is drawn once; smaller `J` use its leading rows.
    pub locations: Vec<usize>,
    pub replicates: usize,
    pub multipliers: String,
    pub tuning: Tuning,
    /// Project residuals off the score span (false: residuals are taken as
    /// the true ones and used as given).
    pub orthogonalize: bool,
}

impl PipelineConfig {
    pub fn new(statistics: &[&str], j: usize, replicates: usize) -> Self {
        Self {
            statistics: statistics.iter().map(|s| s.to_string()).collect(),
            locations: vec![j],
            replicates,
            multipliers: "mammen".into(),
            tuning: Tuning::Cv,
            orthogonalize: true,
        }
    }
}

/// How `(γ, λ)` were chosen: CV on a train/validation split of the raw
/// residuals, then applied to the full sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRecord {
    pub mode: String,
    pub gamma: f64,
    pub lambda: f64,
    pub cv_error: Option<f64>,
    pub grid: Option<TuneGrid>,
    #[serde(skip)]
    pub cv_table: Vec<CvCell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledReport {
    /// Registry name (`proj1`, `gp05`, `icm`, …).
    pub statistic: String,
    pub locations: Option<usize>,
    pub report: TestReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub reports: Vec<LabeledReport>,
    pub tuning: Option<TuningRecord>,
    pub locations: Option<LocationSet>,
}

impl PipelineOutcome {
    pub fn get(&self, statistic: &str, locations: Option<usize>) -> Option<&LabeledReport> {
        self.reports
            .iter()
            .find(|r| r.statistic == statistic && (locations.is_none() || r.locations == locations))
    }
}

/// Runs every statistic in `cfg` on the fitted model. `y` is only needed
/// for the ICM benchmark, which refits OLS on regenerated outcomes.
pub fn run_tests(
    x: &DMatrix<f64>,
    fm: &FittedModel,
    y: Option<&DVector<f64>>,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<PipelineOutcome> {
    run_tests_with(x, fm, y, cfg, seed, &builtin_statistics())
}

pub fn run_tests_with(
    x: &DMatrix<f64>,
    fm: &FittedModel,
    y: Option<&DVector<f64>>,
    cfg: &PipelineConfig,
    seed: u64,
    registry: &StatisticRegistry,
) -> Result<PipelineOutcome> {
    if x.nrows() != fm.n() {
        return Err(Error::input("covariates and fitted model disagree on n"));
    }
    if cfg.statistics.is_empty() {
        return Err(Error::input("no statistics requested"));
    }
    if cfg.locations.contains(&0) {
        return Err(Error::input("location counts must be positive"));
    }
    let family = builtin_multipliers().get(&cfg.multipliers)?;
    let plan = BootstrapPlan::with_family(cfg.replicates, derive_seed(seed, BOOTSTRAP), family)?;

    let mut stats = Vec::new();
    let mut want_icm = false;
    for name in &cfg.statistics {
        if name == ICM {
            want_icm = true;
        } else if !stats.iter().any(|s: &Arc<dyn TestStatistic>| s.name() == name) {
            stats.push(registry.get(name)?);
        }
    }

    let tuned = stats.iter().any(|s| s.kernel_policy() == KernelPolicy::Tuned);
    let (tuning, tuned_ctx) = if tuned {
        let record = choose_parameters(x, &fm.residuals, cfg.tuning, derive_seed(seed, TUNING))?;
        let ctx = KernelContext::regularized(x, KernelConfig::gaussian(record.gamma)?, record.lambda)?;
        (Some(record), Some(ctx))
    } else {
        (None, None)
    };

    let mut plain: Vec<(KernelPolicy, KernelContext)> = Vec::new();
    for s in &stats {
        let policy = s.kernel_policy();
        if policy == KernelPolicy::Tuned || plain.iter().any(|(p, _)| *p == policy) {
            continue;
        }
        let gamma = match policy {
            KernelPolicy::MedianHeuristic => median_heuristic(x)?,
            KernelPolicy::Fixed(g) => g,
            KernelPolicy::Tuned => unreachable!(),
        };
        plain.push((policy, KernelContext::plain(x, KernelConfig::gaussian(gamma)?)?));
    }

    let needs_loc = stats.iter().any(|s| s.needs_locations());
    let mut js = cfg.locations.clone();
    js.sort_unstable();
    js.dedup();
    let (location_set, location_kernels) = match (needs_loc, js.last()) {
        (true, Some(&jmax)) => {
            let ctx = tuned_ctx
                .as_ref()
                .ok_or_else(|| Error::input("random-location statistics need a tuned kernel"))?;
            let sampler = fit_location_sampler(x, DEFAULT_LOCATION_RIDGE)?;
            let set = sample_locations(&sampler, jmax, derive_seed(seed, LOCATIONS))?;
            let full = LocationKernel::new(ctx, x, set.clone())?;
            let kernels = js
                .iter()
                .map(|&j| Ok((j, full.prefix(j)?)))
                .collect::<Result<Vec<_>>>()?;
            (Some(set), kernels)
        }
        (true, None) => return Err(Error::input("random-location statistics need a location count")),
        _ => (None, Vec::new()),
    };

    let mut jobs = Vec::new();
    let mut labels = Vec::new();
    for s in &stats {
        let kernel = match s.kernel_policy() {
            KernelPolicy::Tuned => tuned_ctx.as_ref().expect("tuned context built"),
            p => &plain.iter().find(|(q, _)| *q == p).expect("plain context built").1,
        };
        if s.needs_locations() {
            for (j, lk) in &location_kernels {
                jobs.push(BootstrapJob {
                    statistic: Arc::clone(s),
                    env: StatEnv::with_locations(kernel, lk),
                });
                labels.push((s.name().to_string(), Some(*j)));
            }
        } else {
            jobs.push(BootstrapJob {
                statistic: Arc::clone(s),
                env: StatEnv::new(kernel),
            });
            labels.push((s.name().to_string(), None));
        }
    }

    let projectors = if cfg.orthogonalize {
        Some(ComponentProjectors::from_model(fm)?)
    } else {
        None
    };
    let mut computed: Vec<LabeledReport> = if jobs.is_empty() {
        Vec::new()
    } else {
        bootstrap_tests(&fm.residuals, projectors.as_ref(), &jobs, &plan)?
            .into_iter()
            .zip(labels)
            .map(|(report, (statistic, locations))| LabeledReport {
                statistic,
                locations,
                report,
            })
            .collect()
    };

    if want_icm {
        if fm.model_tag != ModelTag::Ols {
            return Err(Error::input("the ICM wild bootstrap is only defined for the linear model"));
        }
        let y = y.ok_or_else(|| Error::input("the ICM wild bootstrap needs the outcome vector"))?;
        computed.push(LabeledReport {
            statistic: ICM.into(),
            locations: None,
            report: wild_bootstrap_icm(x, y, &plan)?,
        });
    }

    // requested order, duplicates dropped
    let mut reports = Vec::with_capacity(computed.len());
    for name in &cfg.statistics {
        if reports.iter().any(|r: &LabeledReport| &r.statistic == name) {
            continue;
        }
        reports.extend(computed.iter().filter(|r| &r.statistic == name).cloned());
    }

    Ok(PipelineOutcome {
        reports,
        tuning,
        locations: location_set,
    })
}

/// `(γ, λ)` by CV on raw residuals, or the fixed pair.
pub fn choose_parameters(x: &DMatrix<f64>, eps: &DMatrix<f64>, tuning: Tuning, seed: u64) -> Result<TuningRecord> {
    match tuning {
        Tuning::Fixed { gamma, lambda } => {
            KernelConfig::gaussian(gamma)?;
            if !(lambda.is_finite() && lambda > 0.0) {
                return Err(Error::input(format!("lambda must be positive, got {lambda}")));
            }
            Ok(TuningRecord {
                mode: "fixed".into(),
                gamma,
                lambda,
                cv_error: None,
                grid: None,
                cv_table: Vec::new(),
            })
        }
        Tuning::Cv => {
            let grid = default_grid(x, seed)?;
            let r = tune(x, eps, &grid)?;
            Ok(TuningRecord {
                mode: "cv".into(),
                gamma: r.gamma,
                lambda: r.lambda,
                cv_error: Some(r.cv_error),
                grid: Some(grid),
                cv_table: r.cv_table,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::fit_ols;
    use crate::seeds::rng_from_seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn data(n: usize, d: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = rng_from_seed(seed);
        let x = DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal));
        let y = DVector::from_fn(n, |i, _| 1.0 + x.row(i).sum() * 0.5 + rng.sample::<f64, _>(StandardNormal));
        (x, y)
    }

    #[test]
    fn full_statistic_set_runs() {
        let (x, y) = data(60, 3, 1);
        let fm = fit_ols(&x, &y).unwrap();
        let mut cfg = PipelineConfig::new(&["proj1", "icm", "rand1", "gp"], 3, 19);
        cfg.locations = vec![1, 3];
        let out = run_tests(&x, &fm, Some(&y), &cfg, 7).unwrap();
        let names: Vec<(&str, Option<usize>)> =
            out.reports.iter().map(|r| (r.statistic.as_str(), r.locations)).collect();
        assert_eq!(
            names,
            vec![("proj1", None), ("icm", None), ("rand1", Some(1)), ("rand1", Some(3)), ("gp", None)]
        );
        assert_eq!(out.locations.as_ref().unwrap().len(), 3);
        assert_eq!(out.tuning.as_ref().unwrap().mode, "cv");
        for r in &out.reports {
            assert!(r.report.p_value > 0.0 && r.report.p_value <= 1.0);
        }
        assert_eq!(out, run_tests(&x, &fm, Some(&y), &cfg, 7).unwrap());
    }

    #[test]
    fn fixed_tuning_and_errors() {
        let (x, y) = data(40, 2, 2);
        let fm = fit_ols(&x, &y).unwrap();
        let mut cfg = PipelineConfig::new(&["proj2"], 3, 9);
        cfg.tuning = Tuning::Fixed { gamma: 0.3, lambda: 0.02 };
        let out = run_tests(&x, &fm, None, &cfg, 1).unwrap();
        assert_eq!(out.reports[0].report.statistic.scale.gamma, 0.3);
        assert_eq!(out.reports[0].report.statistic.scale.lambda, Some(0.02));
        cfg.statistics = vec!["icm".into()];
        assert!(run_tests(&x, &fm, None, &cfg, 1).is_err());
        cfg.statistics = vec!["bogus".into()];
        assert!(run_tests(&x, &fm, None, &cfg, 1).is_err());
        cfg.statistics = vec!["proj1".into()];
        cfg.multipliers = "nope".into();
        assert!(run_tests(&x, &fm, None, &cfg, 1).is_err());
    }
}
