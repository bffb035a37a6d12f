//! Entry points shared by the command-line front end: CSV ingestion, NSW
//! preprocessing, run configuration and report files.

mod config;
mod ingest;
mod nsw;
mod report;

use std::path::Path;

use nalgebra::DMatrix;

pub use config::{
    LambdaSetting, RunConfig, DEFAULT_BOOTSTRAP, DEFAULT_LEVEL, DEFAULT_LOCATIONS, DEFAULT_SEED,
    DEFAULT_STATISTICS,
};
pub use ingest::{ingest_csv, read_csv, CsvSchema};
pub use nsw::{nsw_schema, preprocess_nsw, run_nsw_tests, NswOutcome};
pub use report::{
    build_version, emit_report, read_report, summary, LocationsRecord, ReportGroup, RunReport, StatResult,
    REPORT_FILE, SUMMARY_FILE,
};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernels::KernelConfig;
use crate::models::{fit_ols, fit_probit, joint_cate_residuals};
use crate::pipeline::{choose_parameters, run_tests, PipelineConfig, Tuning};
use crate::seeds::{derive_seed, LOCATIONS, TUNING};
use crate::spectral::KernelContext;
use crate::stats::{fit_location_sampler, sample_locations, DEFAULT_LOCATION_RIDGE};
use crate::tuning::{default_grid, tune, write_cv_table, TuneResult};
use crate::witness::{default_grid_2d, witness_grid_export, WitnessField, DEFAULT_GRID_SIDE};

/// Model whose residuals are tested.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelChoice {
    /// Linear regression of the outcome on the covariates.
    Ols,
    /// Probit propensity score of the treatment.
    Probit,
    /// Probit propensity score and a zero treatment effect, jointly.
    Joint,
    /// NSW preprocessing, then the probit and joint tests.
    Nsw,
}

impl ModelChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ols" => Ok(Self::Ols),
            "probit" => Ok(Self::Probit),
            "joint" => Ok(Self::Joint),
            "nsw" => Ok(Self::Nsw),
            _ => Err(Error::input(format!("unknown model `{s}`; available: ols, probit, joint, nsw"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ols => "ols",
            Self::Probit => "probit",
            Self::Joint => "joint",
            Self::Nsw => "nsw",
        }
    }
}

fn pipeline_config(cfg: &RunConfig) -> Result<PipelineConfig> {
    Ok(PipelineConfig {
        statistics: cfg.statistics(),
        locations: vec![cfg.locations.unwrap_or(DEFAULT_LOCATIONS)],
        replicates: cfg.bootstrap.unwrap_or(DEFAULT_BOOTSTRAP),
        multipliers: cfg.multipliers.clone().unwrap_or_else(|| "mammen".into()),
        tuning: cfg.tuning()?,
        orthogonalize: true,
    })
}

/// Runs the requested model's tests on an already loaded data set.
pub fn run_model(ds: &Dataset, model: ModelChoice, cfg: &RunConfig) -> Result<Vec<ReportGroup>> {
    let pc = pipeline_config(cfg)?;
    let level = cfg.level()?;
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let treatment = || {
        ds.treatment
            .as_ref()
            .ok_or_else(|| Error::input(format!("model `{}` needs a treatment column", model.as_str())))
    };
    match model {
        ModelChoice::Ols => {
            let fm = fit_ols(&ds.x, &ds.y)?;
            let out = run_tests(&ds.x, &fm, Some(&ds.y), &pc, seed)?;
            Ok(vec![ReportGroup::new("ols", &fm, &out, level)])
        }
        ModelChoice::Probit => {
            let fm = fit_probit(&ds.x, treatment()?)?;
            let out = run_tests(&ds.x, &fm, None, &pc, seed)?;
            Ok(vec![ReportGroup::new("individual", &fm, &out, level)])
        }
        ModelChoice::Joint => {
            let t = treatment()?;
            let probit = fit_probit(&ds.x, t)?;
            let fm = joint_cate_residuals(&ds.x, &ds.y, t, &probit)?;
            let out = run_tests(&ds.x, &fm, None, &pc, seed)?;
            Ok(vec![ReportGroup::new("joint", &fm, &out, level)])
        }
        ModelChoice::Nsw => {
            let prepared = preprocess_nsw(ds)?;
            let o = run_nsw_tests(&prepared, &pc, seed)?;
            Ok(vec![
                ReportGroup::new("individual", &o.probit, &o.individual, level),
                ReportGroup::new("joint", &o.joint_model, &o.joint, level),
            ])
        }
    }
}

/// Schema from the config, or the NSW layout for `model = nsw`.
pub fn schema_for(cfg: &RunConfig, model: ModelChoice) -> Result<CsvSchema> {
    if model == ModelChoice::Nsw && cfg.y_col.is_none() && cfg.x_cols.is_none() {
        let mut s = nsw_schema();
        if let Some(t) = &cfg.t_col {
            s.t_col = Some(t.clone());
        }
        return Ok(s);
    }
    let needs_t = model != ModelChoice::Ols;
    let y_col = cfg.y_col.clone().ok_or_else(|| Error::input("outcome column (--y-col) is required"))?;
    let x_cols = cfg
        .x_cols
        .clone()
        .ok_or_else(|| Error::input("covariate columns (--x-cols) are required"))?;
    if needs_t && cfg.t_col.is_none() {
        return Err(Error::input(format!("model `{}` needs a treatment column (--t-col)", model.as_str())));
    }
    Ok(CsvSchema {
        y_col,
        t_col: cfg.t_col.clone(),
        x_cols,
    })
}

/// The `test` command: ingest, fit, test, and assemble the report.
pub fn run_test_command(cfg: &RunConfig) -> Result<RunReport> {
    let model = ModelChoice::parse(cfg.model.as_deref().unwrap_or("ols"))?;
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| Error::input("an input CSV (--input) is required"))?;
    let schema = schema_for(cfg, model)?;
    let ds = ingest_csv(input, &schema)?;
    let groups = run_model(&ds, model, cfg)?;
    Ok(RunReport {
        tool: "krrcheck".into(),
        version: build_version(),
        command: format!("test --model {}", model.as_str()),
        input: Some(input.display().to_string()),
        seed: cfg.seed.unwrap_or(DEFAULT_SEED),
        level: cfg.level()?,
        bootstrap: cfg.bootstrap.unwrap_or(DEFAULT_BOOTSTRAP),
        multipliers: cfg.multipliers.clone().unwrap_or_else(|| "mammen".into()),
        groups,
    })
}

/// Number of MVN-sampled evaluation points when `d ≠ 2`.
pub const WITNESS_SAMPLE_POINTS: usize = 1000;

/// Witness of residuals `eps` on covariates `x`: the default plane grid for
/// `d = 2`, otherwise points drawn from the fitted covariate MVN.
pub fn witness_for(x: &DMatrix<f64>, eps: &DMatrix<f64>, tuning: Tuning, seed: u64) -> Result<WitnessField> {
    let record = choose_parameters(x, eps, tuning, derive_seed(seed, TUNING))?;
    let ctx = KernelContext::regularized(x, KernelConfig::gaussian(record.gamma)?, record.lambda)?;
    let grid = if x.ncols() == 2 {
        default_grid_2d(x, DEFAULT_GRID_SIDE)?
    } else {
        let sampler = fit_location_sampler(x, DEFAULT_LOCATION_RIDGE)?;
        sample_locations(&sampler, WITNESS_SAMPLE_POINTS, derive_seed(seed, LOCATIONS))?.points
    };
    WitnessField::compute(x, eps, &ctx, grid)
}

/// Ingests `cfg.input` and returns the covariates with the residuals of the
/// configured model (OLS residuals, or probit residuals for the treatment
/// models; `nsw` applies its preprocessing first).
pub fn model_residuals(cfg: &RunConfig) -> Result<(Dataset, DMatrix<f64>)> {
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| Error::input("an input CSV (--input) is required"))?;
    let model = ModelChoice::parse(cfg.model.as_deref().unwrap_or("ols"))?;
    let ds = ingest_csv(input, &schema_for(cfg, model)?)?;
    let ds = if model == ModelChoice::Nsw { preprocess_nsw(&ds)? } else { ds };
    let eps = match model {
        ModelChoice::Ols => fit_ols(&ds.x, &ds.y)?.residuals,
        _ => {
            let t = ds.treatment.as_ref().ok_or_else(|| Error::input("treatment column required"))?;
            fit_probit(&ds.x, t)?.residuals
        }
    };
    Ok((ds, eps))
}

pub const CV_TABLE_FILE: &str = "cv_table.csv";
pub const WITNESS_FILE: &str = "witness_grid.csv";

/// Writes `cv_table.csv` for a tuning pass on the model residuals of a CSV.
pub fn tune_csv(cfg: &RunConfig, out: &Path) -> Result<TuneResult> {
    let (ds, eps) = model_residuals(cfg)?;
    let grid = default_grid(&ds.x, derive_seed(cfg.seed.unwrap_or(DEFAULT_SEED), TUNING))?;
    let r = tune(&ds.x, &eps, &grid)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_cv_table(&out.join(CV_TABLE_FILE), &r.cv_table)?;
    Ok(r)
}

/// Writes `witness_grid.csv` for the model residuals of a CSV.
pub fn witness_csv(cfg: &RunConfig, out: &Path) -> Result<WitnessField> {
    let (ds, eps) = model_residuals(cfg)?;
    let field = witness_for(&ds.x, &eps, cfg.tuning()?, cfg.seed.unwrap_or(DEFAULT_SEED))?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    witness_grid_export(&field, &out.join(WITNESS_FILE))?;
    Ok(field)
}
