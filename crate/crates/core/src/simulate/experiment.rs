use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{generate, DgpId, DgpSpec};
use crate::error::{Error, Result};
use crate::format::sig17;
use crate::models::{fit_ols, FittedModel, ModelTag};
use crate::pipeline::{run_tests, PipelineConfig, Tuning, ICM};
use crate::seeds::{derive_path, derive_seed, DATA, REPLICATION};

/// Which residuals the statistics are computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualMode {
    /// OLS residuals, orthogonalized.
    #[default]
    Estimated,
    /// Residuals at the generating coefficients, used as given.
    True,
}

impl Default for Tuning {
    fn default() -> Self {
        Tuning::Cv
    }
}

fn default_statistics() -> Vec<String> {
    ["proj1", "proj2", "rand1", "rand2", "gp", "icm"].map(String::from).to_vec()
}
fn default_locations() -> usize {
    3
}
fn default_level() -> f64 {
    0.05
}
fn default_multipliers() -> String {
    "mammen".into()
}

/// One Monte Carlo cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub dgp: DgpId,
    pub n: usize,
    pub d: usize,
    #[serde(default = "default_statistics")]
    pub statistics: Vec<String>,
    pub replications: usize,
    pub bootstrap: usize,
    #[serde(default = "default_locations")]
    pub locations: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    pub seed: u64,
    #[serde(default)]
    pub residuals: ResidualMode,
    #[serde(default = "default_multipliers")]
    pub multipliers: String,
    #[serde(default)]
    pub tuning: Tuning,
}

impl ExperimentSpec {
    /// Desk-scale defaults: all six statistics, `J = 3`, 5% level.
    pub fn new(dgp: DgpId, n: usize, d: usize, replications: usize, bootstrap: usize, seed: u64) -> Self {
        Self {
            dgp,
            n,
            d,
            statistics: default_statistics(),
            replications,
            bootstrap,
            locations: default_locations(),
            level: default_level(),
            seed,
            residuals: ResidualMode::Estimated,
            multipliers: default_multipliers(),
            tuning: Tuning::Cv,
        }
    }

    pub fn with_statistics(mut self, stats: &[&str]) -> Self {
        self.statistics = stats.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        DgpSpec::new(self.dgp, self.n, self.d, 0)?;
        if self.replications == 0 || self.bootstrap == 0 {
            return Err(Error::input("replications and bootstrap count must be at least 1"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::input(format!("level must lie in (0, 1), got {}", self.level)));
        }
        if self.residuals == ResidualMode::True && self.statistics.iter().any(|s| s == ICM) {
            return Err(Error::input("the ICM benchmark re-estimates the model and needs estimated residuals"));
        }
        Ok(())
    }

    /// Seed of replication `r`; data, tuning, locations and bootstrap draw
    /// from further derivations of it.
    pub fn replication_seed(&self, r: usize) -> u64 {
        derive_path(self.seed, &[REPLICATION, r as u64])
    }

    fn pipeline(&self, locations: Vec<usize>) -> PipelineConfig {
        PipelineConfig {
            statistics: self.statistics.clone(),
            locations,
            replicates: self.bootstrap,
            multipliers: self.multipliers.clone(),
            tuning: self.tuning,
            orthogonalize: self.residuals == ResidualMode::Estimated,
        }
    }
}

/// Serialized form of an experiment file: a list of `[[cell]]` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    #[serde(rename = "cell")]
    pub cells: Vec<ExperimentSpec>,
}

/// Reads either a single cell or a `[[cell]]` list from TOML.
pub fn parse_experiments(text: &str) -> Result<Vec<ExperimentSpec>> {
    let cells = match toml::from_str::<ExperimentFile>(text) {
        Ok(f) => f.cells,
        Err(list_err) => match toml::from_str::<ExperimentSpec>(text) {
            Ok(one) => vec![one],
            Err(one_err) => {
                return Err(Error::input(format!(
                    "experiment config is neither a cell nor a [[cell]] list: {one_err}; {list_err}"
                )))
            }
        },
    };
    if cells.is_empty() {
        return Err(Error::input("experiment config has no cells"));
    }
    for c in &cells {
        c.validate()?;
    }
    Ok(cells)
}

pub fn load_experiments(path: &Path) -> Result<Vec<ExperimentSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_experiments(&text)
}

/// `(statistic, J)` column label.
pub type Label = (String, Option<usize>);

/// p-values of every replication of one replication run.
pub fn run_replication(spec: &ExperimentSpec, r: usize, locations: &[usize]) -> Result<Vec<(Label, f64)>> {
    let seed = spec.replication_seed(r);
    let data = generate(&DgpSpec::new(spec.dgp, spec.n, spec.d, derive_seed(seed, DATA))?)?;
    let ds = &data.dataset;
    let fm = match spec.residuals {
        ResidualMode::Estimated => fit_ols(&ds.x, &ds.y)?,
        ResidualMode::True => {
            let (alpha, slope) = spec.dgp.null_coefficients();
            let mut theta = nalgebra::DVector::from_element(spec.d + 1, slope);
            theta[0] = alpha;
            FittedModel::from_parts(
                theta,
                DMatrix::from_column_slice(spec.n, 1, data.true_residual.as_slice()),
                vec![DMatrix::zeros(spec.n, 0)],
                ModelTag::Ols,
            )?
        }
    };
    let out = run_tests(&ds.x, &fm, Some(&ds.y), &spec.pipeline(locations.to_vec()), seed)?;
    Ok(out
        .reports
        .into_iter()
        .map(|r| ((r.statistic, r.locations), r.report.p_value))
        .collect())
}

/// p-values of every statistic over the `R` replications of a cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub spec: ExperimentSpec,
    pub labels: Vec<Label>,
    /// `p_values[k][r]`: statistic `k`, replication `r`.
    pub p_values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub statistic: String,
    pub locations: Option<usize>,
    pub level: f64,
    pub rejection_rate: f64,
    pub mc_se: f64,
}

fn rate_row(label: &Label, ps: &[f64], level: f64) -> RateRow {
    let r = ps.len() as f64;
    let rate = ps.iter().filter(|&&p| p <= level).count() as f64 / r;
    RateRow {
        statistic: label.0.clone(),
        locations: label.1,
        level,
        rejection_rate: rate,
        mc_se: (rate * (1.0 - rate) / r).sqrt(),
    }
}

impl CellResult {
    fn position(&self, statistic: &str) -> Option<usize> {
        self.labels.iter().position(|(s, _)| s == statistic)
    }

    pub fn p_values_of(&self, statistic: &str) -> Option<&[f64]> {
        self.position(statistic).map(|k| self.p_values[k].as_slice())
    }

    /// Proportion of replications with `p ≤ level`.
    pub fn rejection_rate(&self, statistic: &str, level: f64) -> Option<f64> {
        let k = self.position(statistic)?;
        Some(rate_row(&self.labels[k], &self.p_values[k], level).rejection_rate)
    }

    pub fn rows(&self, level: f64) -> Vec<RateRow> {
        self.labels
            .iter()
            .zip(&self.p_values)
            .map(|(l, ps)| rate_row(l, ps, level))
            .collect()
    }
}

fn collect(spec: &ExperimentSpec, per_rep: Vec<Vec<(Label, f64)>>) -> Result<CellResult> {
    let labels: Vec<Label> = per_rep[0].iter().map(|(l, _)| l.clone()).collect();
    let mut p_values = vec![Vec::with_capacity(per_rep.len()); labels.len()];
    for rep in &per_rep {
        if rep.len() != labels.len() || rep.iter().zip(&labels).any(|((l, _), m)| l != m) {
            return Err(Error::numerical("replications produced different statistic sets"));
        }
        for (k, (_, p)) in rep.iter().enumerate() {
            p_values[k].push(*p);
        }
    }
    Ok(CellResult {
        spec: spec.clone(),
        labels,
        p_values,
    })
}

/// Runs `R` independent replications (concurrently; results are ordered
/// by replication index).
pub fn run_cell(spec: &ExperimentSpec) -> Result<CellResult> {
    spec.validate()?;
    let per_rep = (0..spec.replications)
        .into_par_iter()
        .map(|r| run_replication(spec, r, &[spec.locations]))
        .collect::<Result<Vec<_>>>()?;
    collect(spec, per_rep)
}

pub const MAX_POWER_J: usize = 15;

/// Rejection rate of the random-location statistics for each `J`.
///
/// Each replication draws `max J` locations once; smaller `J` use their
/// leading rows, so the curves share data, tuning and multipliers.
pub fn run_power_vs_j(spec: &ExperimentSpec, j_values: &[usize]) -> Result<Vec<RateRow>> {
    if j_values.is_empty() {
        return Err(Error::input("no location counts given"));
    }
    if let Some(bad) = j_values.iter().find(|&&j| j == 0 || j > MAX_POWER_J) {
        return Err(Error::input(format!("J = {bad} outside 1..={MAX_POWER_J}")));
    }
    let mut js = j_values.to_vec();
    js.sort_unstable();
    js.dedup();
    let mut spec = spec.clone();
    spec.statistics.retain(|s| s == "rand1" || s == "rand2");
    if spec.statistics.is_empty() {
        spec.statistics = vec!["rand1".into(), "rand2".into()];
    }
    spec.validate()?;
    let per_rep = (0..spec.replications)
        .into_par_iter()
        .map(|r| run_replication(&spec, r, &js))
        .collect::<Result<Vec<_>>>()?;
    let cell = collect(&spec, per_rep)?;
    let mut rows = cell.rows(spec.level);
    let order = |s: &str| spec.statistics.iter().position(|t| t == s).unwrap_or(usize::MAX);
    rows.sort_by_key(|r| (r.locations, order(&r.statistic)));
    Ok(rows)
}

/// Runs `f` on a pool of `workers` threads (`None`: rayon's default).
/// Results do not depend on the worker count.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::input("worker count must be at least 1")),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::numerical(format!("could not start worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::io(path, std::io::Error::other(e))
}

/// One row per (cell, statistic):
/// `dgp, n, d, statistic, J, level, rejection_rate, mc_se, replications, bootstrap`.
pub fn write_cell_table(path: &Path, cells: &[CellResult]) -> Result<()> {
    let err = csv_err(path);
    let mut w = csv::Writer::from_path(path).map_err(&err)?;
    w.write_record([
        "dgp",
        "n",
        "d",
        "statistic",
        "J",
        "level",
        "rejection_rate",
        "mc_se",
        "replications",
        "bootstrap",
    ])
    .map_err(&err)?;
    for c in cells {
        for row in c.rows(c.spec.level) {
            w.write_record([
                c.spec.dgp.to_string(),
                c.spec.n.to_string(),
                c.spec.d.to_string(),
                row.statistic.clone(),
                row.locations.map(|j| j.to_string()).unwrap_or_default(),
                sig17(row.level),
                sig17(row.rejection_rate),
                sig17(row.mc_se),
                c.spec.replications.to_string(),
                c.spec.bootstrap.to_string(),
            ])
            .map_err(&err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `J, statistic, rejection_rate, mc_se`, sorted by `J`.
pub fn write_power_table(path: &Path, rows: &[RateRow]) -> Result<()> {
    let err = csv_err(path);
    let mut w = csv::Writer::from_path(path).map_err(&err)?;
    w.write_record(["J", "statistic", "rejection_rate", "mc_se"]).map_err(&err)?;
    for r in rows {
        w.write_record([
            r.locations.map(|j| j.to_string()).unwrap_or_default(),
            r.statistic.clone(),
            sig17(r.rejection_rate),
            sig17(r.mc_se),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
