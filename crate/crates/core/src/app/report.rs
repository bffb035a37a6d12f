use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::FittedModel;
use crate::pipeline::{PipelineOutcome, TuningRecord};
use crate::stats::LocationSet;

/// `git describe` of the source tree the library was built from.
pub fn build_version() -> String {
    format!("{} ({})", env!("CARGO_PKG_VERSION"), env!("KRRCHECK_GIT_DESCRIBE"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub statistic: String,
    pub locations: Option<usize>,
    pub value: f64,
    pub p_value: f64,
    pub replicates: usize,
    pub n: usize,
    pub gamma: f64,
    pub lambda: Option<f64>,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationsRecord {
    pub points: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub covariance: Vec<f64>,
    pub seed: u64,
    pub diagonal_fallback: bool,
}

impl From<&LocationSet> for LocationsRecord {
    fn from(l: &LocationSet) -> Self {
        Self {
            points: l.points.row_iter().map(|r| r.iter().copied().collect()).collect(),
            mean: l.provenance.mean.clone(),
            covariance: l.provenance.covariance.clone(),
            seed: l.provenance.seed,
            diagonal_fallback: l.provenance.diagonal_fallback,
        }
    }
}

/// Results of one fitted model (e.g. the individual or the joint NSW test).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportGroup {
    pub name: String,
    pub model: String,
    pub n: usize,
    pub components: usize,
    pub coefficients: Vec<f64>,
    pub tuning: Option<TuningRecord>,
    pub locations: Option<LocationsRecord>,
    pub results: Vec<StatResult>,
}

impl ReportGroup {
    pub fn new(name: &str, fm: &FittedModel, outcome: &PipelineOutcome, level: f64) -> Self {
        let results = outcome
            .reports
            .iter()
            .map(|r| StatResult {
                statistic: r.statistic.clone(),
                locations: r.locations,
                value: r.report.statistic.value,
                p_value: r.report.p_value,
                replicates: r.report.replicates,
                n: r.report.statistic.scale.n,
                gamma: r.report.statistic.scale.gamma,
                lambda: r.report.statistic.scale.lambda,
                reject: r.report.p_value <= level,
            })
            .collect();
        Self {
            name: name.into(),
            model: fm.model_tag.as_str().into(),
            n: fm.n(),
            components: fm.components(),
            coefficients: fm.theta_hat.iter().copied().collect(),
            tuning: outcome.tuning.clone(),
            locations: outcome.locations.as_ref().map(LocationsRecord::from),
            results,
        }
    }

    pub fn result(&self, statistic: &str) -> Option<&StatResult> {
        self.results.iter().find(|r| r.statistic == statistic)
    }
}

/// Everything needed to reproduce and audit a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub input: Option<String>,
    pub seed: u64,
    pub level: f64,
    pub bootstrap: usize,
    pub multipliers: String,
    pub groups: Vec<ReportGroup>,
}

impl RunReport {
    pub fn group(&self, name: &str) -> Option<&ReportGroup> {
        self.groups.iter().find(|g| g.name == name)
    }
}

pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.txt";

/// Writes `report.json` and `summary.txt` into `dir`, creating it.
pub fn emit_report(report: &RunReport, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json_path = dir.join(REPORT_FILE);
    let mut json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::input(format!("cannot serialize report: {e}")))?;
    json.push('\n');
    std::fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;
    let txt_path = dir.join(SUMMARY_FILE);
    std::fs::write(&txt_path, summary(report)).map_err(|e| Error::io(&txt_path, e))?;
    Ok((json_path, txt_path))
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

pub fn summary(report: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} {}", report.tool, report.version);
    let _ = writeln!(s, "command: {}", report.command);
    if let Some(input) = &report.input {
        let _ = writeln!(s, "input: {input}");
    }
    let _ = writeln!(
        s,
        "seed: {}  bootstrap: B = {} ({})  level: {}",
        report.seed, report.bootstrap, report.multipliers, report.level
    );
    for g in &report.groups {
        let _ = writeln!(s);
        let _ = writeln!(s, "[{}] model {}, n = {}, components = {}", g.name, g.model, g.n, g.components);
        if let Some(t) = &g.tuning {
            let _ = write!(s, "  kernel: {} gamma = {:.6e}, lambda = {:.6e}", t.mode, t.gamma, t.lambda);
            if let Some(e) = t.cv_error {
                let _ = write!(s, ", cv error = {e:.6e}");
            }
            let _ = writeln!(s);
        }
        let _ = writeln!(s, "  {:<10} {:>3} {:>14} {:>9}  reject", "statistic", "J", "value", "p-value");
        for r in &g.results {
            let j = r.locations.map(|j| j.to_string()).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                s,
                "  {:<10} {:>3} {:>14.6e} {:>9.4}  {}",
                r.statistic,
                j,
                r.value,
                r.p_value,
                if r.reject { "yes" } else { "no" }
            );
        }
    }
    s
}
