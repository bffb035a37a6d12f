use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::Tuning;

/// `λ` setting: a number, or `"cv"` for cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSetting {
    Value(f64),
    Word(String),
}

impl LambdaSetting {
    pub fn parse(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("cv") {
            return Ok(LambdaSetting::Word("cv".into()));
        }
        s.parse::<f64>()
            .map(LambdaSetting::Value)
            .map_err(|_| Error::input(format!("lambda must be a number or `cv`, got {s:?}")))
    }
}

/// Run settings from a config file and/or command-line flags. Unset fields
/// fall back to defaults; [`RunConfig::overlay`] lets flags override a file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub model: Option<String>,
    pub statistics: Option<Vec<String>>,
    pub bootstrap: Option<usize>,
    pub locations: Option<usize>,
    pub level: Option<f64>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub gamma: Option<f64>,
    pub lambda: Option<LambdaSetting>,
    pub multipliers: Option<String>,
    pub y_col: Option<String>,
    pub t_col: Option<String>,
    pub x_cols: Option<Vec<String>>,
    pub workers: Option<usize>,
}

pub const DEFAULT_STATISTICS: [&str; 6] = ["proj1", "proj2", "rand1", "rand2", "gp", "gp05"];
pub const DEFAULT_BOOTSTRAP: usize = 500;
pub const DEFAULT_LOCATIONS: usize = 3;
pub const DEFAULT_LEVEL: f64 = 0.05;
pub const DEFAULT_SEED: u64 = 42;

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::input(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// `self` with every field set in `over` replaced.
    pub fn overlay(self, over: RunConfig) -> RunConfig {
        RunConfig {
            input: over.input.or(self.input),
            model: over.model.or(self.model),
            statistics: over.statistics.or(self.statistics),
            bootstrap: over.bootstrap.or(self.bootstrap),
            locations: over.locations.or(self.locations),
            level: over.level.or(self.level),
            seed: over.seed.or(self.seed),
            output: over.output.or(self.output),
            gamma: over.gamma.or(self.gamma),
            lambda: over.lambda.or(self.lambda),
            multipliers: over.multipliers.or(self.multipliers),
            y_col: over.y_col.or(self.y_col),
            t_col: over.t_col.or(self.t_col),
            x_cols: over.x_cols.or(self.x_cols),
            workers: over.workers.or(self.workers),
        }
    }

    pub fn level(&self) -> Result<f64> {
        let l = self.level.unwrap_or(DEFAULT_LEVEL);
        if !(l > 0.0 && l < 1.0) {
            return Err(Error::input(format!("level must lie in (0, 1), got {l}")));
        }
        Ok(l)
    }

    pub fn statistics(&self) -> Vec<String> {
        self.statistics
            .clone()
            .unwrap_or_else(|| DEFAULT_STATISTICS.map(String::from).to_vec())
    }

    /// Fixed `(γ, λ)` when both are numbers, CV when `λ` is `cv` or unset.
    pub fn tuning(&self) -> Result<Tuning> {
        match (&self.lambda, self.gamma) {
            (None | Some(LambdaSetting::Word(_)), None) => {
                if let Some(LambdaSetting::Word(w)) = &self.lambda {
                    if w != "cv" {
                        return Err(Error::input(format!("lambda must be a number or `cv`, got {w:?}")));
                    }
                }
                Ok(Tuning::Cv)
            }
            (Some(LambdaSetting::Value(lambda)), Some(gamma)) => Ok(Tuning::Fixed {
                gamma,
                lambda: *lambda,
            }),
            _ => Err(Error::input("fixed tuning needs both --gamma and a numeric --lambda")),
        }
    }
}
