use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A raw sample: covariates, outcome and an optional binary treatment.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// n×d covariate matrix.
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub treatment: Option<DVector<f64>>,
    pub covariate_names: Vec<String>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Self::with_names(x, y, None, names)
    }

    pub fn with_names(
        x: DMatrix<f64>,
        y: DVector<f64>,
        treatment: Option<DVector<f64>>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::input(format!(
                "covariates have {} rows but outcome has {}",
                x.nrows(),
                y.len()
            )));
        }
        if let Some(t) = &treatment {
            if t.len() != y.len() {
                return Err(Error::input(format!(
                    "treatment has {} rows but outcome has {}",
                    t.len(),
                    y.len()
                )));
            }
        }
        if covariate_names.len() != x.ncols() {
            return Err(Error::input("covariate name count does not match columns"));
        }
        Ok(Self {
            x,
            y,
            treatment,
            covariate_names,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn covariate(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|c| c == name)
    }
}
