use nalgebra::DMatrix;

use crate::app::ingest::CsvSchema;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::models::{fit_probit, joint_cate_residuals, FittedModel};
use crate::pipeline::{run_tests, PipelineConfig, PipelineOutcome};
use crate::seeds::derive_seed;

/// Raw NSW columns: treatment, outcome and the eight covariates.
pub fn nsw_schema() -> CsvSchema {
    CsvSchema {
        y_col: "re78".into(),
        t_col: Some("treat".into()),
        x_cols: ["age", "educ", "black", "hisp", "marr", "nodegree", "re74", "re75"]
            .map(String::from)
            .to_vec(),
    }
}

/// Accepted spellings of each NSW covariate.
const ALIASES: [(&str, &[&str]); 8] = [
    ("age", &["age"]),
    ("educ", &["educ", "education"]),
    ("black", &["black"]),
    ("hisp", &["hisp", "hispan", "hispanic"]),
    ("marr", &["marr", "married"]),
    ("nodegree", &["nodegree", "nodegr"]),
    ("re74", &["re74"]),
    ("re75", &["re75"]),
];

const BINARY: [&str; 4] = ["black", "hisp", "marr", "nodegree"];

fn log1p_earnings(v: f64, what: &str, row: usize) -> Result<f64> {
    if v < 0.0 {
        return Err(Error::input(format!("row {}: negative earnings in {what}: {v}", row + 1)));
    }
    Ok(v.ln_1p())
}

/// Age and education divided by 10, earnings through `log(1 + x)`; the
/// outcome is `log(1 + re78)`. Output covariates, in order: age, educ,
/// black, hisp, marr, nodegree, re74, re75.
pub fn preprocess_nsw(ds: &Dataset) -> Result<Dataset> {
    let n = ds.n();
    let t = ds
        .treatment
        .clone()
        .ok_or_else(|| Error::input("NSW data needs a treatment column"))?;
    let mut x = DMatrix::zeros(n, ALIASES.len());
    let mut names = Vec::with_capacity(ALIASES.len());
    for (j, (canon, spellings)) in ALIASES.iter().enumerate() {
        let src = spellings
            .iter()
            .find_map(|s| ds.covariate(s))
            .ok_or_else(|| Error::input(format!("NSW covariate `{canon}` is missing")))?;
        for i in 0..n {
            let v = ds.x[(i, src)];
            x[(i, j)] = match *canon {
                "age" | "educ" => v / 10.0,
                "re74" | "re75" => log1p_earnings(v, canon, i)?,
                c if BINARY.contains(&c) => {
                    if v != 0.0 && v != 1.0 {
                        return Err(Error::input(format!("row {}: `{c}` must be 0 or 1, got {v}", i + 1)));
                    }
                    v
                }
                _ => unreachable!(),
            };
        }
        names.push(canon.to_string());
    }
    let y = ds
        .y
        .iter()
        .enumerate()
        .map(|(i, &v)| log1p_earnings(v, "outcome", i))
        .collect::<Result<Vec<_>>>()?;
    Dataset::with_names(x, nalgebra::DVector::from_vec(y), Some(t), names)
}

/// Individual (propensity score) and joint (propensity score and zero
/// CATE) test results.
#[derive(Debug, Clone)]
pub struct NswOutcome {
    pub probit: FittedModel,
    pub individual: PipelineOutcome,
    pub joint_model: FittedModel,
    pub joint: PipelineOutcome,
}

/// Seed tags of the two tests.
pub const INDIVIDUAL_TAG: u64 = 1;
pub const JOINT_TAG: u64 = 2;

pub fn run_nsw_tests(ds: &Dataset, cfg: &PipelineConfig, seed: u64) -> Result<NswOutcome> {
    let t = ds
        .treatment
        .as_ref()
        .ok_or_else(|| Error::input("NSW data needs a treatment column"))?;
    let probit = fit_probit(&ds.x, t)?;
    let individual = run_tests(&ds.x, &probit, None, cfg, derive_seed(seed, INDIVIDUAL_TAG))?;
    let joint_model = joint_cate_residuals(&ds.x, &ds.y, t, &probit)?;
    let joint = run_tests(&ds.x, &joint_model, None, cfg, derive_seed(seed, JOINT_TAG))?;
    Ok(NswOutcome {
        probit,
        individual,
        joint_model,
        joint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn raw(age: f64, re74: f64) -> Dataset {
        let names = ["age", "education", "black", "hispanic", "married", "nodegree", "re74", "re75"];
        let x = DMatrix::from_row_slice(2, 8, &[age, 12.0, 1.0, 0.0, 1.0, 0.0, re74, 0.0, 25.0, 8.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        Dataset::with_names(x, DVector::from_vec(vec![0.0, 100.0]), Some(DVector::from_vec(vec![1.0, 0.0])), names.map(String::from).to_vec()).unwrap()
    }

    #[test]
    fn transforms() {
        let p = preprocess_nsw(&raw(30.0, 0.0)).unwrap();
        assert_eq!(p.x[(0, 0)], 3.0);
        assert_eq!(p.x[(0, 1)], 1.2);
        assert_eq!(p.x[(0, 6)], 0.0);
        assert_eq!(p.y[0], 0.0);
        assert!((p.y[1] - 101f64.ln()).abs() < 1e-15);
        assert_eq!(p.d(), 8);
        let binary = (0..8)
            .filter(|&j| p.x.column(j).iter().all(|&v| v == 0.0 || v == 1.0))
            .count();
        assert!(binary >= 4);
        assert_eq!(p.covariate_names[3], "hisp");
    }

    #[test]
    fn negative_earnings_rejected() {
        let err = preprocess_nsw(&raw(30.0, -5.0)).unwrap_err().to_string();
        assert!(err.contains("negative earnings"), "{err}");
    }
}
