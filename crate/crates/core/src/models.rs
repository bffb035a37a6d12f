//! Residual providers: OLS mean regression, probit propensity score and the
//! joint propensity + zero-CATE residual system.
//!
//! Every fit yields residuals `ε̂` (one column per component) and, per
//! component, the score matrix `G` whose row `i` is `∇_θ ε(sᵢ; θ)` at `θ̂`.
//! An intercept column is always prepended to the covariates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelTag {
    Ols,
    Probit,
    ProbitCateJoint,
}

impl ModelTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelTag::Ols => "ols",
            ModelTag::Probit => "probit",
            ModelTag::ProbitCateJoint => "probit_cate_joint",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FittedModel {
    pub theta_hat: DVector<f64>,
    /// n×q residual matrix.
    pub residuals: DMatrix<f64>,
    /// One n×p score matrix per residual component.
    pub scores: Vec<DMatrix<f64>>,
    pub model_tag: ModelTag,
}

impl FittedModel {
    /// Assemble a fitted model from externally computed parts.
    pub fn from_parts(
        theta_hat: DVector<f64>,
        residuals: DMatrix<f64>,
        scores: Vec<DMatrix<f64>>,
        model_tag: ModelTag,
    ) -> Result<Self> {
        if scores.len() != residuals.ncols() {
            return Err(Error::input(format!(
                "{} residual components but {} score matrices",
                residuals.ncols(),
                scores.len()
            )));
        }
        if let Some(bad) = scores.iter().position(|g| g.nrows() != residuals.nrows()) {
            return Err(Error::input(format!(
                "score matrix {} has {} rows, residuals have {}",
                bad,
                scores[bad].nrows(),
                residuals.nrows()
            )));
        }
        Ok(Self {
            theta_hat,
            residuals,
            scores,
            model_tag,
        })
    }

    pub fn n(&self) -> usize {
        self.residuals.nrows()
    }

    pub fn components(&self) -> usize {
        self.residuals.ncols()
    }
}

/// `[1, X]`.
pub fn augment(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone().insert_column(0, 1.0)
}

/// Columns that are (numerically) linear combinations of earlier columns,
/// by modified Gram–Schmidt. Indices refer to the augmented matrix, so 0 is
/// the intercept.
fn dependent_columns(xa: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..xa.ncols() {
        let col = xa.column(j).into_owned();
        let scale = col.norm();
        let mut r = col;
        for q in &basis {
            let c = q.dot(&r);
            r.axpy(-c, q, 1.0);
        }
        let rn = r.norm();
        if scale == 0.0 || rn <= 1e-10 * scale {
            dependent.push(j);
        } else {
            basis.push(r / rn);
        }
    }
    dependent
}

fn column_label(j: usize) -> String {
    if j == 0 {
        "intercept".into()
    } else {
        format!("x{j}")
    }
}

/// Least squares `θ̂ = argmin ‖Y − [1, X]θ‖²` through a QR factorization.
pub fn ols_coefficients(xa: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let qr = xa.clone().qr();
    let rhs = qr.q().tr_mul(y);
    qr.r()
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::numerical("triangular solve failed in least squares"))
}

pub fn fit_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<FittedModel> {
    let n = x.nrows();
    let d = x.ncols();
    if y.len() != n {
        return Err(Error::input(format!("X has {n} rows, Y has {}", y.len())));
    }
    if n <= d + 1 {
        return Err(Error::input(format!(
            "OLS needs more than d + 1 = {} observations, got {n}",
            d + 1
        )));
    }
    let xa = augment(x);
    let dependent = dependent_columns(&xa);
    if !dependent.is_empty() {
        let names: Vec<String> = dependent.into_iter().map(column_label).collect();
        return Err(Error::input(format!(
            "design matrix is rank deficient; dependent columns: {}",
            names.join(", ")
        )));
    }
    let theta = ols_coefficients(&xa, y)?;
    let resid = y - &xa * &theta;
    Ok(FittedModel {
        theta_hat: theta,
        residuals: DMatrix::from_column_slice(n, 1, resid.as_slice()),
        scores: vec![-xa],
        model_tag: ModelTag::Ols,
    })
}

/// Standard normal cdf.
pub fn norm_cdf(s: f64) -> f64 {
    0.5 * erfc(-s / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(s: f64) -> f64 {
    (-0.5 * s * s).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn ln_norm_cdf(s: f64) -> f64 {
    if s > -30.0 {
        norm_cdf(s).ln()
    } else {
        // leading term of the Mills-ratio expansion
        -0.5 * s * s - (-s).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }
}

/// `φ(s)/Φ(s)`, stable in the far left tail.
fn inverse_mills(s: f64) -> f64 {
    if s > -30.0 {
        norm_pdf(s) / norm_cdf(s)
    } else {
        -s / (1.0 - 1.0 / (s * s))
    }
}

fn check_binary(t: &DVector<f64>) -> Result<()> {
    if let Some(i) = t.iter().position(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::input(format!(
            "treatment must be 0/1; row {} has {}",
            i + 1,
            t[i]
        )));
    }
    let treated = t.iter().filter(|&&v| v == 1.0).count();
    if treated == 0 || treated == t.len() {
        return Err(Error::input("treatment vector contains a single class"));
    }
    Ok(())
}

fn probit_loglik(xa: &DMatrix<f64>, t: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let s = xa * beta;
    s.iter()
        .zip(t.iter())
        .map(|(&si, &ti)| if ti == 1.0 { ln_norm_cdf(si) } else { ln_norm_cdf(-si) })
        .sum()
}

/// Gradient and negative Hessian of the probit log-likelihood.
fn probit_derivatives(
    xa: &DMatrix<f64>,
    t: &DVector<f64>,
    beta: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let s = xa * beta;
    let p = xa.ncols();
    let mut grad = DVector::zeros(p);
    let mut info = DMatrix::zeros(p, p);
    for i in 0..xa.nrows() {
        let si = s[i];
        // generalized residual and its negative derivative in s
        let (lam, w) = if t[i] == 1.0 {
            let l = inverse_mills(si);
            (l, l * (l + si))
        } else {
            let l = -inverse_mills(-si);
            (l, l * (l + si))
        };
        let row = xa.row(i);
        grad.axpy(lam, &row.transpose(), 1.0);
        info.ger(w, &row.transpose(), &row.transpose(), 1.0);
    }
    (grad, info)
}

/// `T − Φ([1, X]β)`.
pub fn probit_residual(xa: &DMatrix<f64>, t: &DVector<f64>, beta: &DVector<f64>) -> DVector<f64> {
    let s = xa * beta;
    DVector::from_iterator(t.len(), t.iter().zip(s.iter()).map(|(&ti, &si)| ti - norm_cdf(si)))
}

/// Score of [`probit_residual`]: row `i` is `−φ(sᵢ) xᵢ`.
pub fn probit_residual_scores(xa: &DMatrix<f64>, beta: &DVector<f64>) -> DMatrix<f64> {
    let s = xa * beta;
    let mut g = xa.clone();
    for (i, si) in s.iter().enumerate() {
        let scale = -norm_pdf(*si);
        g.row_mut(i).scale_mut(scale);
    }
    g
}

const PROBIT_TOL: f64 = 1e-8;
const PROBIT_MAX_ITER: usize = 100;

/// Probit maximum likelihood by Newton–Raphson with step halving, started
/// at `β = 0`.
pub fn fit_probit(x: &DMatrix<f64>, t: &DVector<f64>) -> Result<FittedModel> {
    let n = x.nrows();
    if t.len() != n {
        return Err(Error::input(format!("X has {n} rows, T has {}", t.len())));
    }
    check_binary(t)?;
    let xa = augment(x);
    let p = xa.ncols();
    if n <= p {
        return Err(Error::input(format!("probit needs more than {p} observations, got {n}")));
    }
    let mut beta = DVector::zeros(p);
    let mut ll = probit_loglik(&xa, t, &beta);
    let mut converged = false;
    for _ in 0..PROBIT_MAX_ITER {
        let (grad, info) = probit_derivatives(&xa, t, &beta);
        if grad.norm() <= PROBIT_TOL {
            converged = true;
            break;
        }
        let step = info
            .cholesky()
            .ok_or_else(|| {
                Error::Estimation("probit information matrix is not positive definite".into())
            })?
            .solve(&grad);
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let candidate = &beta + &step * scale;
            let cand_ll = probit_loglik(&xa, t, &candidate);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-12 * ll.abs() {
                beta = candidate;
                ll = cand_ll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted || !beta.iter().all(|b| b.is_finite()) || beta.amax() > 1e6 {
            return Err(Error::Estimation(
                "probit Newton iterations diverged (possible perfect separation)".into(),
            ));
        }
    }
    if !converged {
        let (grad, _) = probit_derivatives(&xa, t, &beta);
        if grad.norm() > PROBIT_TOL {
            return Err(Error::Estimation(format!(
                "probit did not converge in {PROBIT_MAX_ITER} iterations (|grad| = {:e}); possible separation",
                grad.norm()
            )));
        }
    }
    let resid = probit_residual(&xa, t, &beta);
    if resid.amax() < 1e-6 {
        return Err(Error::Estimation(
            "probit fit classifies every observation with certainty (perfect separation)".into(),
        ));
    }
    let scores = probit_residual_scores(&xa, &beta);
    Ok(FittedModel {
        theta_hat: beta,
        residuals: DMatrix::from_column_slice(n, 1, resid.as_slice()),
        scores: vec![scores],
        model_tag: ModelTag::Probit,
    })
}

/// Gradient of the probit log-likelihood, exposed for first-order checks.
pub fn probit_score(x: &DMatrix<f64>, t: &DVector<f64>, beta: &DVector<f64>) -> DVector<f64> {
    probit_derivatives(&augment(x), t, beta).0
}

/// Lower bound on fitted propensities for the CATE residual.
pub const OVERLAP_DELTA: f64 = 1e-6;

/// `Y(T − Φ) / (Φ(1 − Φ))` with `Φ = Φ([1, X]β)`.
pub fn cate_residual(
    xa: &DMatrix<f64>,
    y: &DVector<f64>,
    t: &DVector<f64>,
    beta: &DVector<f64>,
) -> DVector<f64> {
    let s = xa * beta;
    DVector::from_fn(y.len(), |i, _| {
        let p = norm_cdf(s[i]);
        y[i] * (t[i] - p) / (p * (1.0 - p))
    })
}

/// Analytic gradient of [`cate_residual`] in `β`:
/// `∂/∂s [Y(T−p)/(p(1−p))] = −Yφ(s) [p(1−p) + (T−p)(1−2p)] / (p(1−p))²`.
pub fn cate_residual_scores(
    xa: &DMatrix<f64>,
    y: &DVector<f64>,
    t: &DVector<f64>,
    beta: &DVector<f64>,
) -> DMatrix<f64> {
    let s = xa * beta;
    let mut g = xa.clone();
    for i in 0..xa.nrows() {
        let p = norm_cdf(s[i]);
        let v = p * (1.0 - p);
        let ds = -y[i] * norm_pdf(s[i]) * (v + (t[i] - p) * (1.0 - 2.0 * p)) / (v * v);
        g.row_mut(i).scale_mut(ds);
    }
    g
}

/// Two-component residual for the joint hypothesis "probit propensity is
/// correct and the CATE is zero".
pub fn joint_cate_residuals(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    t: &DVector<f64>,
    fitted_probit: &FittedModel,
) -> Result<FittedModel> {
    if fitted_probit.model_tag != ModelTag::Probit {
        return Err(Error::input("joint CATE residuals need a fitted probit model"));
    }
    let n = x.nrows();
    if y.len() != n || t.len() != n || fitted_probit.n() != n {
        return Err(Error::input("X, Y, T and the probit fit disagree on n"));
    }
    let xa = augment(x);
    let beta = &fitted_probit.theta_hat;
    if beta.len() != xa.ncols() {
        return Err(Error::input("probit coefficients do not match the covariates"));
    }
    let s = &xa * beta;
    let offending: Vec<usize> = s
        .iter()
        .enumerate()
        .filter(|(_, &si)| {
            let p = norm_cdf(si);
            !(p > OVERLAP_DELTA && p < 1.0 - OVERLAP_DELTA)
        })
        .map(|(i, _)| i + 1)
        .collect();
    if !offending.is_empty() {
        return Err(Error::input(format!(
            "fitted propensities outside ({OVERLAP_DELTA:e}, 1 − {OVERLAP_DELTA:e}) at rows {offending:?}"
        )));
    }
    let r1 = probit_residual(&xa, t, beta);
    let r2 = cate_residual(&xa, y, t, beta);
    let mut residuals = DMatrix::zeros(n, 2);
    residuals.set_column(0, &r1);
    residuals.set_column(1, &r2);
    Ok(FittedModel {
        theta_hat: beta.clone(),
        residuals,
        scores: vec![
            probit_residual_scores(&xa, beta),
            cate_residual_scores(&xa, y, t, beta),
        ],
        model_tag: ModelTag::ProbitCateJoint,
    })
}
