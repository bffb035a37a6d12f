//! Projection `Π̂ = I − G(GᵀG)⁻¹Gᵀ` off the span of the model scores.
//!
//! Applying `Π̂` to the residuals removes the first-order effect of
//! estimating `θ`. The projector is never formed as an n×n matrix; it keeps
//! an orthonormal basis `Q` of `colspace(G)` and applies `v ↦ v − Q(Qᵀv)`.
//! The basis comes from a column-pivoted QR of `G`; diagonal entries of `R`
//! below `1e−10·|R₁₁|` mark the numerical rank.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::models::FittedModel;

const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Projector {
    scores: DMatrix<f64>,
    basis: DMatrix<f64>,
}

pub fn build_projector(g: &DMatrix<f64>) -> Result<Projector> {
    let (n, p) = g.shape();
    if n <= p {
        return Err(Error::input(format!(
            "projection needs more observations than score columns (n = {n}, p = {p})"
        )));
    }
    if p == 0 {
        return Ok(Projector {
            scores: g.clone(),
            basis: DMatrix::zeros(n, 0),
        });
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("score matrix has non-finite entries"));
    }
    let qr = g.clone().col_piv_qr();
    let r = qr.r();
    let lead = r[(0, 0)].abs();
    let rank = (0..p)
        .take_while(|&i| lead > 0.0 && r[(i, i)].abs() > RANK_TOL * lead)
        .count();
    let basis = qr.q().columns(0, rank).into_owned();
    Ok(Projector {
        scores: g.clone(),
        basis,
    })
}

impl Projector {
    pub fn scores(&self) -> &DMatrix<f64> {
        &self.scores
    }

    /// Diagonal of `I − Π̂`, the leverage of each observation.
    pub fn leverage(&self) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.basis.row_iter().map(|r| r.norm_squared()))
    }

    /// Numerical rank of the score matrix.
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn n(&self) -> usize {
        self.basis.nrows()
    }

    /// `Π̂v`.
    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.n() {
            return Err(Error::input(format!(
                "vector has length {}, projector has order {}",
                v.len(),
                self.n()
            )));
        }
        let coef = self.basis.tr_mul(v);
        let mut out = v.clone();
        out.gemv(-1.0, &self.basis, &coef, 1.0);
        Ok(out)
    }

    /// `Π̂M`, column by column.
    pub fn apply_matrix(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.nrows() != self.n() {
            return Err(Error::input("matrix row count does not match projector"));
        }
        let coef = self.basis.tr_mul(m);
        let mut out = m.clone();
        out.gemm(-1.0, &self.basis, &coef, 1.0);
        Ok(out)
    }
}

/// One projector per residual component, each built from that component's
/// own score matrix.
#[derive(Debug, Clone)]
pub struct ComponentProjectors {
    projectors: Vec<Projector>,
}

impl ComponentProjectors {
    pub fn from_model(fm: &FittedModel) -> Result<Self> {
        let projectors = fm
            .scores
            .iter()
            .map(build_projector)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { projectors })
    }

    pub fn components(&self) -> usize {
        self.projectors.len()
    }

    pub fn get(&self, r: usize) -> &Projector {
        &self.projectors[r]
    }

    /// Applies projector `r` to column `r` of `eps`.
    pub fn apply(&self, eps: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if eps.ncols() != self.projectors.len() {
            return Err(Error::input(format!(
                "residual matrix has {} columns, {} projectors",
                eps.ncols(),
                self.projectors.len()
            )));
        }
        let mut out = DMatrix::zeros(eps.nrows(), eps.ncols());
        for (r, p) in self.projectors.iter().enumerate() {
            let col = p.apply(&eps.column(r).into_owned())?;
            out.set_column(r, &col);
        }
        Ok(out)
    }
}

/// `Π̂ᵣ ε̂ᵣ` for every residual component of a fitted model.
pub fn orthogonalize_residuals(fm: &FittedModel) -> Result<DMatrix<f64>> {
    ComponentProjectors::from_model(fm)?.apply(&fm.residuals)
}
