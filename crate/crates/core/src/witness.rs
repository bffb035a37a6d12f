//! KRR coefficients and the witness function `ŵ(v) = Σᵢ αᵢ k(xᵢ, v)`.
//!
//! Large `|ŵ(v)|` marks regions of covariate space where the residuals have
//! a systematic conditional mean, i.e. where the model fails.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::format::sig17;
use crate::kernels::{kernel_cross, KernelConfig};
use crate::spectral::KernelContext;

/// `α = (K + nλI)⁻¹ε`, one column per residual component.
pub fn krr_alpha(eps: &DMatrix<f64>, ctx: &KernelContext) -> Result<DMatrix<f64>> {
    if eps.nrows() != ctx.n() {
        return Err(Error::input(format!(
            "residual matrix has {} rows, kernel has order {}",
            eps.nrows(),
            ctx.n()
        )));
    }
    ctx.solve(eps)
}

/// `ŵ` at each row of `points` (m×d), one column per component.
pub fn witness_eval(
    alpha: &DMatrix<f64>,
    train_x: &DMatrix<f64>,
    cfg: &KernelConfig,
    points: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if alpha.nrows() != train_x.nrows() {
        return Err(Error::input("coefficients do not match the training covariates"));
    }
    Ok(kernel_cross(cfg, points, train_x)? * alpha)
}

#[derive(Debug, Clone)]
pub struct WitnessField {
    pub train_x: DMatrix<f64>,
    pub alpha: DMatrix<f64>,
    pub gamma: f64,
    pub lambda: f64,
    pub grid: DMatrix<f64>,
    pub values: DMatrix<f64>,
}

impl WitnessField {
    pub fn compute(
        train_x: &DMatrix<f64>,
        eps: &DMatrix<f64>,
        ctx: &KernelContext,
        grid: DMatrix<f64>,
    ) -> Result<Self> {
        let lambda = ctx
            .lambda()
            .ok_or_else(|| Error::input("witness needs a regularized kernel context"))?;
        let alpha = krr_alpha(eps, ctx)?;
        let values = witness_eval(&alpha, train_x, ctx.config(), &grid)?;
        Ok(Self {
            train_x: train_x.clone(),
            alpha,
            gamma: ctx.gamma(),
            lambda,
            grid,
            values,
        })
    }

    /// Mean of `|ŵ|` over grid points and components.
    pub fn mean_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() / self.values.len() as f64
    }
}

pub const DEFAULT_GRID_SIDE: usize = 60;

/// `side × side` grid over the bounding box of a 2-column `x`, widened by
/// 10% of the range on each side. Rows run over `x1` in the outer loop.
pub fn default_grid_2d(x: &DMatrix<f64>, side: usize) -> Result<DMatrix<f64>> {
    if x.ncols() != 2 {
        return Err(Error::input(format!("a plane grid needs d = 2, got d = {}", x.ncols())));
    }
    if x.nrows() == 0 || side < 2 {
        return Err(Error::input("grid needs data and at least two points per side"));
    }
    let axis = |c: usize| -> Vec<f64> {
        let col = x.column(c);
        let (lo, hi) = (col.min(), col.max());
        let pad = 0.1 * (hi - lo);
        let (lo, hi) = (lo - pad, hi + pad);
        (0..side)
            .map(|i| lo + (hi - lo) * i as f64 / (side - 1) as f64)
            .collect()
    };
    let (a, b) = (axis(0), axis(1));
    Ok(DMatrix::from_fn(side * side, 2, |t, c| {
        if c == 0 {
            a[t / side]
        } else {
            b[t % side]
        }
    }))
}

/// CSV with columns `x1..xd, w_1..w_q`, one row per grid point in grid order.
pub fn witness_grid_export(field: &WitnessField, path: &Path) -> Result<()> {
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let d = field.grid.ncols();
    let q = field.values.ncols();
    let header: Vec<String> = (1..=d)
        .map(|j| format!("x{j}"))
        .chain((1..=q).map(|r| format!("w_{r}")))
        .collect();
    w.write_record(&header).map_err(io)?;
    for t in 0..field.grid.nrows() {
        let row: Vec<String> = field
            .grid
            .row(t)
            .iter()
            .chain(field.values.row(t).iter())
            .map(|&v| sig17(v))
            .collect();
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a [`witness_grid_export`] file back as `(header, rows)`.
pub fn read_witness_grid(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut r = csv::Reader::from_path(path).map_err(io)?;
    let header: Vec<String> = r.headers().map_err(io)?.iter().map(String::from).collect();
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(io)?;
        for (c, cell) in rec.iter().enumerate() {
            data.push(cell.parse::<f64>().map_err(|_| {
                Error::input(format!("row {}, column {}: not a number: {cell:?}", i + 1, header[c]))
            })?);
        }
        rows += 1;
    }
    Ok((header.clone(), DMatrix::from_row_slice(rows, header.len(), &data)))
}
