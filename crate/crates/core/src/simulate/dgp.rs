use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::seeds::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpId {
    Dgp0,
    Dgp1,
    Dgp2,
    Dgp3,
    Dgp4,
    Dgp5,
    Dgp6,
    Dgp5Star,
    Dgp6Star,
    Fig1Dgp0,
    Fig1Dgp1,
    Fig1Dgp2,
}

impl DgpId {
    pub const ALL: [DgpId; 12] = [
        DgpId::Dgp0,
        DgpId::Dgp1,
        DgpId::Dgp2,
        DgpId::Dgp3,
        DgpId::Dgp4,
        DgpId::Dgp5,
        DgpId::Dgp6,
        DgpId::Dgp5Star,
        DgpId::Dgp6Star,
        DgpId::Fig1Dgp0,
        DgpId::Fig1Dgp1,
        DgpId::Fig1Dgp2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DgpId::Dgp0 => "dgp0",
            DgpId::Dgp1 => "dgp1",
            DgpId::Dgp2 => "dgp2",
            DgpId::Dgp3 => "dgp3",
            DgpId::Dgp4 => "dgp4",
            DgpId::Dgp5 => "dgp5",
            DgpId::Dgp6 => "dgp6",
            DgpId::Dgp5Star => "dgp5_star",
            DgpId::Dgp6Star => "dgp6_star",
            DgpId::Fig1Dgp0 => "fig1_dgp0",
            DgpId::Fig1Dgp1 => "fig1_dgp1",
            DgpId::Fig1Dgp2 => "fig1_dgp2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|i| i.as_str()).collect();
                Error::input(format!("unknown DGP `{s}`; available: {}", names.join(", ")))
            })
    }

    /// Dimension the DGP is defined for, if it is fixed.
    pub fn required_d(self) -> Option<usize> {
        match self {
            DgpId::Dgp5 | DgpId::Dgp6 => Some(10),
            DgpId::Dgp5Star | DgpId::Dgp6Star => Some(20),
            DgpId::Fig1Dgp0 | DgpId::Fig1Dgp1 | DgpId::Fig1Dgp2 => Some(2),
            _ => None,
        }
    }

    /// Intercept and common slope of the linear part.
    pub fn null_coefficients(self) -> (f64, f64) {
        match self {
            DgpId::Dgp0 | DgpId::Dgp1 | DgpId::Dgp2 | DgpId::Dgp3 | DgpId::Dgp4 => (1.0, 0.5),
            DgpId::Dgp5 | DgpId::Dgp6 | DgpId::Dgp5Star | DgpId::Dgp6Star => (1.0, 1.0),
            DgpId::Fig1Dgp0 | DgpId::Fig1Dgp1 | DgpId::Fig1Dgp2 => (0.0, 1.0),
        }
    }
}

impl std::fmt::Display for DgpId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub id: DgpId,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
}

impl DgpSpec {
    pub fn new(id: DgpId, n: usize, d: usize, seed: u64) -> Result<Self> {
        let s = Self { id, n, d, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(req) = self.id.required_d() {
            if self.d != req {
                return Err(Error::input(format!("{} is defined for d = {req}, got d = {}", self.id, self.d)));
            }
        }
        if self.d == 0 {
            return Err(Error::input("d must be positive"));
        }
        if self.n < 2 {
            return Err(Error::input("n must be at least 2"));
        }
        Ok(())
    }
}

/// A generated sample plus the pieces of its construction.
#[derive(Debug, Clone)]
pub struct SimData {
    pub dataset: Dataset,
    /// `Y` minus the null model's linear part at the generating coefficients.
    pub true_residual: DVector<f64>,
    /// Conditional mean `E[Y | X]`.
    pub mean: DVector<f64>,
}

enum Marginal {
    Uniform(f64),
    Normal(f64),
}

/// Law of covariate column `l` (1-based).
fn marginal(id: DgpId, l: usize) -> Marginal {
    let lf = l as f64;
    match id {
        DgpId::Dgp5 if l <= 5 => Marginal::Uniform(1.0 + 0.1 * (lf - 1.0)),
        DgpId::Dgp5Star if l <= 10 => Marginal::Uniform(1.0 + 0.1 * (lf - 1.0)),
        DgpId::Dgp6 if l <= 5 => Marginal::Uniform(lf),
        DgpId::Dgp6Star if l <= 10 => Marginal::Uniform(lf),
        DgpId::Dgp5 | DgpId::Dgp6 => Marginal::Normal(1.0 + 0.1 * (lf - 5.0)),
        DgpId::Dgp5Star | DgpId::Dgp6Star => Marginal::Normal(1.0 + 0.1 * (lf - 10.0)),
        _ => Marginal::Normal(1.0),
    }
}

fn covariates(spec: &DgpSpec, rng: &mut impl Rng) -> DMatrix<f64> {
    let laws: Vec<Marginal> = (1..=spec.d).map(|l| marginal(spec.id, l)).collect();
    let mut x = DMatrix::zeros(spec.n, spec.d);
    for i in 0..spec.n {
        for (j, law) in laws.iter().enumerate() {
            x[(i, j)] = match *law {
                Marginal::Uniform(hi) => Uniform::new(0.0, hi).sample(rng),
                Marginal::Normal(sd) => {
                    let z: f64 = StandardNormal.sample(rng);
                    sd * z
                }
            };
        }
    }
    x
}

/// Mean deviation from the linear null and the noise scale at one row.
fn deviation_and_scale(id: DgpId, row: &[f64], n: usize, slope: f64) -> (f64, f64) {
    let xb: f64 = row.iter().sum::<f64>() * slope;
    let sum: f64 = row.iter().sum();
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    match id {
        DgpId::Dgp0 | DgpId::Fig1Dgp0 => (0.0, 1.0),
        DgpId::Dgp1 => (1.5 * (-xb * xb).exp(), 1.0),
        DgpId::Dgp2 => (2.0 * (1.2 * norm).cos(), 1.0),
        DgpId::Dgp3 => (0.5 * xb * xb, 1.0),
        DgpId::Dgp4 => (1.5 * (0.25 * xb).exp(), 1.0),
        DgpId::Dgp5 | DgpId::Dgp5Star => (norm, sum.abs()),
        DgpId::Dgp6 | DgpId::Dgp6Star => {
            let lin: f64 = row[..5].iter().sum();
            let sq: f64 = row[5..].iter().map(|v| v * v).sum();
            (norm / (n as f64).sqrt(), (0.1 + lin + sq).sqrt())
        }
        DgpId::Fig1Dgp1 => (4.5 * xb * xb, 1.0),
        DgpId::Fig1Dgp2 => (4.5 * (-xb * xb).exp(), 1.0),
    }
}

/// Draws `(X, Y)`. Covariates come first from the seeded stream, then the
/// errors, so `noise = false` reproduces the same `X` with `e = 0`.
pub fn generate_with(spec: &DgpSpec, noise: bool) -> Result<SimData> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let x = covariates(spec, &mut rng);
    let (alpha, slope) = spec.id.null_coefficients();
    let mut y = DVector::zeros(spec.n);
    let mut mean = DVector::zeros(spec.n);
    let mut resid = DVector::zeros(spec.n);
    for i in 0..spec.n {
        let row: Vec<f64> = x.row(i).iter().copied().collect();
        let linear = alpha + slope * row.iter().sum::<f64>();
        let (dev, scale) = deviation_and_scale(spec.id, &row, spec.n, slope);
        let e: f64 = if noise { StandardNormal.sample(&mut rng) } else { 0.0 };
        mean[i] = linear + dev;
        resid[i] = dev + scale * e;
        y[i] = linear + resid[i];
    }
    let names = (1..=spec.d).map(|j| format!("x{j}")).collect();
    Ok(SimData {
        dataset: Dataset::with_names(x, y, None, names)?,
        true_residual: resid,
        mean,
    })
}

pub fn generate(spec: &DgpSpec) -> Result<SimData> {
    generate_with(spec, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_pairing() {
        assert!(DgpSpec::new(DgpId::Dgp5, 10, 9, 0).is_err());
        assert!(DgpSpec::new(DgpId::Dgp6Star, 10, 20, 0).is_ok());
        assert!(DgpSpec::new(DgpId::Fig1Dgp1, 10, 3, 0).is_err());
        assert!(DgpSpec::new(DgpId::Dgp3, 10, 7, 0).is_ok());
        assert_eq!(DgpId::parse("dgp5_star").unwrap(), DgpId::Dgp5Star);
        assert!(DgpId::parse("dgp9").is_err());
    }

    #[test]
    fn noiseless_null_mean() {
        let spec = DgpSpec::new(DgpId::Dgp0, 50, 4, 3).unwrap();
        let s = generate_with(&spec, false).unwrap();
        for i in 0..50 {
            let expect = 1.0 + 0.5 * s.dataset.x.row(i).sum();
            assert!((s.dataset.y[i] - expect).abs() < 1e-14);
        }
        let noisy = generate(&spec).unwrap();
        assert_eq!(noisy.dataset.x, s.dataset.x);
        assert_ne!(noisy.dataset.y, s.dataset.y);
    }

    #[test]
    fn alternative_means() {
        let spec = DgpSpec::new(DgpId::Dgp3, 20, 3, 4).unwrap();
        let s = generate_with(&spec, false).unwrap();
        for i in 0..20 {
            let xb = 0.5 * s.dataset.x.row(i).sum();
            assert!((s.dataset.y[i] - (1.0 + xb + 0.5 * xb * xb)).abs() < 1e-13);
        }
        let spec = DgpSpec::new(DgpId::Fig1Dgp2, 20, 2, 4).unwrap();
        let s = generate(&spec).unwrap();
        let m = generate_with(&spec, false).unwrap();
        for i in 0..20 {
            let xb = s.dataset.x.row(i).sum();
            assert!((m.dataset.y[i] - (xb + 4.5 * (-xb * xb).exp())).abs() < 1e-13);
            assert!((s.true_residual[i] - (s.dataset.y[i] - xb)).abs() < 1e-13);
        }
    }

    #[test]
    fn dgp5_covariate_blocks() {
        let spec = DgpSpec::new(DgpId::Dgp5, 100_000, 10, 5).unwrap();
        let s = generate_with(&spec, false).unwrap();
        let x = &s.dataset.x;
        for l in 1..=5 {
            let hi = 1.0 + 0.1 * (l as f64 - 1.0);
            let col = x.column(l - 1);
            assert!(col.min() >= 0.0 && col.max() <= hi);
            assert!(col.max() > 0.99 * hi);
        }
        for l in 6..=10 {
            let col = x.column(l - 1);
            let m = col.mean();
            let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (col.len() as f64 - 1.0)).sqrt();
            let target = 1.0 + 0.1 * (l as f64 - 5.0);
            assert!((sd / target - 1.0).abs() < 0.02, "column {l}: {sd} vs {target}");
        }
    }

    #[test]
    fn dgp6_drift_scales_with_root_n() {
        let mut drifts = Vec::new();
        for n in [100usize, 400, 1600] {
            let spec = DgpSpec::new(DgpId::Dgp6, n, 10, 6).unwrap();
            let s = generate_with(&spec, false).unwrap();
            let lin = s.dataset.x.row_iter().map(|r| 1.0 + r.sum()).collect::<Vec<_>>();
            let drift = s.mean.iter().zip(&lin).map(|(m, l)| m - l).sum::<f64>() / n as f64;
            drifts.push(drift * (n as f64).sqrt());
        }
        for w in drifts.windows(2) {
            assert!((w[1] / w[0] - 1.0).abs() < 0.1, "{drifts:?}");
        }
    }

    #[test]
    fn dgp6_star_variance_uses_all_normal_columns() {
        let spec = DgpSpec::new(DgpId::Dgp6Star, 5, 20, 7).unwrap();
        let s = generate(&spec).unwrap();
        let m = generate_with(&spec, false).unwrap();
        for i in 0..5 {
            let r: Vec<f64> = s.dataset.x.row(i).iter().copied().collect();
            let scale = (0.1 + r[..5].iter().sum::<f64>() + r[5..].iter().map(|v| v * v).sum::<f64>()).sqrt();
            let e = (s.dataset.y[i] - m.dataset.y[i]) / scale;
            assert!(e.is_finite());
            // uniform block of dgp6*: column l on [0, l]
            for (l, v) in r[..10].iter().enumerate() {
                assert!(*v >= 0.0 && *v <= (l + 1) as f64);
            }
        }
    }
}
