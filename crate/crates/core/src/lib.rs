//! Kernel ridge regression (KRR) model checks for conditional moment
//! restriction models.
//!
//! The estimated residuals of a parametric model are regressed on Gaussian
//! kernel features. The resulting coefficient function is zero exactly when
//! the model is correctly specified, so test statistics are built from it:
//!
//! | name    | statistic                                                   |
//! |---------|-------------------------------------------------------------|
//! | `proj1` | `n εᵀ(K+nλI)⁻¹K(K+nλI)⁻¹ε` (witness norm)                   |
//! | `proj2` | `εᵀ(K+nλI)⁻¹Kε` (witness against the mean embedding)        |
//! | `rand1` | `n Σⱼ (εᵀ(K+nλI)⁻¹k(vⱼ))²` at random locations `vⱼ`        |
//! | `rand2` | `n (Σⱼ εᵀ(K+nλI)⁻¹k(vⱼ))²`                                  |
//! | `kcm`   | `εᵀKε / n` with the tuned kernel                            |
//! | `gp`    | `εᵀKε / n` with the median-heuristic bandwidth              |
//! | `gp05`  | `εᵀKε / n` with `γ = 0.5`                                   |
//!
//! Residuals are first projected off the span of the model scores, which
//! removes the first-order effect of parameter estimation, and p-values come
//! from a multiplier bootstrap. Statistics and multiplier families live in
//! name-keyed registries ([`stats::StatisticRegistry`],
//! [`bootstrap::MultiplierRegistry`]) and are selected at runtime.

pub mod app;
pub mod bootstrap;
pub mod dataset;
pub mod error;
pub mod format;
pub mod kernels;
pub mod models;
pub mod orthogonal;
pub mod pipeline;
pub mod registry;
pub mod seeds;
pub mod simulate;
pub mod spectral;
pub mod stats;
pub mod tuning;
pub mod witness;

pub use dataset::Dataset;
pub use error::{Error, Result};
