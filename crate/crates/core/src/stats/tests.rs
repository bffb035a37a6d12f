use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::kernels::KernelConfig;
use crate::seeds::rng_from_seed;
use crate::spectral::{eigendecompose, spectral_statistic, SpectralWeight};

fn gaussian(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from_seed(seed);
    DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
}

fn ctx(x: &DMatrix<f64>, gamma: f64, lambda: f64) -> KernelContext {
    KernelContext::regularized(x, KernelConfig::gaussian(gamma).unwrap(), lambda).unwrap()
}

fn locs(x: &DMatrix<f64>, c: &KernelContext, j: usize, seed: u64) -> LocationKernel {
    let sampler = fit_location_sampler(x, DEFAULT_LOCATION_RIDGE).unwrap();
    LocationKernel::new(c, x, sample_locations(&sampler, j, seed).unwrap()).unwrap()
}

/// Context whose kernel matrix is the identity: points far apart.
fn identity_ctx(n: usize, lambda: f64) -> (DMatrix<f64>, KernelContext) {
    let x = DMatrix::from_fn(n, 1, |i, _| 100.0 * i as f64);
    let c = ctx(&x, 1.0, lambda);
    assert_eq!(c.kernel(), &DMatrix::identity(n, n));
    (x, c)
}

#[test]
fn isotropic_examples() {
    let (_, c) = identity_ctx(3, 1.0);
    let eps = DMatrix::from_element(3, 1, 1.0);
    assert_relative_eq!(stat_proj1(&eps, &c).unwrap().value, 0.5625, epsilon = 1e-14);
    assert_relative_eq!(stat_proj2(&eps, &c).unwrap().value, 0.75, epsilon = 1e-14);
    let eps = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 2.0]);
    assert_relative_eq!(stat_kcm(&eps, &c).unwrap().value, 3.0, epsilon = 1e-14);
}

#[test]
fn zero_residuals_give_zero() {
    let x = gaussian(10, 2, 1);
    let c = ctx(&x, 0.5, 0.1);
    let l = locs(&x, &c, 3, 2);
    let z = DMatrix::zeros(10, 2);
    assert_eq!(stat_proj1(&z, &c).unwrap().value, 0.0);
    assert_eq!(stat_proj2(&z, &c).unwrap().value, 0.0);
    assert_eq!(stat_rand1(&z, &c, &l).unwrap().value, 0.0);
    assert_eq!(stat_rand2(&z, &c, &l).unwrap().value, 0.0);
    assert_eq!(stat_kcm(&z, &c).unwrap().value, 0.0);
    assert!(stat_proj1(&DMatrix::zeros(9, 1), &c).is_err());
}

#[test]
fn far_location_vanishes_and_single_location_identity() {
    let x = gaussian(15, 2, 3);
    let c = ctx(&x, 0.5, 0.1);
    let eps = gaussian(15, 1, 4);
    let far = LocationSet {
        points: DMatrix::from_row_slice(1, 2, &[1e3, 1e3]),
        provenance: LocationProvenance {
            mean: vec![0.0; 2],
            covariance: vec![0.0; 4],
            seed: 0,
            diagonal_fallback: false,
        },
    };
    let l = LocationKernel::new(&c, &x, far).unwrap();
    assert!(stat_rand1(&eps, &c, &l).unwrap().value < 1e-300);
    let l1 = locs(&x, &c, 1, 5);
    assert_eq!(
        stat_rand1(&eps, &c, &l1).unwrap().value,
        stat_rand2(&eps, &c, &l1).unwrap().value
    );
}

#[test]
fn rand_statistics_match_dense_oracle() {
    let x = gaussian(25, 3, 6);
    let c = ctx(&x, 0.3, 0.05);
    let l = locs(&x, &c, 4, 7);
    let eps = gaussian(25, 2, 8);
    // explicit inverse as an independent route
    let n = 25.0;
    let inv = (c.kernel() + DMatrix::identity(25, 25) * (n * 0.05)).try_inverse().unwrap();
    let mut r1 = 0.0;
    let mut r2 = 0.0;
    for r in 0..2 {
        let e = eps.column(r);
        let mut s = 0.0;
        for j in 0..4 {
            let kv = l.cross().column(j);
            let w = (e.transpose() * &inv * kv)[(0, 0)];
            r1 += w * w;
            s += w;
        }
        r2 += s * s;
    }
    assert_relative_eq!(stat_rand1(&eps, &c, &l).unwrap().value, n * r1, max_relative = 1e-10);
    assert_relative_eq!(stat_rand2(&eps, &c, &l).unwrap().value, n * r2, max_relative = 1e-10);
}

#[test]
fn spectral_and_direct_forms_agree() {
    let mut rng = rng_from_seed(2024);
    for case in 0..50u64 {
        let n = rng.gen_range(5..=60);
        let d = rng.gen_range(1..=5);
        let lambda = [1e-3, 1e-1, 1.0][case as usize % 3];
        let gamma = rng.gen_range(0.05..2.0);
        let x = gaussian(n, d, case);
        let c = ctx(&x, gamma, lambda);
        let eps = gaussian(n, 1, case + 1000);
        let eig = eigendecompose(c.kernel()).unwrap();
        let ev = DVector::from_column_slice(eps.as_slice());
        let pairs = [
            (stat_proj1(&eps, &c).unwrap().value, SpectralWeight::Proj1),
            (stat_proj2(&eps, &c).unwrap().value, SpectralWeight::Proj2),
            (stat_kcm(&eps, &c).unwrap().value, SpectralWeight::Kcm),
        ];
        for (direct, w) in pairs {
            let spec = spectral_statistic(&eig, &ev, lambda, w).unwrap();
            assert!(
                (direct - spec).abs() <= 1e-8 * direct.abs(),
                "case {case} {w:?}: {direct} vs {spec}"
            );
        }
    }
}

#[test]
fn lambda_growth_shrinks_projection_statistics() {
    let x = gaussian(30, 2, 9);
    let eps = gaussian(30, 1, 10);
    let mut prev = (f64::INFINITY, f64::INFINITY);
    for k in 0..=6 {
        let c = ctx(&x, 0.5, 10f64.powi(k));
        let p1 = stat_proj1(&eps, &c).unwrap().value;
        let p2 = stat_proj2(&eps, &c).unwrap().value;
        assert!(p1 < prev.0 && p2 < prev.1);
        prev = (p1, p2);
    }
    assert!(prev.0 < 1e-9 && prev.1 < 1e-4);
}

#[test]
fn permutation_equivariance() {
    let x = gaussian(20, 3, 11);
    let eps = gaussian(20, 2, 12);
    let c = ctx(&x, 0.4, 0.02);
    let l = locs(&x, &c, 3, 13);
    let perm: Vec<usize> = (0..20).map(|i| (i * 7) % 20).collect();
    let xp = x.select_rows(&perm);
    let ep = eps.select_rows(&perm);
    let cp = ctx(&xp, 0.4, 0.02);
    let lp = LocationKernel::new(&cp, &xp, l.locations().clone()).unwrap();
    let before = [
        stat_proj1(&eps, &c).unwrap().value,
        stat_proj2(&eps, &c).unwrap().value,
        stat_rand1(&eps, &c, &l).unwrap().value,
        stat_rand2(&eps, &c, &l).unwrap().value,
        stat_kcm(&eps, &c).unwrap().value,
    ];
    let after = [
        stat_proj1(&ep, &cp).unwrap().value,
        stat_proj2(&ep, &cp).unwrap().value,
        stat_rand1(&ep, &cp, &lp).unwrap().value,
        stat_rand2(&ep, &cp, &lp).unwrap().value,
        stat_kcm(&ep, &cp).unwrap().value,
    ];
    for (a, b) in before.iter().zip(after) {
        assert_relative_eq!(*a, b, max_relative = 1e-10);
    }
}

#[test]
fn registry_dispatch() {
    let reg = builtin_statistics();
    assert_eq!(reg.names(), vec!["proj1", "proj2", "rand1", "rand2", "kcm", "gp", "gp05"]);
    let x = gaussian(12, 2, 14);
    let c = ctx(&x, 0.5, 0.1);
    let eps = gaussian(12, 1, 15);
    let env = StatEnv::new(&c);
    let v = reg.get("proj2").unwrap().evaluate(&eps, &env).unwrap();
    assert_eq!(v.value, stat_proj2(&eps, &c).unwrap().value);
    assert!(reg.get("rand1").unwrap().evaluate(&eps, &env).is_err());
    assert_eq!(reg.get("gp").unwrap().kernel_policy(), KernelPolicy::MedianHeuristic);
    assert_eq!(reg.get("gp05").unwrap().kernel_policy(), KernelPolicy::Fixed(0.5));
    assert!(reg.get("nope").is_err());
}

#[test]
fn sampler_two_point_closed_form() {
    let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 2.0, 2.0]);
    let s = fit_location_sampler(&x, 0.0).unwrap();
    assert_eq!(s.mean.as_slice(), &[1.0, 1.0]);
    assert_eq!(s.covariance, DMatrix::from_element(2, 2, 2.0));
    let s = fit_location_sampler(&x, 1e-8).unwrap();
    assert_relative_eq!(s.covariance[(0, 0)], 2.0 + 2e-8, epsilon = 1e-15);
    assert_eq!(s.covariance[(0, 1)], 2.0);
    assert!(!s.diagonal_fallback());
}

#[test]
fn sampler_degenerate_spread_collapses() {
    let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
    let s = fit_location_sampler(&x, DEFAULT_LOCATION_RIDGE).unwrap();
    assert_eq!(s.covariance, DMatrix::identity(2, 2) * DEFAULT_LOCATION_RIDGE);
    let l = sample_locations(&s, 2, 3).unwrap();
    let tol = 3.0 * DEFAULT_LOCATION_RIDGE.sqrt() * 4.0;
    for r in 0..2 {
        assert!((l.points[(r, 0)] - 1.0).abs() <= tol);
        assert!((l.points[(r, 1)] - 2.0).abs() <= tol);
    }
}

#[test]
fn sampler_matches_accumulation_oracle() {
    let x = gaussian(40, 3, 16);
    let s = fit_location_sampler(&x, 0.0).unwrap();
    let mut mean = [0.0; 3];
    for i in 0..40 {
        for l in 0..3 {
            mean[l] += x[(i, l)] / 40.0;
        }
    }
    for a in 0..3 {
        assert_relative_eq!(s.mean[a], mean[a], epsilon = 1e-12);
        for b in 0..3 {
            let mut acc = 0.0;
            for i in 0..40 {
                acc += (x[(i, a)] - mean[a]) * (x[(i, b)] - mean[b]);
            }
            assert_relative_eq!(s.covariance[(a, b)], acc / 39.0, epsilon = 1e-12);
        }
    }
}

#[test]
fn location_draws_are_seeded_and_unbiased() {
    let x = gaussian(50, 2, 17);
    let s = fit_location_sampler(&x, DEFAULT_LOCATION_RIDGE).unwrap();
    assert_eq!(sample_locations(&s, 3, 9).unwrap(), sample_locations(&s, 3, 9).unwrap());
    assert_ne!(sample_locations(&s, 3, 9).unwrap(), sample_locations(&s, 3, 10).unwrap());
    assert!(sample_locations(&s, 0, 9).is_err());
    let j = 10_000;
    let l = sample_locations(&s, j, 18).unwrap();
    for c in 0..2 {
        let m = l.points.column(c).mean();
        let sd = s.covariance[(c, c)].sqrt();
        assert!((m - s.mean[c]).abs() <= 4.0 * sd / (j as f64).sqrt());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]
    #[test]
    fn nonnegative_homogeneous_and_cauchy_schwarz(
        n in 4usize..25, d in 1usize..4, q in 1usize..3, j in 1usize..5,
        seed in any::<u64>(), gamma in 0.05f64..2.0, lambda in 1e-3f64..1.0, c in -5.0f64..5.0,
    ) {
        let x = gaussian(n, d, seed);
        let ctx = ctx(&x, gamma, lambda);
        let l = locs(&x, &ctx, j, seed ^ 3);
        let eps = gaussian(n, q, seed ^ 5);
        let scaled = &eps * c;
        let eval = |e: &DMatrix<f64>| [
            stat_proj1(e, &ctx).unwrap().value,
            stat_proj2(e, &ctx).unwrap().value,
            stat_rand1(e, &ctx, &l).unwrap().value,
            stat_rand2(e, &ctx, &l).unwrap().value,
            stat_kcm(e, &ctx).unwrap().value,
        ];
        let base = eval(&eps);
        let sc = eval(&scaled);
        for (b, s) in base.iter().zip(sc) {
            prop_assert!(*b >= 0.0);
            prop_assert!((s - c * c * b).abs() <= 1e-10 * (c * c * b).abs() + 1e-300);
        }
        prop_assert!(base[3] <= j as f64 * base[2] * (1.0 + 1e-12));
    }
}
