use super::*;
use crate::densities::{flat_top_density, smooth_product_density, BumpProfile, SmoothKind, SmoothParams};
use crate::estimator::{kappa_default, Dataset, KappaPolicy};
use alloc::sync::Arc;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bump() -> Arc<BumpProfile> {
    Arc::new(BumpProfile::with_intervals(1 << 12))
}

fn bank(ell: usize, k: u8) -> KernelBank {
    KernelBank::new(ell, 1024, k).unwrap()
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn raised_cosine(d: usize) -> SeparableDensity {
    smooth_product_density(SmoothKind::RaisedCosine, d, &SmoothParams::default(), bump()).unwrap()
}

fn policy(d: usize, b: &KernelBank, kappa: Option<f64>) -> KappaPolicy {
    let p = kappa_default(d, 2.0, b.k_inf(d)).unwrap();
    match kappa {
        Some(k) => p.with_kappa(k).unwrap(),
        None => p,
    }
}

#[test]
fn constant_density_has_no_bias() {
    let b = bank(3, 4);
    let f = flat_top_density(40.0, 1, 1.0, bump()).unwrap();
    let grid = BandwidthGrid::with_max_exponent(1, 4).unwrap();
    let oracle = Oracle::new(&f, &b, grid, 1.0, 100).unwrap();
    let t = oracle.point(&[0.3]).unwrap();
    for (bias, bar) in t.bias.iter().zip(&t.bias_bar) {
        assert!(bias.abs() < 1e-8 && bar.abs() < 1e-8, "{bias} {bar}");
    }
}

#[test]
fn bias_matches_refined_quadrature() {
    let b = bank(2, 4);
    let f = raised_cosine(1);
    let k = b.composite();
    let h = 0.25;
    for x in [-0.4, -0.1, 0.0, 0.23, 0.45] {
        let exact = simpson(|t| k.eval((t - x) / h) / h * f.value(&[t]), x - h / 2.0, x + h / 2.0, 200_000) - f.value(&[x]);
        let got = bias(&f, &b, &Bandwidth::new(&[2]).unwrap(), &[x]).unwrap();
        assert!((got - exact).abs() < 1e-6, "x = {x}: {got} vs {exact}");
    }
}

#[test]
fn cell_refinement_is_stable() {
    let b = bank(3, 5);
    let f = smooth_product_density(SmoothKind::BumpMixture, 2, &SmoothParams::default(), bump()).unwrap();
    let grid = BandwidthGrid::with_max_exponent(2, 5).unwrap();
    let coarse = Oracle::new(&f, &b, grid, 0.5, 256).unwrap();
    let fine = Oracle::new(&f, &b, grid, 0.5, 256).unwrap().with_cell_nodes(6).unwrap();
    let x = [-0.2, 0.31];
    let (c, r) = (coarse.point(&x).unwrap(), fine.point(&x).unwrap());
    for i in 0..c.mean.len() {
        for (u, v) in [
            (c.mean[i], r.mean[i]),
            (c.a_kernel[i], r.a_kernel[i]),
            (c.a_majorant[i], r.a_majorant[i]),
            (c.m_kernel[i], r.m_kernel[i]),
            (c.m_majorant[i], r.m_majorant[i]),
            (c.bias_bar[i], r.bias_bar[i]),
        ] {
            assert!((u - v).abs() <= 1e-6 * (1.0 + v.abs()), "{u} vs {v}");
        }
    }
}

#[test]
fn pair_means_match_direct_quadrature() {
    let b = bank(2, 3);
    let f = raised_cosine(1);
    let grid = BandwidthGrid::with_max_exponent(1, 3).unwrap();
    let oracle = Oracle::new(&f, &b, grid, 1.0, 64).unwrap();
    let x = 0.13;
    let t = oracle.point(&[x]).unwrap();
    for (i, h) in grid.iter().enumerate() {
        for (k, eta) in grid.iter().enumerate() {
            let half = 0.5 * (h.value(0) + eta.value(0));
            let direct = simpson(
                |s| b.pair_kernel(&h, &eta, &[s - x]).unwrap() * f.value(&[s]),
                x - half,
                x + half,
                100_000,
            );
            assert!((t.pair_mean(i, k) - direct).abs() < 1e-6, "{h:?} {eta:?}");
        }
    }
}

#[test]
fn bias_bar_single_grid_and_naive() {
    let b = bank(2, 3);
    let f = raised_cosine(1);
    let single = BandwidthGrid::with_max_exponent(1, 0).unwrap();
    let o = Oracle::new(&f, &b, single, 1.0, 64).unwrap();
    let t = o.point(&[0.2]).unwrap();
    assert_eq!(t.bias_bar[0], t.bias[0].abs().max((t.pair_mean(0, 0) - t.mean[0]).abs()));

    let grid = BandwidthGrid::with_max_exponent(1, 2).unwrap();
    let o = Oracle::new(&f, &b, grid, 1.0, 64).unwrap();
    let x = 0.2;
    let t = o.point(&[x]).unwrap();
    let k = b.composite();
    for (i, h) in grid.iter().enumerate() {
        let mut naive = t.bias[i].abs();
        for eta in grid.iter() {
            let e = eta.value(0);
            let smoothed = simpson(
                |s| k.eval((s - x) / e) / e * bias(&f, &b, &h, &[s]).unwrap(),
                x - e / 2.0,
                x + e / 2.0,
                2000,
            );
            naive = naive.max(smoothed.abs());
        }
        assert!((t.bias_bar[i] - naive).abs() < 1e-5, "{h:?}: {} vs {naive}", t.bias_bar[i]);
        assert!(t.bias_bar[i] >= t.bias[i].abs());
    }
}

#[test]
fn majorants_far_from_support() {
    let b = bank(2, 4);
    let f = raised_cosine(2);
    let grid = BandwidthGrid::with_max_exponent(2, 4).unwrap();
    let (kappa, n) = (2.0, 500);
    let o = Oracle::new(&f, &b, grid, kappa, n).unwrap();
    let t = o.point(&[5.0, 0.0]).unwrap();
    for (i, h) in grid.iter().enumerate() {
        assert_eq!(t.a_kernel[i], 0.0);
        assert_eq!(t.a_majorant[i], 0.0);
        let base = kappa * libm::log(n as f64) / (n as f64 * h.volume());
        assert!((t.m_kernel[i] - base).abs() < 1e-15 * base);
        assert!((t.m_majorant[i] - base).abs() < 1e-15 * base);
    }
}

#[test]
fn majorant_averages_bounded_by_sup_norm() {
    let b = bank(3, 5);
    let f = smooth_product_density(SmoothKind::BumpMixture, 2, &SmoothParams::default(), bump()).unwrap();
    let grid = BandwidthGrid::with_max_exponent(2, 5).unwrap();
    let o = Oracle::new(&f, &b, grid, 1.0, 100).unwrap();
    let q_sup = b.majorant(2, 5).unwrap().sup_norm();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let t = o.point(&x).unwrap();
        for (i, h) in grid.iter().enumerate() {
            let m = f.sup_bound();
            assert!(t.a_kernel[i] <= b.k_inf(2) / h.volume() * 1.0000001);
            assert!(t.a_majorant[i] <= q_sup / h.volume() * 1.0000001);
            assert!(t.a_kernel[i] <= b.composite().table().integral_abs().powi(2) * m * 1.0000001);
            assert!(t.mean[i].abs() <= t.a_kernel[i] * (1.0 + 1e-12));
        }
    }
}

#[test]
fn residuals_vanish_without_nearby_mass() {
    let b = bank(2, 6);
    let f = raised_cosine(1);
    let data = Dataset::new(1, vec![0.0; 64]).unwrap();
    let pol = policy(1, &b, Some(0.5));
    let est = Estimator::new(&data, &b, &pol).unwrap();
    let terms = assert_oracle_inequality(&est, &f, &[10.0]).unwrap();
    assert_eq!(terms.zeta, 0.0);
    assert_eq!(terms.chi, 0.0);
    assert_eq!(terms.lhs, 0.0);
    assert!(terms.holds);
}

fn naive_residuals(est: &Estimator<'_>, truth: &PointTruth, x: &[f64]) -> (f64, f64) {
    let grid = est.grid();
    let mut zeta = 0.0f64;
    let mut chi = 0.0f64;
    for (i, h) in grid.iter().enumerate() {
        zeta = zeta.max((est.fhat(&h, x).unwrap() - truth.mean[i]).abs() - truth.m_kernel[i]);
        for (k, eta) in grid.iter().enumerate() {
            let j = grid.index_of(&h.join(&eta).unwrap()).unwrap();
            let xi = est.fhat_pair(&h, &eta, x).unwrap() - truth.pair_mean(i, k);
            zeta = zeta.max(xi.abs() - truth.m_majorant[j]);
        }
        chi = chi.max((est.a_hat(KernelKind::Kernel, &h, x).unwrap() - truth.a_kernel[i]).abs() - truth.m_kernel[i]);
        chi = chi.max((est.a_hat(KernelKind::Majorant, &h, x).unwrap() - truth.a_majorant[i]).abs() - truth.m_majorant[i]);
    }
    (zeta.max(0.0), chi.max(0.0))
}

#[test]
fn residuals_match_naive_loops() {
    let b = bank(2, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for d in 1..=2 {
        let f = raised_cosine(d);
        let data = f.sample(64, &mut rng).unwrap();
        let pol = policy(d, &b, Some(0.02));
        let est = Estimator::new(&data, &b, &pol).unwrap();
        let oracle = Oracle::for_estimator(&f, &est).unwrap();
        for _ in 0..3 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
            let truth = oracle.point(&x).unwrap();
            let state = est.point_state(&x).unwrap();
            let (z, c) = naive_residuals(&est, &truth, &x);
            let (zz, cc) = (residual_zeta(&truth, &state), residual_chi(&truth, &state));
            assert!((z - zz).abs() <= 1e-12 * (1.0 + z) && (c - cc).abs() <= 1e-12 * (1.0 + c));
            assert!(zz >= 0.0 && cc >= 0.0);
        }
    }
}

fn oracle_instances(d: usize, count: usize, kappa: Option<f64>, seed: u64) {
    let b = bank(2, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let densities = [
        raised_cosine(d),
        smooth_product_density(SmoothKind::BumpMixture, d, &SmoothParams::default(), bump()).unwrap(),
    ];
    for i in 0..count {
        let f = &densities[i % 2];
        let data = f.sample(256, &mut rng).unwrap();
        let pol = policy(d, &b, kappa);
        let est = Estimator::new(&data, &b, &pol).unwrap();
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-0.7..0.7)).collect();
        let t = assert_oracle_inequality(&est, f, &x).unwrap();
        assert!(t.holds, "instance {i}: lhs {} rhs {} ({t:?})", t.lhs, t.rhs);
        assert!(t.zeta >= 0.0 && t.chi >= 0.0);
    }
}

#[test]
fn oracle_inequality_d1_default_kappa() {
    oracle_instances(1, 200, None, 10);
}

#[test]
fn oracle_inequality_d1_small_kappa() {
    oracle_instances(1, 200, Some(0.01), 11);
}

#[test]
fn oracle_inequality_d2() {
    oracle_instances(2, 50, None, 12);
    oracle_instances(2, 50, Some(0.01), 13);
}

#[test]
fn proportional_matched_and_zero() {
    let r = check_proportional(0.7, 0.7, 2.0, 0.01, 100).unwrap();
    assert_eq!(r.chi, 0.0);
    assert_eq!(r.upper_gap, 0.0);
    assert_eq!(r.lower_gap, 0.0);
    assert!(r.holds);
    let r = check_proportional(0.0, 0.0, 2.0, 0.01, 100).unwrap();
    let base = 2.0 * libm::log(100.0) / (100.0 * 0.01);
    assert!((r.m_check - base).abs() < 1e-15 && (r.m_true - base).abs() < 1e-15);
    assert!(r.holds);
    assert!(check_proportional(-1.0, 0.0, 2.0, 0.01, 100).is_err());
}

#[test]
fn proportional_random_tuples() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10_000 {
        let a_true = libm::exp(rng.random_range(-8.0..8.0));
        let a_hat = if rng.random_bool(0.1) { 0.0 } else { libm::exp(rng.random_range(-8.0..8.0)) };
        let vol = libm::exp2(-rng.random_range(0.0..40.0));
        let n = rng.random_range(2..1_000_000);
        let kappa = libm::exp(rng.random_range(-5.0..5.0));
        let r = check_proportional(a_hat, a_true, kappa, vol, n).unwrap();
        assert!(r.holds, "{a_hat} {a_true} {vol} {n} {kappa}: {r:?}");
    }
}

#[test]
fn bias_norm_slope_raised_cosine() {
    let b = bank(2, 8);
    let f = raised_cosine(1);
    let grid = TensorGrid::new(vec![-0.75], vec![0.75], vec![301]).unwrap();
    let rep = bias_norm_scaling(&f, &b, 0, &[3, 4, 5, 6], 8, 2.0, &grid).unwrap();
    let slope = rep.slope().unwrap();
    assert!((1.8..=2.2).contains(&slope), "{rep:?}");
    let rep = bias_norm_scaling(&f, &b, 0, &[3, 4, 5, 6], 8, f64::INFINITY, &grid).unwrap();
    assert!((rep.slope().unwrap() - 2.0).abs() < 0.15, "{rep:?}");
}

#[test]
fn bias_norm_slope_two_dims() {
    let b = bank(2, 8);
    let f = smooth_product_density(SmoothKind::BumpMixture, 2, &SmoothParams::default(), bump()).unwrap();
    let grid = TensorGrid::new(vec![-0.8; 2], vec![0.8; 2], vec![41; 2]).unwrap();
    let rep = bias_norm_scaling(&f, &b, 1, &[3, 4, 5], 8, 2.0, &grid).unwrap();
    assert!((rep.slope().unwrap() - 2.0).abs() < 0.15, "{rep:?}");
}

#[test]
fn bias_norm_degenerate_cases() {
    let b = bank(2, 6);
    let f = flat_top_density(60.0, 1, 1.0, bump()).unwrap();
    let grid = TensorGrid::new(vec![-10.0], vec![10.0], vec![41]).unwrap();
    let rep = bias_norm_scaling(&f, &b, 0, &[2, 3, 4], 6, 2.0, &grid).unwrap();
    assert!(rep.is_degenerate(), "{rep:?}");
    assert!(bias_norm_scaling(&f, &b, 0, &[2, 3], 6, 2.0, &grid).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bias_bar_dominates_bias(x in -0.8f64..0.8, y in -0.8f64..0.8) {
        let b = bank(2, 4);
        let f = smooth_product_density(SmoothKind::BumpMixture, 2, &SmoothParams::default(), bump()).unwrap();
        let o = Oracle::new(&f, &b, BandwidthGrid::with_max_exponent(2, 4).unwrap(), 1.0, 100).unwrap();
        let t = o.point(&[x, y]).unwrap();
        for i in 0..t.bias.len() {
            prop_assert!(t.bias_bar[i] >= t.bias[i].abs());
            prop_assert!(t.m_majorant_sup[i] >= t.m_majorant[i]);
        }
    }
}
