use super::*;
use crate::math::Quadrature;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bump() -> Arc<BumpProfile> {
    Arc::new(BumpProfile::with_intervals(1 << 14))
}

/// Tensor Gauss-Legendre integral of `f` over the density's bounding box,
/// split at every factor breakpoint.
fn box_quadrature(f: &SeparableDensity, nodes: usize, g: impl Fn(&[f64]) -> f64) -> f64 {
    let d = f.dim();
    let (lo, hi) = f.bbox();
    let q = Quadrature::new(nodes).unwrap();
    let rules: Vec<(Vec<f64>, Vec<f64>)> = (0..d)
        .map(|j| {
            let mut breaks: Vec<f64> = f.terms().iter().flat_map(|t| t.factors[j].breakpoints()).collect();
            breaks.sort_by(f64::total_cmp);
            q.rule(lo[j], hi[j], &breaks)
        })
        .collect();
    let total: usize = rules.iter().map(|r| r.0.len()).product();
    let mut x = [0.0; MAX_DIM];
    let mut s = 0.0;
    for i in 0..total {
        let mut r = i;
        let mut w = 1.0;
        for j in 0..d {
            let k = r % rules[j].0.len();
            r /= rules[j].0.len();
            x[j] = rules[j].0[k];
            w *= rules[j].1[k];
        }
        s += w * g(&x[..d]);
    }
    s
}

fn ks_statistic(f: &SeparableDensity, data: &Dataset, j: usize) -> f64 {
    let mut xs: Vec<f64> = data.rows().map(|p| p[j]).collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = f.marginal_cdf(j, x);
            (c - i as f64 / n).abs().max((c - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

const KS_CRIT_1PCT: f64 = 1.628;

#[test]
fn factor_primitives_match_quadrature() {
    let b = bump();
    let q = Quadrature::new(4096).unwrap();
    let factors = [
        Factor::RaisedCosine { center: 0.2, width: 0.7 },
        Factor::FlatTop { n: 10.0, scale: 2.0 },
        Factor::Bump { center: -0.3, width: 0.4 },
        Factor::Wave { center: 0.5, sigma: 0.1 },
    ];
    for f in &factors {
        let (lo, hi) = f.support();
        let br = f.breakpoints();
        for k in 1..8 {
            let x = lo + (hi - lo) * k as f64 / 8.0;
            let num = q.integrate(lo, x, &br, |t| f.value(t, &b));
            assert!((num - f.primitive(x, &b)).abs() < 1e-8, "{f:?} at {x}: {num} vs {}", f.primitive(x, &b));
        }
        let total = q.integrate(lo, hi, &br, |t| f.value(t, &b));
        assert!((total - f.mass()).abs() < 1e-8);
        assert!((f.primitive(hi + 1.0, &b) - f.mass()).abs() < 1e-12);
        assert_eq!(f.primitive(lo - 1.0, &b), 0.0);
        assert_eq!(f.value(hi + 1e-9, &b), 0.0);
    }
}

#[test]
fn raised_cosine_quantile_inverts() {
    for k in 0..=100 {
        let p = k as f64 / 100.0;
        let u = raised_cosine_quantile(p);
        let c = u + 0.5 + libm::sin(2.0 * PI * u) / (2.0 * PI);
        assert!((c - p).abs() < 1e-12, "{p}");
    }
}

#[test]
fn raised_cosine_shape() {
    let f = smooth_product_density(SmoothKind::RaisedCosine, 1, &SmoothParams::default(), bump()).unwrap();
    for k in -10..=10 {
        let x = k as f64 * 0.06;
        let expect = if x.abs() <= 0.5 { 1.0 + libm::cos(2.0 * PI * x) } else { 0.0 };
        assert!((f.value(&[x]) - expect).abs() < 1e-14);
    }
    assert!((f.total_mass() - 1.0).abs() < 1e-15);
    assert!((box_quadrature(&f, 512, |x| f.value(x)) - 1.0).abs() < 1e-10);
    for d in 1..=4 {
        let f = smooth_product_density(SmoothKind::RaisedCosine, d, &SmoothParams::default(), bump()).unwrap();
        let m = f.class().unwrap().m();
        assert!((m - libm::pow(2.0, d as f64)).abs() < 1e-12);
        assert!((f.value(&vec![0.0; d]) - m).abs() < 1e-12);
        assert!((f.sup_bound() - m).abs() < 1e-12);
    }
}

#[test]
fn smooth_kinds_integrate_to_one() {
    let b = bump();
    for kind in [SmoothKind::RaisedCosine, SmoothKind::SmoothedUniform, SmoothKind::BumpMixture] {
        let f = smooth_product_density(kind, 2, &SmoothParams::default(), b.clone()).unwrap();
        let mass = box_quadrature(&f, 256, |x| f.value(x));
        assert!((mass - 1.0).abs() < 1e-6, "{kind:?}: {mass}");
        assert_eq!(f.label(), kind.name());
        assert_eq!(SmoothKind::from_name(kind.name()).unwrap(), kind);
    }
    assert!(SmoothKind::from_name("gaussian").is_err());
}

#[test]
fn class_constants_bound_second_differences() {
    let b = bump();
    for kind in [SmoothKind::RaisedCosine, SmoothKind::SmoothedUniform, SmoothKind::BumpMixture] {
        let f = smooth_product_density(kind, 2, &SmoothParams::default(), b.clone()).unwrap();
        let class = f.class().unwrap().clone();
        let (lo, hi) = f.bbox();
        let h = 1e-3;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let x = [rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1])];
            for j in 0..2 {
                let mut up = x;
                let mut down = x;
                up[j] += h;
                down[j] -= h;
                let d2 = (f.value(&up) - 2.0 * f.value(&x) + f.value(&down)) / (h * h);
                assert!(d2.abs() <= class.l()[j] * 1.01 + 1e-6, "{kind:?}: {d2} vs {}", class.l()[j]);
            }
            assert!(f.value(&x) <= class.m() + 1e-12);
        }
    }
}

#[test]
fn flat_top_plateau_and_support() {
    let b = bump();
    for d in 1..=2 {
        let n = 12.0;
        let f = flat_top_density(n, d, 1.0, b.clone()).unwrap();
        let inside = vec![4.5; d];
        assert!((f.value(&inside) - libm::pow(n, -(d as f64))).abs() < 1e-15);
        assert_eq!(f.value(&vec![7.0 + 1e-9; d]), 0.0);
        let mass = box_quadrature(&f, 512, |x| f.value(x));
        assert!((mass - 1.0).abs() < 1e-6, "{mass}");
    }
    let f = flat_top_density(20.0, 2, 2.5, b.clone()).unwrap();
    assert!((f.value(&[3.5, -3.5]) - libm::pow(2.5 / 20.0, 2.0)).abs() < 1e-15);
    assert_eq!(f.value(&[11.0 / 2.5 + 1e-9, 0.0]), 0.0);
    assert!(flat_top_density(8.0, 1, 1.0, b).is_err());
}

fn perturbed_fixture(w_fn: impl Fn(usize) -> bool) -> PerturbedDensity {
    let sigma = [0.04, 0.045];
    let counts: usize = sigma.iter().map(|s| libm::floor(12.0 / (20.0 * s)) as usize).product();
    let w: Vec<bool> = (0..counts).map(w_fn).collect();
    build_perturbed(12.0, 1.0, &sigma, 0.5 / 144.0, &w, bump()).unwrap()
}

#[test]
fn perturbed_zero_vector_is_base() {
    let p = perturbed_fixture(|_| false);
    let base = flat_top_density(12.0, 2, 1.0, bump()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let x = [rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0)];
        assert_eq!(p.density().value(&x), base.value(&x));
        assert_eq!(p.perturbation(&x), 0.0);
    }
}

#[test]
fn perturbed_structure() {
    let p = perturbed_fixture(|i| i % 3 != 1);
    assert_eq!(p.counts(), vec![15, 13]);
    assert!(p.boxes_disjoint());
    for idx in [0, 7, 100, 179] {
        assert_eq!(p.enumerate(&p.multi_index(idx)), idx);
    }
    assert_eq!(p.enumerate(&[1, 0]), 13);
    let f = p.density();
    let base = flat_top_density(12.0, 2, 1.0, bump()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let central = (-(12.0 - 4.0) / 4.0, (12.0 + 4.0) / 4.0);
    for _ in 0..10_000 {
        let x = [rng.random_range(-7.5..7.5), rng.random_range(-7.5..7.5)];
        let v = f.value(&x);
        assert!(v >= 0.0, "{x:?} {v} {} {}", base.value(&x), p.perturbation(&x));
        assert!((v - base.value(&x) - p.perturbation(&x)).abs() < 1e-15);
        if x.iter().any(|&t| t < central.0 || t > central.1) {
            assert_eq!(v, base.value(&x));
        }
    }
    let mass = box_quadrature(f, 64, |x| base.value(x)) + perturbation_integral(&p, |x| p.perturbation(x));
    assert!((mass - 1.0).abs() < 1e-6, "{mass}");
    assert!(perturbation_integral(&p, |x| p.perturbation(x)).abs() < 1e-6);
    assert!(f.total_mass() - 1.0 < 1e-15);
}

/// `int F^p` (or `int F` with `p = 1` and signed `F`) over the central region
/// by tensor quadrature split at every perturbation breakpoint.
fn perturbation_integral(p: &PerturbedDensity, g: impl Fn(&[f64]) -> f64) -> f64 {
    let q = Quadrature::new(8).unwrap();
    let rules: Vec<(Vec<f64>, Vec<f64>)> = (0..2)
        .map(|l| {
            let s = p.sigma()[l];
            let c = &p.centers()[l];
            let mut breaks = Vec::new();
            for &x in c {
                for k in -2..=2 {
                    breaks.push(x + k as f64 * s);
                }
            }
            let lo = c[0] - 2.0 * s;
            let hi = c[c.len() - 1] + 2.0 * s;
            let mut xs = Vec::new();
            let mut ws = Vec::new();
            for win in breaks.windows(2) {
                let (a, b) = (win[0].max(lo), win[1].min(hi));
                if b > a {
                    let (x, w) = q.rule(a, b, &[]);
                    xs.extend(x);
                    ws.extend(w);
                }
            }
            (xs, ws)
        })
        .collect();
    let mut s = 0.0;
    for (x0, w0) in rules[0].0.iter().zip(&rules[0].1) {
        for (x1, w1) in rules[1].0.iter().zip(&rules[1].1) {
            s += w0 * w1 * g(&[*x0, *x1]);
        }
    }
    s
}

#[test]
fn perturbed_distance_formula() {
    let b = bump();
    let p1 = perturbed_fixture(|i| i % 3 == 0);
    let p2 = perturbed_fixture(|i| i % 5 == 0);
    let rho = p1.w().iter().zip(p2.w()).filter(|(a, b)| a != b).count() as f64;
    let q = Quadrature::new(2048).unwrap();
    for pw in [1.0, 2.0] {
        let gnorm = q.integrate(-2.0, 2.0, &[-1.0, 0.0, 1.0], |t| libm::pow(b.wave(t).abs(), pw));
        let expect = libm::pow(p1.amplitude(), pw) * gnorm * gnorm * p1.sigma()[0] * p1.sigma()[1] * rho;
        let got = perturbation_integral(&p1, |x| libm::pow((p1.perturbation(x) - p2.perturbation(x)).abs(), pw));
        assert!((got / expect - 1.0).abs() < 0.02, "p = {pw}: {got} vs {expect}");
        let lib = p1.lp_distance_pow(&p2, pw).unwrap();
        let predicted = p1.predicted_distance_pow(&p2, pw).unwrap();
        assert!((lib / got - 1.0).abs() < 1e-3, "{lib} vs {got}");
        assert!((predicted / expect - 1.0).abs() < 1e-12);
    }
    let other_amp = build_perturbed(12.0, 1.0, p1.sigma(), 0.5 * p1.amplitude(), p1.w(), bump()).unwrap();
    assert!(p1.lp_distance_pow(&other_amp, 2.0).is_err());
    assert_eq!(perturbation_counts(12.0, 1.0, p1.sigma()), p1.counts());
    let mass = p1.central_integral(|x| p1.perturbation(x));
    assert!(mass.abs() < 1e-9, "{mass}");
}

#[test]
fn perturbed_constraints_named() {
    let b = bump();
    let w = vec![false; 15];
    let err = build_perturbed(12.0, 1.0, &[0.06], 1.0 / 12.0, &w, b.clone()).unwrap_err();
    assert!(matches!(err, Error::InvalidParameter { name: "sigma", .. }));
    let err = build_perturbed(12.0, 1.0, &[0.04], 0.1, &w, b.clone()).unwrap_err();
    assert!(matches!(err, Error::InvalidParameter { name: "A", .. }));
    let err = build_perturbed(12.0, 1.0, &[0.04], 0.01, &w[..3], b.clone()).unwrap_err();
    assert!(matches!(err, Error::DimensionMismatch { .. }));
    assert!(build_perturbed(12.0, 1.0, &[0.04], 1.0 / 12.0, &w, b).is_ok());
}

#[test]
fn f_theta_cases() {
    let b = bump();
    let plain = build_f_theta(16.0, 1.0, 2, b.clone()).unwrap();
    let base = flat_top_density(16.0, 2, 1.0, b.clone()).unwrap();
    assert_eq!(plain.terms().len(), 1);
    for x in [[0.0, 0.0], [7.5, -8.2], [3.0, 8.9]] {
        assert_eq!(plain.value(&x), base.value(&x));
    }
    for theta in [0.25, 0.5, 0.75, 1.0] {
        for d in 1..=2 {
            let f = build_f_theta(16.0, theta, d, b.clone()).unwrap();
            let mass = box_quadrature(&f, 512, |x| f.value(x));
            assert!((mass - 1.0).abs() < 1e-6, "theta {theta}, d {d}: {mass}");
        }
    }
    let spec = FTheta::new(16.0, 0.5);
    assert!((spec.mass(1) - 1.0 / 16.0).abs() < 1e-15);
    let tilde = Factor::FlatTop { n: 16.0, scale: 1.0 };
    let q = Quadrature::new(4096).unwrap();
    let oracle = q.integrate(-9.0, 9.0, &tilde.breakpoints(), |x| {
        libm::pow(16.0, -2.0) * (b.cdf(8.0 - x) - b.cdf(-8.0 - x))
    });
    assert!((oracle - spec.mass(1)).abs() < 1e-10);
    assert!(FTheta::new(16.0, 0.0).build(1, b).is_err());
}

#[test]
fn sampling_basics() {
    let f = smooth_product_density(SmoothKind::RaisedCosine, 2, &SmoothParams::default(), bump()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let empty = f.sample(0, &mut rng).unwrap();
    assert!(empty.is_empty());
    let a = f.sample(200, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let b = f.sample(200, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(a.coordinates(), b.coordinates());

    let f1 = smooth_product_density(SmoothKind::RaisedCosine, 1, &SmoothParams::default(), bump()).unwrap();
    let n = 100_000;
    let data = f1.sample(n, &mut rng).unwrap();
    let mean = data.coordinates().iter().sum::<f64>() / n as f64;
    let q = Quadrature::new(1024).unwrap();
    let var = q.integrate(-0.5, 0.5, &[], |x| x * x * f1.value(&[x]));
    assert!(mean.abs() < 4.0 * libm::sqrt(var / n as f64), "{mean}");
}

#[test]
fn samplers_pass_ks() {
    let b = bump();
    let n = 10_000;
    let crit = KS_CRIT_1PCT / libm::sqrt(n as f64);
    let perturbed = perturbed_fixture(|i| i % 2 == 0).into_density();
    let cases = [
        smooth_product_density(SmoothKind::RaisedCosine, 2, &SmoothParams::default(), b.clone()).unwrap(),
        smooth_product_density(SmoothKind::SmoothedUniform, 2, &SmoothParams::default(), b.clone()).unwrap(),
        smooth_product_density(SmoothKind::BumpMixture, 2, &SmoothParams::default(), b.clone()).unwrap(),
        flat_top_density(12.0, 2, 2.0, b.clone()).unwrap(),
        build_f_theta(16.0, 0.5, 2, b.clone()).unwrap(),
        perturbed,
    ];
    for f in &cases {
        let mut failures = 0;
        for seed in 0..3 {
            let data = f.sample(n, &mut ChaCha8Rng::seed_from_u64(100 + seed)).unwrap();
            for j in 0..2 {
                if ks_statistic(f, &data, j) > crit {
                    failures += 1;
                }
            }
        }
        assert!(failures <= 1, "{}: {failures} KS failures", f.label());
    }
}

#[test]
fn rejection_reports_poor_efficiency() {
    let b = bump();
    let f = SeparableDensity::new(
        1,
        vec![
            Term { weight: 1.0, factors: vec![Factor::Bump { center: 0.0, width: 1.0 }] },
            Term { weight: 1e-3, factors: vec![Factor::Wave { center: 0.0, sigma: 0.1 }] },
        ],
        b,
    )
    .unwrap()
    .with_sup_bound(1e6);
    let err = f.sample(10, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
    assert!(matches!(err, Error::Efficiency(_)));
}

#[test]
fn nonnegative_at_random_probes() {
    let b = bump();
    let cases = [
        smooth_product_density(SmoothKind::BumpMixture, 3, &SmoothParams::default(), b.clone()).unwrap(),
        build_f_theta(16.0, 0.25, 3, b.clone()).unwrap(),
        perturbed_fixture(|i| i % 7 < 4).into_density(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for f in &cases {
        let (lo, hi) = f.bbox();
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..f.dim()).map(|j| rng.random_range(lo[j] - 0.5..hi[j] + 0.5)).collect();
            assert!(f.value(&x) >= 0.0);
        }
    }
}

#[test]
fn rejects_bad_shapes() {
    let b = bump();
    assert!(SeparableDensity::new(0, vec![], b.clone()).is_err());
    assert!(SeparableDensity::new(
        2,
        vec![Term { weight: 1.0, factors: vec![Factor::Bump { center: 0.0, width: 1.0 }] }],
        b.clone()
    )
    .is_err());
    assert!(SeparableDensity::new(
        1,
        vec![Term { weight: 1.0, factors: vec![Factor::Bump { center: 0.0, width: -1.0 }] }],
        b.clone()
    )
    .is_err());
    let p = SmoothParams {
        smoothing: 1.0,
        half_width: 0.5,
        ..SmoothParams::default()
    };
    assert!(smooth_product_density(SmoothKind::SmoothedUniform, 1, &p, b.clone()).is_err());
    assert!(smooth_product_density(SmoothKind::RaisedCosine, 5, &SmoothParams::default(), b).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn box_integrals_are_additive(
        c in -0.5f64..0.5,
        w in 0.1f64..2.0,
        a in -2.0f64..2.0,
        m in -2.0f64..2.0,
        e in -2.0f64..2.0,
    ) {
        let b = bump();
        let f = SeparableDensity::new(
            2,
            vec![
                Term { weight: 0.7, factors: vec![Factor::RaisedCosine { center: c, width: w }, Factor::Bump { center: -c, width: w }] },
                Term { weight: 0.3, factors: vec![Factor::Bump { center: c, width: w }, Factor::RaisedCosine { center: 0.0, width: 1.0 }] },
            ],
            b,
        ).unwrap();
        let mut xs = [a, m, e];
        xs.sort_by(f64::total_cmp);
        let whole = f.integral_box(&[xs[0], -1.0], &[xs[2], 1.0]);
        let parts = f.integral_box(&[xs[0], -1.0], &[xs[1], 1.0]) + f.integral_box(&[xs[1], -1.0], &[xs[2], 1.0]);
        prop_assert!((whole - parts).abs() < 1e-12);
        prop_assert!((-1e-15..=1.0 + 1e-12).contains(&whole));
        prop_assert!((f.marginal_cdf(0, 10.0) - 1.0).abs() < 1e-12);
    }
}
