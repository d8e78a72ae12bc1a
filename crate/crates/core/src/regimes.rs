//! Smoothness bookkeeping and the minimax rate map.
//!
//! A class is described by per-direction smoothness `beta_j`, integrability
//! indices `r_j` (possibly infinite), Lipschitz-type constants `L_j` and a
//! sup-norm bound `M`. The aggregates are
//!
//! ```text
//! 1/beta = sum 1/beta_j      1/s = sum 1/(beta_j r_j)      L_beta = prod L_j^(1/beta_j)
//! ```
//!
//! and the loss index `p` falls into one of three zones separated by
//! `(2 + 1/beta)/(1 + 1/s)` and `s (2 + 1/beta)`.

use alloc::vec::Vec;

use crate::{Error, Result};

const BOUNDARY_RTOL: f64 = 1e-12;

/// Smoothness class parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassSpec {
    beta: Vec<f64>,
    r: Vec<f64>,
    l: Vec<f64>,
    m: f64,
}

impl ClassSpec {
    /// `r` entries may be `f64::INFINITY`.
    pub fn new(beta: Vec<f64>, r: Vec<f64>, l: Vec<f64>, m: f64) -> Result<Self> {
        let d = beta.len();
        if d == 0 {
            return Err(Error::invalid("beta", "need at least one direction"));
        }
        if r.len() != d || l.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: if r.len() != d { r.len() } else { l.len() },
            });
        }
        if beta.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(Error::invalid("beta", "smoothness must be positive and finite"));
        }
        if r.iter().any(|v| !(*v >= 1.0)) {
            return Err(Error::invalid("r", "integrability indices must be at least 1"));
        }
        if l.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("L", "constants must be positive and finite"));
        }
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::invalid("M", "sup-norm bound must be positive"));
        }
        Ok(ClassSpec { beta, r, l, m })
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn l(&self) -> &[f64] {
        &self.l
    }

    pub fn m(&self) -> f64 {
        self.m
    }
}

/// `(beta, s, L_beta)`; `s` is infinite when every `r_j` is.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aggregates {
    pub beta: f64,
    pub s: f64,
    pub l_beta: f64,
}

impl Aggregates {
    pub fn inv_beta(&self) -> f64 {
        1.0 / self.beta
    }

    pub fn inv_s(&self) -> f64 {
        1.0 / self.s
    }

    /// `(2 + 1/beta)/(1 + 1/s)`.
    pub fn lower_boundary(&self) -> f64 {
        (2.0 + self.inv_beta()) / (1.0 + self.inv_s())
    }

    /// `s (2 + 1/beta)`, infinite when `s` is.
    pub fn upper_boundary(&self) -> f64 {
        self.s * (2.0 + self.inv_beta())
    }
}

pub fn aggregate(spec: &ClassSpec) -> Aggregates {
    let inv_beta: f64 = spec.beta.iter().map(|b| 1.0 / b).sum();
    let inv_s: f64 = spec
        .beta
        .iter()
        .zip(&spec.r)
        .map(|(b, r)| if r.is_infinite() { 0.0 } else { 1.0 / (b * r) })
        .sum();
    let l_beta = spec
        .l
        .iter()
        .zip(&spec.beta)
        .map(|(l, b)| libm::pow(*l, 1.0 / b))
        .product();
    Aggregates {
        beta: 1.0 / inv_beta,
        s: if inv_s == 0.0 { f64::INFINITY } else { 1.0 / inv_s },
        l_beta,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Zone {
    Tail,
    BoundaryLower,
    Dense,
    BoundaryUpper,
    SparseSLt1,
    SparseSGe1,
}

impl Zone {
    pub fn name(&self) -> &'static str {
        match self {
            Zone::Tail => "tail",
            Zone::BoundaryLower => "boundary_lower",
            Zone::Dense => "dense",
            Zone::BoundaryUpper => "boundary_upper",
            Zone::SparseSLt1 => "sparse_s_lt1",
            Zone::SparseSGe1 => "sparse_s_ge1",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegimeReport {
    pub p: f64,
    pub aggregates: Aggregates,
    pub zone: Zone,
    /// Rate exponent: the risk behaves like `(L_beta ln n / n)^nu` up to
    /// the logarithmic factor `mu_n`.
    pub nu: f64,
    /// `mu_n = (ln n)^mu_exponent`.
    pub mu_exponent: f64,
    /// Whether the sparse-zone logarithm `alpha_n = ln n` applies.
    pub alpha_log: bool,
    pub note: Option<&'static str>,
}

fn near(a: f64, b: f64) -> bool {
    b.is_finite() && (a - b).abs() <= BOUNDARY_RTOL * b.abs().max(a.abs())
}

/// Tail-zone exponent `(1 - 1/p)/(1 - 1/s + 1/beta)`.
pub fn nu_tail(agg: &Aggregates, p: f64) -> f64 {
    (1.0 - 1.0 / p) / (1.0 - agg.inv_s() + agg.inv_beta())
}

/// Dense-zone exponent `beta/(2 beta + 1)`.
pub fn nu_dense(agg: &Aggregates) -> f64 {
    agg.beta / (2.0 * agg.beta + 1.0)
}

/// Sparse-zone exponent, `s/p` when `s < 1` and
/// `(1 - 1/s + 1/(p beta))/(2 - 2/s + 1/beta)` otherwise.
pub fn nu_sparse(agg: &Aggregates, p: f64) -> f64 {
    if agg.s < 1.0 {
        agg.s / p
    } else {
        (1.0 - agg.inv_s() + agg.inv_beta() / p) / (2.0 - 2.0 * agg.inv_s() + agg.inv_beta())
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::OutOfScope(p));
    }
    Ok(())
}

pub fn classify(spec: &ClassSpec, p: f64) -> Result<RegimeReport> {
    check_p(p)?;
    let agg = aggregate(spec);
    let lower = agg.lower_boundary();
    let upper = agg.upper_boundary();
    let d = spec.dim() as f64;
    let zone = if near(p, lower) {
        Zone::BoundaryLower
    } else if near(p, upper) {
        Zone::BoundaryUpper
    } else if p < lower {
        Zone::Tail
    } else if p < upper {
        Zone::Dense
    } else if agg.s < 1.0 {
        Zone::SparseSLt1
    } else {
        Zone::SparseSGe1
    };
    let (nu, mu_exponent) = match zone {
        Zone::Tail => (nu_tail(&agg, p), d / p),
        Zone::BoundaryLower => (nu_dense(&agg), d / p),
        Zone::Dense => (nu_dense(&agg), 0.0),
        Zone::BoundaryUpper => (nu_dense(&agg), 1.0 / p),
        Zone::SparseSLt1 | Zone::SparseSGe1 => (nu_sparse(&agg, p), 0.0),
    };
    let note = spec
        .r.contains(&1.0)
        .then_some("some r_j = 1: the upper bound carries an extra (ln n)^d factor");
    Ok(RegimeReport {
        p,
        aggregates: agg,
        zone,
        nu,
        mu_exponent,
        alpha_log: zone == Zone::SparseSGe1,
        note,
    })
}

/// Tail-dominance parameters `(theta, R)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailSpec {
    theta: f64,
    radius: f64,
}

impl TailSpec {
    pub fn new(theta: f64, radius: f64) -> Result<Self> {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::invalid("theta", "theta must lie in (0, 1]"));
        }
        if !(radius > 0.0) {
            return Err(Error::invalid("R", "radius must be positive"));
        }
        Ok(TailSpec { theta, radius })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailReport {
    pub nu: f64,
    pub mu_exponent: f64,
    /// `(2 + 1/beta)/(1/theta + 1/s)`, below which the tail still matters.
    pub tail_boundary: f64,
}

/// Exponent `(1 - theta/p)/(1 - theta/s + 1/beta)` of the tail branch.
pub fn nu_tail_theta(agg: &Aggregates, p: f64, theta: f64) -> f64 {
    (1.0 - theta / p) / (1.0 - theta * agg.inv_s() + agg.inv_beta())
}

/// Rate exponents under tail dominance. Below the upper boundary the
/// exponent is the smaller of the tail branch and the dense exponent.
pub fn classify_tail(spec: &ClassSpec, p: f64, tail: &TailSpec) -> Result<TailReport> {
    check_p(p)?;
    let agg = aggregate(spec);
    let theta = tail.theta();
    let upper = agg.upper_boundary();
    let tail_boundary = (2.0 + agg.inv_beta()) / (1.0 / theta + agg.inv_s());
    let nu = if p <= upper || near(p, upper) {
        nu_tail_theta(&agg, p, theta).min(nu_dense(&agg))
    } else {
        classify(spec, p)?.nu
    };
    let mu_exponent = if near(p, tail_boundary) || near(p, upper) {
        1.0 / p
    } else {
        0.0
    };
    Ok(TailReport {
        nu,
        mu_exponent,
        tail_boundary,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThetaStar {
    pub value: f64,
    /// True when `theta* <= 1`, i.e. the tail zone exists at this `p`.
    pub at_most_one: bool,
}

/// `theta* = p s/(s (2 + 1/beta) - p)`, or its limit `p/(2 + 1/beta)` when
/// `s` is infinite. `None` when `p >= s (2 + 1/beta)`.
pub fn theta_star(spec: &ClassSpec, p: f64) -> Result<Option<ThetaStar>> {
    check_p(p)?;
    let agg = aggregate(spec);
    let upper = agg.upper_boundary();
    if p >= upper || near(p, upper) {
        return Ok(None);
    }
    let value = if agg.s.is_infinite() {
        p / (2.0 + agg.inv_beta())
    } else {
        p * agg.s / (upper - p)
    };
    let at_most_one = value <= 1.0 || near(value, 1.0);
    Ok(Some(ThetaStar { value, at_most_one }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingReport {
    pub tau_p: f64,
    pub tau: Vec<f64>,
    pub gamma: Vec<f64>,
    pub q: Vec<f64>,
    pub gamma_agg: f64,
    pub upsilon: f64,
    pub l_gamma: f64,
    pub valid: bool,
}

fn recip(v: f64) -> f64 {
    if v.is_infinite() {
        0.0
    } else {
        1.0 / v
    }
}

/// Exponents of the embedding into `L_p`-type classes: `q_i = r_i v p`,
/// `gamma_i = beta_i tau(p)/tau_i` when `r_i < p` and `beta_i` otherwise.
pub fn embedding(spec: &ClassSpec, p: f64) -> Result<EmbeddingReport> {
    if !(p >= 1.0) {
        return Err(Error::invalid("p", "p must be at least 1"));
    }
    let d = spec.dim();
    let inv_p = recip(p);
    let tau_p = 1.0
        - spec
            .beta
            .iter()
            .zip(&spec.r)
            .map(|(b, r)| (recip(*r) - inv_p) / b)
            .sum::<f64>();
    let tau: Vec<f64> = (0..d)
        .map(|i| {
            let ri = recip(spec.r[i]);
            1.0 - spec
                .beta
                .iter()
                .zip(&spec.r)
                .map(|(b, r)| (recip(*r) - ri) / b)
                .sum::<f64>()
        })
        .collect();
    let gamma: Vec<f64> = (0..d)
        .map(|i| {
            if spec.r[i] < p {
                spec.beta[i] * tau_p / tau[i]
            } else {
                spec.beta[i]
            }
        })
        .collect();
    let q: Vec<f64> = spec.r.iter().map(|&r| r.max(p)).collect();
    let inv_gamma: f64 = gamma.iter().map(|g| 1.0 / g).sum();
    let inv_upsilon: f64 = gamma.iter().zip(&q).map(|(g, q)| recip(*q) / g).sum();
    let l_gamma = spec
        .l
        .iter()
        .zip(&gamma)
        .map(|(l, g)| libm::pow(*l, 1.0 / g))
        .product();
    let valid = tau_p > 0.0 && tau.iter().all(|t| *t > 0.0);
    Ok(EmbeddingReport {
        tau_p,
        tau,
        gamma,
        q,
        gamma_agg: 1.0 / inv_gamma,
        upsilon: if inv_upsilon == 0.0 {
            f64::INFINITY
        } else {
            1.0 / inv_upsilon
        },
        l_gamma,
        valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn spec(beta: &[f64], r: &[f64]) -> ClassSpec {
        let d = beta.len();
        ClassSpec::new(beta.to_vec(), r.to_vec(), vec![1.0; d], 1.0).unwrap()
    }

    #[test]
    fn aggregates_examples() {
        let a = aggregate(&spec(&[1.0], &[f64::INFINITY]));
        assert_eq!(a.beta, 1.0);
        assert!(a.s.is_infinite());
        assert_eq!(1.0 - a.inv_s() + a.inv_beta(), 2.0);
        let c = ClassSpec::new(vec![1.0, 2.0], vec![2.0, 2.0], vec![3.0, 4.0], 1.0).unwrap();
        let a = aggregate(&c);
        assert!((a.inv_beta() - 1.5).abs() < 1e-15);
        assert!((a.inv_s() - 0.75).abs() < 1e-15);
        assert!((a.l_beta - 3.0 * 2.0).abs() < 1e-14);
        assert!((aggregate(&spec(&[0.5], &[1.0])).s - 0.5).abs() < 1e-15);
    }

    #[test]
    fn spec_validation() {
        assert!(ClassSpec::new(vec![], vec![], vec![], 1.0).is_err());
        assert!(ClassSpec::new(vec![0.0], vec![1.0], vec![1.0], 1.0).is_err());
        assert!(ClassSpec::new(vec![1.0], vec![0.5], vec![1.0], 1.0).is_err());
        assert!(ClassSpec::new(vec![1.0], vec![1.0, 2.0], vec![1.0], 1.0).is_err());
        assert!(ClassSpec::new(vec![1.0], vec![1.0], vec![1.0], 0.0).is_err());
    }

    #[test]
    fn classify_examples() {
        let r = classify(&spec(&[1.0, 2.0], &[2.0, 2.0]), 3.0).unwrap();
        assert_eq!(r.zone, Zone::Dense);
        assert!((r.nu - 2.0 / 7.0).abs() < 1e-15);
        assert_eq!(r.mu_exponent, 0.0);
        let r = classify(&spec(&[0.5], &[1.0]), 10.0).unwrap();
        assert_eq!(r.zone, Zone::SparseSLt1);
        assert!((r.nu - 0.05).abs() < 1e-15);
        assert!(r.note.is_some());
        assert!(classify(&spec(&[1.0], &[2.0]), 1.0).is_err());
        let r = classify(&spec(&[2.0], &[f64::INFINITY]), 2.0).unwrap();
        assert_eq!(r.zone, Zone::Tail);
        assert!((r.nu - 1.0 / 3.0).abs() < 1e-15);
        let r = classify(&spec(&[2.0], &[f64::INFINITY]), 3.0).unwrap();
        assert_eq!(r.zone, Zone::Dense);
        assert!((r.nu - 0.4).abs() < 1e-15);
        let sp = spec(&[1.0], &[2.0]);
        let a = aggregate(&sp);
        assert_eq!(classify(&sp, a.lower_boundary()).unwrap().zone, Zone::BoundaryLower);
        let r = classify(&sp, a.upper_boundary()).unwrap();
        assert_eq!(r.zone, Zone::BoundaryUpper);
        assert!((r.mu_exponent - 1.0 / 6.0).abs() < 1e-15);
        let r = classify(&sp, 10.0).unwrap();
        assert_eq!(r.zone, Zone::SparseSGe1);
        assert!(r.alpha_log);
        let r = classify(&sp, 1.1).unwrap();
        assert_eq!(r.zone, Zone::Tail);
        assert!((r.mu_exponent - 1.0 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn tail_examples() {
        let sp = spec(&[1.0], &[2.0]);
        let t = TailSpec::new(0.5, 1.0).unwrap();
        let r = classify_tail(&sp, 1.5, &t).unwrap();
        assert!((r.nu - 1.0 / 3.0).abs() < 1e-15);
        let agg = aggregate(&sp);
        assert!((nu_tail_theta(&agg, 1.5, 0.5) - 8.0 / 21.0).abs() < 1e-15);
        let r = classify_tail(&sp, 1.1, &t).unwrap();
        assert!((r.nu - nu_tail_theta(&agg, 1.1, 0.5)).abs() < 1e-15);
        let sparse = classify_tail(&sp, 10.0, &t).unwrap();
        assert_eq!(sparse.nu, classify(&sp, 10.0).unwrap().nu);
        let at = classify_tail(&sp, r.tail_boundary, &t).unwrap();
        assert!((at.mu_exponent - 1.0 / r.tail_boundary).abs() < 1e-15);
        assert!(TailSpec::new(0.0, 1.0).is_err());
        assert!(TailSpec::new(1.5, 1.0).is_err());
    }

    #[test]
    fn theta_star_examples() {
        let sp = spec(&[1.0], &[2.0]);
        let t = theta_star(&sp, 1.5).unwrap().unwrap();
        assert!((t.value - 2.0 / 3.0).abs() < 1e-15);
        assert!(t.at_most_one);
        assert!(theta_star(&sp, 6.0).unwrap().is_none());
        assert!(theta_star(&sp, 7.0).unwrap().is_none());
        let lower = aggregate(&sp).lower_boundary();
        let t = theta_star(&sp, lower).unwrap().unwrap();
        assert!((t.value - 1.0).abs() < 1e-14 && t.at_most_one);
        let t = theta_star(&sp, 2.5).unwrap().unwrap();
        assert!(!t.at_most_one);
        let hol = spec(&[1.0], &[f64::INFINITY]);
        assert!((theta_star(&hol, 1.5).unwrap().unwrap().value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn embedding_examples() {
        let e = embedding(&spec(&[2.0], &[1.0]), 2.0).unwrap();
        assert!((e.tau_p - 0.75).abs() < 1e-15);
        assert!((e.tau[0] - 1.0).abs() < 1e-15);
        assert!((e.gamma[0] - 1.5).abs() < 1e-15);
        assert_eq!(e.q[0], 2.0);
        assert!(e.valid);
        let e = embedding(&spec(&[1.0, 3.0], &[4.0, f64::INFINITY]), 2.0).unwrap();
        assert_eq!(e.gamma, [1.0, 3.0]);
        assert_eq!(e.q[0], 4.0);
        assert!(e.q[1].is_infinite());
    }

    fn random_spec(seed: u64) -> ClassSpec {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(1..=3);
        let beta: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..4.0)).collect();
        let r: Vec<f64> = (0..d)
            .map(|_| {
                if rng.random_bool(0.2) {
                    f64::INFINITY
                } else {
                    rng.random_range(1.0..6.0)
                }
            })
            .collect();
        ClassSpec::new(beta, r, vec![1.0; d], 1.0).unwrap()
    }

    proptest! {
        #[test]
        fn branches_agree_at_boundaries(seed in 0u64..u64::MAX) {
            let sp = random_spec(seed);
            let a = aggregate(&sp);
            let lo = a.lower_boundary();
            prop_assert!((nu_tail(&a, lo) - nu_dense(&a)).abs() <= 1e-12);
            let up = a.upper_boundary();
            if up.is_finite() {
                prop_assert!((nu_sparse(&a, up) - nu_dense(&a)).abs() <= 1e-12);
            }
        }

        #[test]
        fn one_zone_and_nu_in_unit_interval(seed in 0u64..u64::MAX, p in 1.0001f64..50.0) {
            let sp = random_spec(seed);
            let r = classify(&sp, p).unwrap();
            prop_assert!(r.nu > 0.0 && r.nu < 1.0);
            let a = r.aggregates;
            let expected_dense = p >= a.lower_boundary() && p <= a.upper_boundary();
            let is_dense_like = matches!(r.zone, Zone::Dense | Zone::BoundaryLower | Zone::BoundaryUpper);
            prop_assert_eq!(expected_dense, is_dense_like);
        }

        #[test]
        fn theta_one_matches_plain_classification(seed in 0u64..u64::MAX, p in 1.0001f64..50.0) {
            let sp = random_spec(seed);
            let plain = classify(&sp, p).unwrap();
            let tail = classify_tail(&sp, p, &TailSpec::new(1.0, 1.0).unwrap()).unwrap();
            prop_assert!((plain.nu - tail.nu).abs() <= 1e-12);
        }

        #[test]
        fn tail_exponent_monotone(seed in 0u64..u64::MAX, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let sp = random_spec(seed);
            let agg = aggregate(&sp);
            let lo = agg.lower_boundary();
            let (p1, p2) = (1.0 + (lo - 1.0) * a.min(b), 1.0 + (lo - 1.0) * a.max(b));
            prop_assume!(p1 > 1.0);
            prop_assert!(nu_tail(&agg, p1) <= nu_tail(&agg, p2) + 1e-15);
        }

        #[test]
        fn embedding_inequalities(seed in 0u64..u64::MAX, p in 1.0f64..10.0) {
            let sp = random_spec(seed);
            let e = embedding(&sp, p).unwrap();
            prop_assume!(e.valid);
            let agg = aggregate(&sp);
            prop_assert!(1.0 / e.gamma_agg >= agg.inv_beta() - 1e-12);
            if agg.s >= 1.0 {
                prop_assert!(agg.inv_s() >= 1.0 / e.upsilon - 1e-12);
            }
        }
    }
}
