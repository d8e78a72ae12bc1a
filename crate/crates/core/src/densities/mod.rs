//! Test densities with exact evaluation, interval integrals and samplers.
//!
//! Every density here is a finite signed sum of products of univariate
//! factors, `f(x) = sum_c w_c prod_j F_{c,j}(x_j)`. That covers smooth
//! product densities, mixtures, the flat-top constructions and their
//! perturbations, and makes every box integral exact.

pub mod bump;
pub mod lower;
pub mod maximal;
pub mod packing;

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;

pub use bump::BumpProfile;
pub use lower::{
    build_f_theta, build_perturbed, flat_top_density, perturbation_counts, wave_norm_pow, FTheta, PerturbedDensity,
};
pub use maximal::{strong_maximal, tail_quasi_norm, MaximalField};
pub use packing::{vg_packing, PackingSet};

use crate::estimator::Dataset;
use crate::regimes::ClassSpec;
use crate::{Error, Result, MAX_DIM};

/// A univariate factor.
#[derive(Clone, Debug, PartialEq)]
pub enum Factor {
    /// `(1/w)(1 + cos(2 pi (x - c)/w))` on `|x - c| <= w/2`.
    RaisedCosine { center: f64, width: f64 },
    /// Law of `(U + Z)/scale` with `U` uniform on `[-N/2, N/2]` and `Z`
    /// drawn from the bump; equals `scale/N` on `|x| <= (N/2 - 1)/scale`.
    FlatTop { n: f64, scale: f64 },
    /// `(1/w) Lambda((x - c)/w)`.
    Bump { center: f64, width: f64 },
    /// `g((x - c)/sigma)`; signed, zero mean.
    Wave { center: f64, sigma: f64 },
}

impl Factor {
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Factor::RaisedCosine { center, width } => (center - 0.5 * width, center + 0.5 * width),
            Factor::FlatTop { n, scale } => {
                let e = (0.5 * n + 1.0) / scale;
                (-e, e)
            }
            Factor::Bump { center, width } => (center - width, center + width),
            Factor::Wave { center, sigma } => (center - 2.0 * sigma, center + 2.0 * sigma),
        }
    }

    /// Points inside the support where the factor loses smoothness or
    /// changes shape; useful as quadrature cuts.
    pub fn breakpoints(&self) -> Vec<f64> {
        let (lo, hi) = self.support();
        match *self {
            Factor::FlatTop { n, scale } => {
                let e = (0.5 * n - 1.0) / scale;
                vec![lo, -e, e, hi]
            }
            Factor::Wave { center, sigma } => vec![
                lo,
                center - sigma,
                center,
                center + sigma,
                hi,
            ],
            _ => vec![lo, hi],
        }
    }

    pub fn value(&self, x: f64, bump: &BumpProfile) -> f64 {
        match *self {
            Factor::RaisedCosine { center, width } => {
                let u = (x - center) / width;
                if u.abs() > 0.5 {
                    0.0
                } else {
                    (1.0 + libm::cos(2.0 * PI * u)) / width
                }
            }
            Factor::FlatTop { n, scale } => {
                let y = scale * x;
                scale / n * (bump.cdf(0.5 * n - y) - bump.cdf(-0.5 * n - y)).max(0.0)
            }
            Factor::Bump { center, width } => bump.lambda((x - center) / width) / width,
            Factor::Wave { center, sigma } => bump.wave((x - center) / sigma),
        }
    }

    /// `int_{-inf}^x F`.
    pub fn primitive(&self, x: f64, bump: &BumpProfile) -> f64 {
        match *self {
            Factor::RaisedCosine { center, width } => {
                let u = (x - center) / width;
                if u <= -0.5 {
                    0.0
                } else if u >= 0.5 {
                    1.0
                } else {
                    u + 0.5 + libm::sin(2.0 * PI * u) / (2.0 * PI)
                }
            }
            Factor::FlatTop { n, scale } => {
                let (lo, hi) = self.support();
                if x <= lo {
                    return 0.0;
                }
                if x >= hi {
                    return 1.0;
                }
                let y = scale * x;
                (n - bump.second(0.5 * n - y) + bump.second(-0.5 * n - y)) / n
            }
            Factor::Bump { center, width } => bump.cdf((x - center) / width),
            Factor::Wave { center, sigma } => sigma * bump.wave_primitive((x - center) / sigma),
        }
    }

    pub fn integral(&self, a: f64, b: f64, bump: &BumpProfile) -> f64 {
        if !(b > a) {
            return 0.0;
        }
        let (lo, hi) = self.support();
        let (a, b) = (a.max(lo), b.min(hi));
        if !(b > a) {
            return 0.0;
        }
        self.primitive(b, bump) - self.primitive(a, bump)
    }

    /// Integral over the real line.
    pub fn mass(&self) -> f64 {
        match self {
            Factor::Wave { .. } => 0.0,
            _ => 1.0,
        }
    }

    pub fn sup(&self, bump: &BumpProfile) -> f64 {
        match *self {
            Factor::RaisedCosine { width, .. } => 2.0 / width,
            Factor::FlatTop { n, scale } => scale / n,
            Factor::Bump { width, .. } => bump.lambda(0.0) / width,
            Factor::Wave { .. } => 1.0,
        }
    }

    pub fn is_probability(&self) -> bool {
        !matches!(self, Factor::Wave { .. })
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Factor::RaisedCosine { center, width } | Factor::Bump { center, width } => {
                center.is_finite() && width > 0.0 && width.is_finite()
            }
            Factor::FlatTop { n, scale } => n > 2.0 && n.is_finite() && scale > 0.0 && scale.is_finite(),
            Factor::Wave { center, sigma } => center.is_finite() && sigma > 0.0 && sigma.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("factor", "factor parameters out of range"))
        }
    }

    /// One draw; only for probability factors.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, bump: &BumpProfile) -> f64 {
        match *self {
            Factor::RaisedCosine { center, width } => {
                center + width * raised_cosine_quantile(rng.random::<f64>())
            }
            Factor::FlatTop { n, scale } => {
                let u = n * (rng.random::<f64>() - 0.5);
                (u + sample_bump(rng, bump)) / scale
            }
            Factor::Bump { center, width } => center + width * sample_bump(rng, bump),
            Factor::Wave { .. } => f64::NAN,
        }
    }
}

/// Inverse of `u -> u + 1/2 + sin(2 pi u)/(2 pi)` on `[-1/2, 1/2]`.
fn raised_cosine_quantile(p: f64) -> f64 {
    let cdf = |u: f64| u + 0.5 + libm::sin(2.0 * PI * u) / (2.0 * PI);
    let (mut lo, mut hi) = (-0.5, 0.5);
    let mut u = p - 0.5;
    for _ in 0..100 {
        let f = cdf(u) - p;
        if f > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let d = 1.0 + libm::cos(2.0 * PI * u);
        let mut next = if d > 1e-12 { u - f / d } else { 0.5 * (lo + hi) };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - u).abs() < 1e-15 {
            return next;
        }
        u = next;
    }
    u
}

fn sample_bump<R: Rng + ?Sized>(rng: &mut R, bump: &BumpProfile) -> f64 {
    let top = bump.lambda_exact(0.0);
    loop {
        let z = 2.0 * rng.random::<f64>() - 1.0;
        if rng.random::<f64>() * top <= bump.lambda_exact(z) {
            return z;
        }
    }
}

/// One product term `weight * prod_j factors[j](x_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub weight: f64,
    pub factors: Vec<Factor>,
}

/// A density (or signed function) `sum_c w_c prod_j F_{c,j}(x_j)`.
#[derive(Clone, Debug)]
pub struct SeparableDensity {
    dim: usize,
    terms: Vec<Term>,
    boxes: Vec<[(f64, f64); MAX_DIM]>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    sup_bound: f64,
    bump: Arc<BumpProfile>,
    class: Option<ClassSpec>,
    label: String,
}

impl SeparableDensity {
    pub fn new(dim: usize, terms: Vec<Term>, bump: Arc<BumpProfile>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::invalid("dim", "dimension must be in 1..=4"));
        }
        if terms.is_empty() {
            return Err(Error::invalid("terms", "need at least one term"));
        }
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        let mut boxes = Vec::with_capacity(terms.len());
        let mut sup_bound = 0.0;
        for t in &terms {
            if t.factors.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: t.factors.len(),
                });
            }
            if !t.weight.is_finite() {
                return Err(Error::invalid("weight", "term weights must be finite"));
            }
            let mut b = [(0.0, 0.0); MAX_DIM];
            let mut s = t.weight.abs();
            for (j, f) in t.factors.iter().enumerate() {
                f.validate()?;
                b[j] = f.support();
                lo[j] = lo[j].min(b[j].0);
                hi[j] = hi[j].max(b[j].1);
                s *= f.sup(&bump);
            }
            sup_bound += s;
            boxes.push(b);
        }
        Ok(SeparableDensity {
            dim,
            terms,
            boxes,
            lo,
            hi,
            sup_bound,
            bump,
            class: None,
            label: String::new(),
        })
    }

    /// Replaces the default sup-norm bound `sum |w_c| prod sup F_{c,j}`
    /// by a sharper one known from the construction.
    pub fn with_sup_bound(mut self, bound: f64) -> Self {
        self.sup_bound = bound;
        self
    }

    pub fn with_class(mut self, class: ClassSpec) -> Self {
        self.class = Some(class);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn bump(&self) -> &BumpProfile {
        &self.bump
    }

    pub fn bump_handle(&self) -> Arc<BumpProfile> {
        self.bump.clone()
    }

    /// Declared bounding box; the function vanishes outside.
    pub fn bbox(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }

    /// Support box of term `c` in coordinate `j`.
    pub fn term_support(&self, c: usize, j: usize) -> (f64, f64) {
        self.boxes[c][j]
    }

    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    pub fn class(&self) -> Option<&ClassSpec> {
        self.class.as_ref()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let mut total = 0.0;
        for (t, b) in self.terms.iter().zip(&self.boxes) {
            if (0..self.dim).any(|j| x[j] < b[j].0 || x[j] > b[j].1) {
                continue;
            }
            let mut v = t.weight;
            for (j, f) in t.factors.iter().enumerate() {
                v *= f.value(x[j], &self.bump);
            }
            total += v;
        }
        total
    }

    /// Exact integral over the box `[lo, hi]`.
    pub fn integral_box(&self, lo: &[f64], hi: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.weight
                    * t.factors
                        .iter()
                        .enumerate()
                        .map(|(j, f)| f.integral(lo[j], hi[j], &self.bump))
                        .product::<f64>()
            })
            .sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.weight * t.factors.iter().map(Factor::mass).product::<f64>())
            .sum()
    }

    /// Marginal distribution function of coordinate `j`.
    pub fn marginal_cdf(&self, j: usize, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let others: f64 = t
                    .factors
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != j)
                    .map(|(_, f)| f.mass())
                    .product();
                t.weight * others * t.factors[j].primitive(x, &self.bump)
            })
            .sum()
    }

    fn is_mixture(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.weight > 0.0 && t.factors.iter().all(Factor::is_probability))
    }

    /// `n` independent draws.
    ///
    /// Mixtures of product probability factors are sampled exactly;
    /// anything else by rejection from the uniform law on the bounding box
    /// with envelope `sup_bound`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Dataset> {
        let d = self.dim;
        let mut pts = Vec::with_capacity(n * d);
        if self.is_mixture() {
            let total: f64 = self.terms.iter().map(|t| t.weight).sum();
            let mut cum = Vec::with_capacity(self.terms.len());
            let mut acc = 0.0;
            for t in &self.terms {
                acc += t.weight / total;
                cum.push(acc);
            }
            for _ in 0..n {
                let c = if cum.len() == 1 {
                    0
                } else {
                    let u = rng.random::<f64>();
                    cum.partition_point(|&v| v <= u).min(cum.len() - 1)
                };
                for f in &self.terms[c].factors {
                    pts.push(f.sample(rng, &self.bump));
                }
            }
        } else {
            let mut x = [0.0; MAX_DIM];
            let (mut tries, mut accepted) = (0u64, 0usize);
            while accepted < n {
                tries += 1;
                for j in 0..d {
                    x[j] = self.lo[j] + (self.hi[j] - self.lo[j]) * rng.random::<f64>();
                }
                if rng.random::<f64>() * self.sup_bound < self.value(&x[..d]) {
                    pts.extend_from_slice(&x[..d]);
                    accepted += 1;
                }
                if tries >= 100_000 && (accepted as f64) < 1e-4 * tries as f64 {
                    return Err(Error::Efficiency(accepted as f64 / tries as f64));
                }
            }
        }
        Dataset::new(d, pts)
    }
}

/// The smooth product families used in upper-bound experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmoothKind {
    RaisedCosine,
    SmoothedUniform,
    BumpMixture,
}

impl SmoothKind {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "raised_cosine" => Ok(SmoothKind::RaisedCosine),
            "smoothed_uniform" => Ok(SmoothKind::SmoothedUniform),
            "bump_mixture" => Ok(SmoothKind::BumpMixture),
            _ => Err(Error::invalid("kind", "unknown density kind")),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SmoothKind::RaisedCosine => "raised_cosine",
            SmoothKind::SmoothedUniform => "smoothed_uniform",
            SmoothKind::BumpMixture => "bump_mixture",
        }
    }
}

/// Shape parameters of [`smooth_product_density`]; unused fields are
/// ignored by the other kinds.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothParams {
    /// Raised cosine: support width per coordinate.
    pub width: f64,
    /// Smoothed uniform: half-width of the uniform part.
    pub half_width: f64,
    /// Smoothed uniform: scale of the bump noise.
    pub smoothing: f64,
    /// Bump mixture: component centers (shared by all coordinates).
    pub centers: Vec<f64>,
    /// Bump mixture: component widths.
    pub widths: Vec<f64>,
    /// Bump mixture: component weights, normalized internally.
    pub weights: Vec<f64>,
}

impl Default for SmoothParams {
    fn default() -> Self {
        SmoothParams {
            width: 1.0,
            half_width: 0.5,
            smoothing: 0.25,
            centers: vec![-0.3, 0.35],
            widths: vec![0.4, 0.3],
            weights: vec![0.6, 0.4],
        }
    }
}

/// Smooth product densities with documented class membership.
///
/// * `raised_cosine`: `prod_j (1/w)(1 + cos(2 pi x_j / w))` on
///   `[-w/2, w/2]^d`; first derivatives are Lipschitz, so it lies in the
///   class with `beta_j = 2`, `r_j = inf`, `L_j = (4 pi^2/w^3)(2/w)^(d-1)`,
///   `M = (2/w)^d`.
/// * `smoothed_uniform`: coordinates `U + b Z` with `U` uniform on
///   `[-a, a]`; infinitely smooth, recorded with `beta_j = 2`, `r_j = inf`.
/// * `bump_mixture`: a mixture of product bumps; infinitely smooth,
///   recorded with `beta_j = 2`, `r_j = inf`.
pub fn smooth_product_density(
    kind: SmoothKind,
    dim: usize,
    params: &SmoothParams,
    bump: Arc<BumpProfile>,
) -> Result<SeparableDensity> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::invalid("dim", "dimension must be in 1..=4"));
    }
    let density = match kind {
        SmoothKind::RaisedCosine => {
            let w = params.width;
            let f = Factor::RaisedCosine {
                center: 0.0,
                width: w,
            };
            let d = SeparableDensity::new(dim, vec![Term { weight: 1.0, factors: vec![f; dim] }], bump)?;
            let m = libm::pow(2.0 / w, dim as f64);
            let l = 4.0 * PI * PI / (w * w * w) * libm::pow(2.0 / w, (dim - 1) as f64);
            d.with_class(ClassSpec::new(vec![2.0; dim], vec![f64::INFINITY; dim], vec![l; dim], m)?)
        }
        SmoothKind::SmoothedUniform => {
            let (a, b) = (params.half_width, params.smoothing);
            if !(a > b && b > 0.0) {
                return Err(Error::invalid("smoothing", "need 0 < smoothing < half_width"));
            }
            let f = Factor::FlatTop {
                n: 2.0 * a / b,
                scale: 1.0 / b,
            };
            let d = SeparableDensity::new(dim, vec![Term { weight: 1.0, factors: vec![f.clone(); dim] }], bump)?;
            let m = libm::pow(f.sup(d.bump()), dim as f64);
            let lam2 = bump_second_derivative_sup(d.bump());
            let l = lam2 / (2.0 * a * b * b) * libm::pow(f.sup(d.bump()), (dim - 1) as f64);
            d.with_class(ClassSpec::new(vec![2.0; dim], vec![f64::INFINITY; dim], vec![l; dim], m)?)
        }
        SmoothKind::BumpMixture => {
            let k = params.centers.len();
            if k == 0 || params.widths.len() != k || params.weights.len() != k {
                return Err(Error::invalid("centers", "centers, widths and weights must have equal non-zero length"));
            }
            if params.weights.iter().any(|w| !(*w > 0.0)) {
                return Err(Error::invalid("weights", "mixture weights must be positive"));
            }
            let total: f64 = params.weights.iter().sum();
            let terms = (0..k)
                .map(|c| Term {
                    weight: params.weights[c] / total,
                    factors: vec![
                        Factor::Bump {
                            center: params.centers[c],
                            width: params.widths[c],
                        };
                        dim
                    ],
                })
                .collect();
            let d = SeparableDensity::new(dim, terms, bump)?;
            let m = d.sup_bound();
            let wmin = params.widths.iter().cloned().fold(f64::INFINITY, f64::min);
            let lam2 = bump_second_derivative_sup(d.bump());
            let l = m * lam2 / (wmin * wmin);
            d.with_class(ClassSpec::new(vec![2.0; dim], vec![f64::INFINITY; dim], vec![l; dim], m)?)
        }
    };
    Ok(density.with_label(kind.name()))
}

/// `sup |Lambda''|`, estimated on a fine grid by central differences.
fn bump_second_derivative_sup(bump: &BumpProfile) -> f64 {
    let h = 1e-4;
    let mut best = 0.0f64;
    let mut t = -1.0 + h;
    while t < 1.0 - h {
        let d2 = (bump.lambda_exact(t + h) - 2.0 * bump.lambda_exact(t) + bump.lambda_exact(t - h)) / (h * h);
        best = best.max(d2.abs());
        t += 1e-3;
    }
    best
}

#[cfg(test)]
mod tests;
