//! Flat-top densities and their signed perturbations.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::{BumpProfile, Factor, SeparableDensity, Term};
use crate::math::Quadrature;
use crate::{Error, Result, MAX_DIM};

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        Err(Error::invalid("dim", "dimension must be in 1..=4"))
    } else {
        Ok(())
    }
}

/// `x -> kappa^d fbar(kappa x)` where `fbar` is the product of `N`-wide
/// smoothed uniforms; equals `(kappa/N)^d` on `[-(N/2 - 1)/kappa, (N/2 - 1)/kappa]^d`.
pub fn flat_top_density(n: f64, dim: usize, kappa: f64, bump: Arc<BumpProfile>) -> Result<SeparableDensity> {
    check_dim(dim)?;
    if !(n > 8.0 && n.is_finite()) {
        return Err(Error::invalid("N", "need N > 8"));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::invalid("kappa_scale", "must be positive"));
    }
    let f = Factor::FlatTop { n, scale: kappa };
    let plateau = libm::pow(kappa / n, dim as f64);
    Ok(SeparableDensity::new(dim, vec![Term { weight: 1.0, factors: vec![f; dim] }], bump)?
        .with_sup_bound(plateau)
        .with_label("flat_top"))
}

/// The flat-top density plus `A sum_m w_{pi(m)} G_m` with
/// `G_m(x) = prod_l g((x_l - x_{m_l,l})/sigma_l)`.
#[derive(Clone, Debug)]
pub struct PerturbedDensity {
    density: SeparableDensity,
    n: f64,
    kappa: f64,
    amplitude: f64,
    sigma: Vec<f64>,
    centers: Vec<Vec<f64>>,
    w: Vec<bool>,
}

impl PerturbedDensity {
    pub fn density(&self) -> &SeparableDensity {
        &self.density
    }

    pub fn into_density(self) -> SeparableDensity {
        self.density
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Centers `x_{j,l}`, `j = 1..M_l`, per coordinate `l`.
    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    /// `(M_1, ..., M_d)`.
    pub fn counts(&self) -> Vec<usize> {
        self.centers.iter().map(Vec::len).collect()
    }

    pub fn w(&self) -> &[bool] {
        &self.w
    }

    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    /// Row-major enumeration of the multi-index `m` (zero-based on both
    /// sides): the last coordinate varies fastest.
    pub fn enumerate(&self, m: &[usize]) -> usize {
        let mut idx = 0;
        for (l, &ml) in m.iter().enumerate() {
            idx = idx * self.centers[l].len() + ml;
        }
        idx
    }

    /// Inverse of [`enumerate`](Self::enumerate).
    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let d = self.dim();
        let mut m = vec![0; d];
        for l in (0..d).rev() {
            let c = self.centers[l].len();
            m[l] = idx % c;
            idx /= c;
        }
        m
    }

    /// `Pi_m = prod_l [x_{m_l,l} - 3 sigma_l, x_{m_l,l} + 3 sigma_l]`.
    pub fn perturbation_box(&self, m: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let lo = m
            .iter()
            .enumerate()
            .map(|(l, &ml)| self.centers[l][ml] - 3.0 * self.sigma[l])
            .collect();
        let hi = m
            .iter()
            .enumerate()
            .map(|(l, &ml)| self.centers[l][ml] + 3.0 * self.sigma[l])
            .collect();
        (lo, hi)
    }

    /// `F_w(x)`, using the disjointness of the boxes to visit at most one
    /// term.
    pub fn perturbation(&self, x: &[f64]) -> f64 {
        let bump = self.density.bump();
        let mut m = [0usize; MAX_DIM];
        for l in 0..self.dim() {
            let c = &self.centers[l];
            let s = self.sigma[l];
            let j = libm::round((x[l] - c[0]) / (8.0 * s));
            if !(j >= 0.0 && (j as usize) < c.len()) {
                return 0.0;
            }
            let j = j as usize;
            if (x[l] - c[j]).abs() >= 2.0 * s {
                return 0.0;
            }
            m[l] = j;
        }
        let idx = self.enumerate(&m[..self.dim()]);
        if !self.w[idx] {
            return 0.0;
        }
        let mut v = self.amplitude;
        for l in 0..self.dim() {
            v *= bump.wave((x[l] - self.centers[l][m[l]]) / self.sigma[l]);
        }
        v
    }

    /// Per-coordinate Gauss rules on `[x_j - 2 sigma, x_j + 2 sigma]` for every
    /// center, split at the kinks `x_j + k sigma`. Between the supports the
    /// perturbation vanishes.
    fn central_rules(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        let q = Quadrature::new(8).expect("eight nodes is a valid rule");
        (0..self.dim())
            .map(|l| {
                let s = self.sigma[l];
                let c = &self.centers[l];
                let mut xs = Vec::new();
                let mut ws = Vec::new();
                for &x in c {
                    for k in -2..2 {
                        let a = x + k as f64 * s;
                        q.for_each_node(a, a + s, &[], |t, w| {
                            xs.push(t);
                            ws.push(w);
                        });
                    }
                }
                (xs, ws)
            })
            .collect()
    }

    /// `int g` over the union of the perturbation supports by tensor Gauss
    /// quadrature; elsewhere every `f_w` equals the flat top.
    pub fn central_integral(&self, g: impl Fn(&[f64]) -> f64) -> f64 {
        let rules = self.central_rules();
        let d = self.dim();
        let mut idx = [0usize; MAX_DIM];
        let mut x = [0.0; MAX_DIM];
        let mut total = 0.0;
        loop {
            let mut w = 1.0;
            for l in 0..d {
                x[l] = rules[l].0[idx[l]];
                w *= rules[l].1[idx[l]];
            }
            total += w * g(&x[..d]);
            let mut l = d;
            loop {
                if l == 0 {
                    return total;
                }
                l -= 1;
                idx[l] += 1;
                if idx[l] < rules[l].0.len() {
                    break;
                }
                idx[l] = 0;
            }
        }
    }

    fn same_layout(&self, other: &PerturbedDensity) -> Result<()> {
        if self.n != other.n || self.kappa != other.kappa || self.sigma != other.sigma || self.amplitude != other.amplitude {
            return Err(Error::invalid("w", "densities differ in more than the sign vector"));
        }
        Ok(())
    }

    /// `||f_w - f_w'||_p^p` by quadrature of the density values.
    pub fn lp_distance_pow(&self, other: &PerturbedDensity, p: f64) -> Result<f64> {
        self.same_layout(other)?;
        let (a, b) = (&self.density, &other.density);
        Ok(self.central_integral(|x| libm::pow((a.value(x) - b.value(x)).abs(), p)))
    }

    /// `A^p ||g||_p^(dp) (prod sigma_l) rho(w, w')`.
    pub fn predicted_distance_pow(&self, other: &PerturbedDensity, p: f64) -> Result<f64> {
        self.same_layout(other)?;
        let rho = self.w.iter().zip(&other.w).filter(|(a, b)| a != b).count() as f64;
        let g = wave_norm_pow(self.density.bump(), p);
        let sig: f64 = self.sigma.iter().product();
        Ok(libm::pow(self.amplitude, p) * libm::pow(g, self.dim() as f64) * sig * rho)
    }

    /// Pairwise disjointness of all boxes, checked on the interval
    /// endpoints per coordinate.
    pub fn boxes_disjoint(&self) -> bool {
        self.centers.iter().zip(&self.sigma).all(|(c, &s)| {
            c.windows(2).all(|p| p[0] + 3.0 * s < p[1] - 3.0 * s)
        })
    }
}

/// `int |g|^p` for the wave profile.
pub fn wave_norm_pow(bump: &BumpProfile, p: f64) -> f64 {
    let q = Quadrature::new(2048).expect("valid rule");
    q.integrate(-2.0, 2.0, &[-1.0, 0.0, 1.0], |t| libm::pow(bump.wave(t).abs(), p))
}

/// `(M_1, ..., M_d)` with `M_l = floor(N/(20 kappa sigma_l))`.
pub fn perturbation_counts(n: f64, kappa: f64, sigma: &[f64]) -> Vec<usize> {
    sigma
        .iter()
        .map(|&s| libm::floor(n / (20.0 * kappa * s)) as usize)
        .collect()
}

/// Builds `f_w = f^(0) + F_w`.
///
/// Constraints, reported by name when violated: `sigma_l < 1/(20 kappa)`,
/// `A <= kappa^d N^-d`, every box inside the plateau, `w` of length
/// `prod_l M_l` with `M_l = floor(N/(20 kappa sigma_l))`.
pub fn build_perturbed(
    n: f64,
    kappa: f64,
    sigma: &[f64],
    amplitude: f64,
    w: &[bool],
    bump: Arc<BumpProfile>,
) -> Result<PerturbedDensity> {
    let dim = sigma.len();
    check_dim(dim)?;
    let base = flat_top_density(n, dim, kappa, bump.clone())?;
    let plateau = libm::pow(kappa / n, dim as f64);
    if !(amplitude >= 0.0 && amplitude <= plateau) {
        return Err(Error::invalid(
            "A",
            format!("need 0 <= A <= kappa^d N^-d = {plateau:e}"),
        ));
    }
    let mut centers = Vec::with_capacity(dim);
    let edge = (0.5 * n - 1.0) / kappa;
    for &s in sigma {
        if !(s > 0.0 && s < 1.0 / (20.0 * kappa)) {
            return Err(Error::invalid("sigma", "need 0 < sigma_l < 1/(20 kappa)"));
        }
        let count = perturbation_counts(n, kappa, &[s])[0];
        if count == 0 {
            return Err(Error::invalid("sigma", "N/(20 kappa sigma_l) must be at least 1"));
        }
        let start = -(n - 4.0) / (4.0 * kappa);
        let c: Vec<f64> = (1..=count).map(|j| start + 8.0 * j as f64 * s).collect();
        if c[0] - 3.0 * s < -edge || c[count - 1] + 3.0 * s > edge {
            return Err(Error::invalid("sigma", "perturbation boxes must lie inside the plateau"));
        }
        centers.push(c);
    }
    let total: usize = centers.iter().map(Vec::len).product();
    if w.len() != total {
        return Err(Error::DimensionMismatch {
            expected: total,
            got: w.len(),
        });
    }
    let mut terms = base.terms().to_vec();
    let mut m = vec![0usize; dim];
    for (idx, &on) in w.iter().enumerate() {
        let mut r = idx;
        for l in (0..dim).rev() {
            m[l] = r % centers[l].len();
            r /= centers[l].len();
        }
        if on {
            terms.push(Term {
                weight: amplitude,
                factors: (0..dim)
                    .map(|l| Factor::Wave {
                        center: centers[l][m[l]],
                        sigma: sigma[l],
                    })
                    .collect(),
            });
        }
    }
    let density = SeparableDensity::new(dim, terms, bump)?
        .with_sup_bound(plateau + amplitude)
        .with_label("perturbed_flat_top");
    Ok(PerturbedDensity {
        density,
        n,
        kappa,
        amplitude,
        sigma: sigma.to_vec(),
        centers,
        w: w.to_vec(),
    })
}

/// Parameters of `f^(theta) = (1 - p_N) f^(0) + ftilde^(theta)`, where
/// `ftilde^(theta)(x) = varsigma^d fbar^(theta)(varsigma x)` and
/// `fbar^(theta)` is the `N`-wide smoothed uniform with plateau `N^(-d/theta)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FTheta {
    pub n: f64,
    pub theta: f64,
    /// Width parameter of the mixing flat-top `f^(0)`.
    pub base_n: f64,
    /// Scale of `f^(0)`.
    pub kappa: f64,
    /// Scale of `ftilde^(theta)`.
    pub varsigma: f64,
}

impl FTheta {
    /// `f^(0)` and `ftilde^(theta)` sharing `N` with unit scales.
    pub fn new(n: f64, theta: f64) -> Self {
        FTheta {
            n,
            theta,
            base_n: n,
            kappa: 1.0,
            varsigma: 1.0,
        }
    }

    /// `p_N = int ftilde^(theta) = N^(d(1 - 1/theta))`.
    pub fn mass(&self, dim: usize) -> f64 {
        libm::pow(self.n, dim as f64 * (1.0 - 1.0 / self.theta))
    }

    pub fn build(&self, dim: usize, bump: Arc<BumpProfile>) -> Result<SeparableDensity> {
        check_dim(dim)?;
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::invalid("theta", "theta must lie in (0, 1]"));
        }
        if !(self.n > 2.0 && self.base_n > 2.0 && self.kappa > 0.0 && self.varsigma > 0.0) {
            return Err(Error::invalid("N", "need N > 2 and positive scales"));
        }
        let p = self.mass(dim);
        if !(p <= 1.0) {
            return Err(Error::invalid("N", "p_N = int ftilde exceeds one"));
        }
        let mut terms = Vec::with_capacity(2);
        if p < 1.0 {
            terms.push(Term {
                weight: 1.0 - p,
                factors: vec![
                    Factor::FlatTop {
                        n: self.base_n,
                        scale: self.kappa,
                    };
                    dim
                ],
            });
        }
        terms.push(Term {
            weight: p,
            factors: vec![
                Factor::FlatTop {
                    n: self.n,
                    scale: self.varsigma,
                };
                dim
            ],
        });
        Ok(SeparableDensity::new(dim, terms, bump)?.with_label("f_theta"))
    }
}

/// `f^(theta)` with `f^(0)` and `ftilde^(theta)` sharing `N` and unit scales.
pub fn build_f_theta(n: f64, theta: f64, dim: usize, bump: Arc<BumpProfile>) -> Result<SeparableDensity> {
    FTheta::new(n, theta).build(dim, bump)
}
