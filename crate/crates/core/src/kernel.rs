//! Compactly supported kernels.
//!
//! The univariate building block is the raised cosine
//! `w(y) = l (1 + cos(2 pi l y))` on `[-1/(2l), 1/(2l)]`. The order-`l`
//! kernel `w_l(y) = sum_i C(l,i) (-1)^(i+1) (1/i) w(y/i)` is supported on
//! `[-1/2, 1/2]`, integrates to one and has vanishing moments of orders
//! `1..l-1`. The `d`-variate kernel is the product `K(t) = prod_j w_l(t_j)`.
//!
//! Pair estimators use `K_h * K_eta`, which factorizes into per-coordinate
//! profiles `q_v(t) = int k(t - v u) k(u) du` with `v = (h ^ eta)/(h v eta)`.
//! All profiles live on uniform tables and are evaluated by linear
//! interpolation; the interpolant *is* the kernel.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::bandwidths::{pow2_neg, Bandwidth};
use crate::math::{binomial, Table1D};
use crate::{Error, Result};

pub const DEFAULT_TABLE_SIZE: usize = 4096;
pub const MIN_TABLE_SIZE: usize = 64;

/// The raised-cosine profile of order `ell`.
#[derive(Clone, Debug)]
pub struct BaseKernel1D {
    ell: usize,
    table: Table1D,
}

impl BaseKernel1D {
    pub fn new(ell: usize, table_size: usize) -> Result<Self> {
        if ell == 0 {
            return Err(Error::invalid("ell", "kernel order must be at least 1"));
        }
        if table_size < MIN_TABLE_SIZE {
            return Err(Error::invalid("table_size", "need at least 64 nodes"));
        }
        let half = Self::half_width_for(ell);
        let table = Table1D::from_fn(-half, half, table_size - 1, |y| raised_cosine(ell, y))?;
        Ok(BaseKernel1D { ell, table })
    }

    fn half_width_for(ell: usize) -> f64 {
        0.5 / ell as f64
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn half_width(&self) -> f64 {
        Self::half_width_for(self.ell)
    }

    /// Closed-form value, zero outside the support.
    pub fn value(&self, y: f64) -> f64 {
        raised_cosine(self.ell, y)
    }

    pub fn table(&self) -> &Table1D {
        &self.table
    }

    pub fn sup_norm(&self) -> f64 {
        2.0 * self.ell as f64
    }
}

fn raised_cosine(ell: usize, y: f64) -> f64 {
    let l = ell as f64;
    if y.abs() > 0.5 / l {
        return 0.0;
    }
    l * (1.0 + libm::cos(2.0 * PI * l * y))
}

/// The moment-corrected kernel `w_l` on `[-1/2, 1/2]`.
#[derive(Clone, Debug)]
pub struct CompositeKernel1D {
    ell: usize,
    table: Table1D,
    sup_norm: f64,
}

impl CompositeKernel1D {
    /// Tabulates `w_l` from the closed form of `base`.
    ///
    /// The requested table size is rounded so that every component support
    /// edge `±i/(2l)` is a node.
    pub fn from_base(base: &BaseKernel1D) -> Result<Self> {
        let ell = base.ell();
        let requested = base.table().intervals();
        let intervals = requested.div_ceil(2 * ell) * 2 * ell;
        let coeffs: Vec<f64> = (1..=ell)
            .map(|i| {
                let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
                sign * binomial(ell, i) / i as f64
            })
            .collect();
        let table = Table1D::from_fn(-0.5, 0.5, intervals, |y| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * base.value(y / (k + 1) as f64))
                .sum()
        })?;
        let sup_norm = table.sup_abs();
        Ok(CompositeKernel1D {
            ell,
            table,
            sup_norm,
        })
    }

    pub fn new(ell: usize, table_size: usize) -> Result<Self> {
        Self::from_base(&BaseKernel1D::new(ell, table_size)?)
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        self.table.eval(y)
    }

    pub fn table(&self) -> &Table1D {
        &self.table
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    /// Points where the kernel loses smoothness: component support edges.
    pub fn breakpoints(&self) -> Vec<f64> {
        let l = self.ell as f64;
        let mut out = Vec::with_capacity(2 * self.ell + 1);
        for i in 1..=self.ell {
            let e = i as f64 / (2.0 * l);
            out.push(-e);
            out.push(e);
        }
        out.push(0.0);
        out
    }

    /// `int y^k w_l(y) dy` by the trapezoid rule on the table nodes.
    pub fn moment(&self, k: u32) -> f64 {
        let t = &self.table;
        let vals: Vec<f64> = (0..=t.intervals())
            .map(|i| libm::pow(t.node(i), k as f64) * t.values()[i])
            .collect();
        crate::math::trapezoid(&vals, t.step())
    }
}

/// `K(t) = prod_j w_l(t_j)`.
#[derive(Clone, Debug)]
pub struct ProductKernel {
    dim: usize,
    composite: CompositeKernel1D,
    k_inf: f64,
}

impl ProductKernel {
    pub fn new(composite: CompositeKernel1D, dim: usize) -> Result<Self> {
        if dim == 0 || dim > crate::MAX_DIM {
            return Err(Error::invalid("dim", "dimension must be in 1..=4"));
        }
        let k_inf = libm::pow(composite.sup_norm(), dim as f64);
        Ok(ProductKernel {
            dim,
            composite,
            k_inf,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn composite(&self) -> &CompositeKernel1D {
        &self.composite
    }

    pub fn k_inf(&self) -> f64 {
        self.k_inf
    }

    pub fn eval(&self, t: &[f64]) -> f64 {
        debug_assert_eq!(t.len(), self.dim);
        t.iter().map(|&v| self.composite.eval(v)).product()
    }
}

/// `q_v(t) = int k(t - v u) k(u) du` tabulated on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct ConvolvedProfile {
    ratio: f64,
    table: Table1D,
}

impl ConvolvedProfile {
    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.table.eval(t)
    }

    pub fn table(&self) -> &Table1D {
        &self.table
    }

    /// Rebuilds a profile from stored node values on `[-1, 1]`.
    pub fn from_values(ratio: f64, values: Vec<f64>) -> Result<Self> {
        check_ratio(ratio)?;
        Ok(ConvolvedProfile {
            ratio,
            table: Table1D::new(-1.0, 1.0, values)?,
        })
    }
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::invalid("ratio", "ratio must lie in (0, 1]"));
    }
    Ok(())
}

/// Tabulates `q_ratio` with the node spacing of `composite`.
///
/// The inner integral is the trapezoid rule over the kernel nodes; the
/// table is symmetric by construction.
pub fn convolve_ratio(composite: &CompositeKernel1D, ratio: f64) -> Result<ConvolvedProfile> {
    check_ratio(ratio)?;
    let k = composite.table();
    let n = k.intervals();
    let du = k.step();
    let kv = k.values();
    let intervals = 2 * n;
    let mut values = vec![0.0; intervals + 1];
    for i in 0..=n {
        let t = i as f64 / n as f64;
        let u_lo = ((t - 0.5) / ratio).max(-0.5);
        let u_hi = ((t + 0.5) / ratio).min(0.5);
        let mut acc = 0.0;
        if u_lo <= u_hi {
            let j_lo = libm::floor((u_lo + 0.5) / du).max(0.0) as usize;
            let j_hi = (libm::ceil((u_hi + 0.5) / du) as usize).min(n);
            for j in j_lo..=j_hi {
                let u = k.node(j);
                let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                acc += w * kv[j] * composite.eval(t - ratio * u);
            }
        }
        let q = acc * du;
        values[n + i] = q;
        values[n - i] = q;
    }
    values[0] = 0.0;
    values[intervals] = 0.0;
    ConvolvedProfile::from_values(ratio, values)
}

/// `Q(t) = prod_j e(t_j)` where `e` is the pointwise maximum of `|q_v|`
/// over a ratio set.
#[derive(Clone, Debug)]
pub struct MajorantKernel {
    dim: usize,
    envelope: Table1D,
    sup_norm: f64,
}

impl MajorantKernel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn envelope(&self) -> &Table1D {
        &self.envelope
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn eval(&self, t: &[f64]) -> f64 {
        t.iter().map(|&v| self.envelope.eval(v)).product()
    }
}

fn envelope_of<'a>(profiles: impl Iterator<Item = &'a ConvolvedProfile>) -> Result<Table1D> {
    let mut env: Option<Vec<f64>> = None;
    for p in profiles {
        let vals = p.table().values();
        match env.as_mut() {
            None => env = Some(vals.iter().map(|v| v.abs()).collect()),
            Some(e) => {
                if e.len() != vals.len() {
                    return Err(Error::invalid("ratio_set", "profiles on different grids"));
                }
                for (a, b) in e.iter_mut().zip(vals) {
                    *a = a.max(b.abs());
                }
            }
        }
    }
    let env = env.ok_or_else(|| Error::invalid("ratio_set", "ratio set is empty"))?;
    Table1D::new(-1.0, 1.0, env)
}

pub fn build_majorant(
    composite: &CompositeKernel1D,
    ratio_set: &[f64],
    dim: usize,
) -> Result<MajorantKernel> {
    if ratio_set.is_empty() {
        return Err(Error::invalid("ratio_set", "ratio set is empty"));
    }
    let profiles = ratio_set
        .iter()
        .map(|&r| convolve_ratio(composite, r))
        .collect::<Result<Vec<_>>>()?;
    let envelope = envelope_of(profiles.iter())?;
    Ok(majorant_from_envelope(envelope, dim))
}

fn majorant_from_envelope(envelope: Table1D, dim: usize) -> MajorantKernel {
    let sup_norm = libm::pow(envelope.sup_abs(), dim as f64);
    MajorantKernel {
        dim,
        envelope,
        sup_norm,
    }
}

/// Every table the estimator needs for grids with exponents up to
/// `max_exponent`: the kernel, one profile per dyadic ratio `2^{-b}` and the
/// running envelopes.
#[derive(Clone, Debug)]
pub struct KernelBank {
    table_size: usize,
    composite: CompositeKernel1D,
    profiles: Vec<ConvolvedProfile>,
    envelopes: Vec<Table1D>,
}

impl KernelBank {
    pub fn new(ell: usize, table_size: usize, max_exponent: u8) -> Result<Self> {
        let composite = CompositeKernel1D::new(ell, table_size)?;
        let profiles = (0..=max_exponent)
            .map(|b| convolve_ratio(&composite, pow2_neg(b)))
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(table_size, composite, profiles)
    }

    /// Rebuilds a bank from stored profile node values, one vector per
    /// ratio exponent `0..=max_exponent`.
    pub fn from_profile_values(ell: usize, table_size: usize, values: Vec<Vec<f64>>) -> Result<Self> {
        let composite = CompositeKernel1D::new(ell, table_size)?;
        let expected = 2 * composite.table().intervals() + 1;
        if values.is_empty() || values.len() > 64 {
            return Err(Error::invalid("profiles", "need between 1 and 64 ratio tables"));
        }
        let profiles = values
            .into_iter()
            .enumerate()
            .map(|(b, v)| {
                if v.len() != expected {
                    return Err(Error::DimensionMismatch {
                        expected,
                        got: v.len(),
                    });
                }
                ConvolvedProfile::from_values(pow2_neg(b as u8), v)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(table_size, composite, profiles)
    }

    fn assemble(
        table_size: usize,
        composite: CompositeKernel1D,
        profiles: Vec<ConvolvedProfile>,
    ) -> Result<Self> {
        let mut envelopes = Vec::with_capacity(profiles.len());
        for k in 0..profiles.len() {
            envelopes.push(envelope_of(profiles[..=k].iter())?);
        }
        Ok(KernelBank {
            table_size,
            composite,
            profiles,
            envelopes,
        })
    }

    pub fn ell(&self) -> usize {
        self.composite.ell()
    }

    pub fn table_size(&self) -> usize {
        self.table_size
    }

    pub fn max_exponent(&self) -> u8 {
        (self.profiles.len() - 1) as u8
    }

    pub fn composite(&self) -> &CompositeKernel1D {
        &self.composite
    }

    pub fn product(&self, dim: usize) -> Result<ProductKernel> {
        ProductKernel::new(self.composite.clone(), dim)
    }

    /// `||K||_inf` for the `dim`-variate product kernel.
    pub fn k_inf(&self, dim: usize) -> f64 {
        libm::pow(self.composite.sup_norm(), dim as f64)
    }

    /// Profile for ratio `2^{-b}`.
    #[inline]
    pub fn profile(&self, b: u8) -> &ConvolvedProfile {
        &self.profiles[b as usize]
    }

    pub fn profiles(&self) -> &[ConvolvedProfile] {
        &self.profiles
    }

    /// Envelope over the ratio set `{2^{-b} : b <= max_exponent}`.
    #[inline]
    pub fn envelope(&self, max_exponent: u8) -> &Table1D {
        &self.envelopes[max_exponent as usize]
    }

    pub fn majorant(&self, dim: usize, max_exponent: u8) -> Result<MajorantKernel> {
        if max_exponent > self.max_exponent() {
            return Err(Error::invalid("max_exponent", "exceeds the bank's ratio tables"));
        }
        if dim == 0 || dim > crate::MAX_DIM {
            return Err(Error::invalid("dim", "dimension must be in 1..=4"));
        }
        Ok(majorant_from_envelope(
            self.envelope(max_exponent).clone(),
            dim,
        ))
    }

    /// `[K_h * K_eta](t)`.
    pub fn pair_kernel(&self, h: &Bandwidth, eta: &Bandwidth, t: &[f64]) -> Result<f64> {
        let ratio = h.ratio_exponents(eta)?;
        if t.len() != h.dim() {
            return Err(Error::DimensionMismatch {
                expected: h.dim(),
                got: t.len(),
            });
        }
        if ratio.len() != h.dim()
            || h.exponents().iter().chain(eta.exponents()).any(|&k| k > self.max_exponent())
        {
            return Err(Error::invalid("bandwidth", "bandwidth is not in the grid"));
        }
        let mut value = 1.0;
        for j in 0..h.dim() {
            let a = h.exponent(j).min(eta.exponent(j));
            let scale = libm::ldexp(1.0, a as i32);
            value *= scale * self.profile(ratio[j]).eval(t[j] * scale);
        }
        Ok(value)
    }

    /// `|Q_{h,eta}(t)|` in the unscaled variable, i.e. `prod_j |q_{v_j}(t_j)|`.
    pub fn pair_profile_abs(&self, h: &Bandwidth, eta: &Bandwidth, t: &[f64]) -> Result<f64> {
        let ratio = h.ratio_exponents(eta)?;
        Ok(ratio
            .iter()
            .zip(t)
            .map(|(&b, &v)| self.profile(b).eval(v).abs())
            .product())
    }
}

/// Mass, moment and majorant diagnostics of a kernel bank in dimension
/// `dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelCheck {
    pub ell: usize,
    pub dim: usize,
    /// `|int K - 1|`.
    pub mass_error: f64,
    /// `max |int K(t) t^k dt|` over `1 <= |k| <= ell - 1`; zero when `ell = 1`.
    pub moment_error: f64,
    /// Number of multi-indices `k` examined.
    pub moments_checked: usize,
    /// `max_b |int q_{2^-b} - 1|`.
    pub profile_mass_error: f64,
    /// `||Q||_inf`.
    pub majorant_sup: f64,
    /// `||K||_inf^2`.
    pub kernel_sup_sq: f64,
    /// `Q` vanishes outside `[-1, 1]^d`.
    pub support_ok: bool,
    /// Random `(h, eta, t)` triples tested for `Q(t) >= |Q_{h,eta}(t)|`.
    pub domination_checked: usize,
    /// `min (Q(t) - |Q_{h,eta}(t)|)` over the tested triples.
    pub domination_margin: f64,
}

impl KernelCheck {
    pub fn moments_hold(&self, mass_tol: f64, moment_tol: f64) -> bool {
        self.mass_error <= mass_tol && self.moment_error <= moment_tol
    }

    pub fn profiles_hold(&self, tol: f64) -> bool {
        self.profile_mass_error <= tol
    }

    pub fn majorant_holds(&self, tol: f64) -> bool {
        self.support_ok && self.majorant_sup <= self.kernel_sup_sq && self.domination_margin >= -tol
    }
}

/// Checks `int K = 1`, the vanishing moments of `K`, the support and sup
/// norm of `Q` and its domination of `triples` random pair profiles.
///
/// Moments of the product kernel factor into one-dimensional table moments,
/// which is exact for tensor trapezoid quadrature.
pub fn check_kernel<R: rand::Rng + ?Sized>(
    bank: &KernelBank,
    dim: usize,
    triples: usize,
    rng: &mut R,
) -> Result<KernelCheck> {
    if dim == 0 || dim > crate::MAX_DIM {
        return Err(Error::invalid("dim", "dimension must be in 1..=4"));
    }
    let w = bank.composite();
    let ell = w.ell();
    let one_d: Vec<f64> = (0..ell as u32).map(|k| w.moment(k)).collect();
    let mass_error = (libm::pow(one_d[0], dim as f64) - 1.0).abs();
    let mut moment_error: f64 = 0.0;
    let mut moments_checked = 0;
    let mut k = vec![0usize; dim];
    loop {
        let order: usize = k.iter().sum();
        if order >= 1 && order < ell {
            let m: f64 = k.iter().map(|&kj| one_d[kj]).product();
            moment_error = moment_error.max(m.abs());
            moments_checked += 1;
        }
        let mut j = 0;
        while j < dim {
            k[j] += 1;
            if k[j] < ell {
                break;
            }
            k[j] = 0;
            j += 1;
        }
        if j == dim {
            break;
        }
    }
    let profile_mass_error = bank
        .profiles()
        .iter()
        .map(|p| (p.table().integral() - 1.0).abs())
        .fold(0.0, f64::max);
    let top = bank.max_exponent();
    let q = bank.majorant(dim, top)?;
    let env = q.envelope();
    let support_ok = env.eval(-1.0) == 0.0
        && env.eval(1.0) == 0.0
        && env.eval(1.0 + 1e-9) == 0.0
        && env.eval(-1.0 - 1e-9) == 0.0;
    let mut margin = f64::INFINITY;
    let mut t = vec![0.0; dim];
    let mut he = vec![0u8; 2 * dim];
    for _ in 0..triples {
        for e in he.iter_mut() {
            *e = rng.random_range(0..=top);
        }
        for v in t.iter_mut() {
            *v = rng.random_range(-1.0..=1.0);
        }
        let h = Bandwidth::new(&he[..dim])?;
        let eta = Bandwidth::new(&he[dim..])?;
        let pair = bank.pair_profile_abs(&h, &eta, &t)?;
        margin = margin.min(q.eval(&t) - pair);
    }
    Ok(KernelCheck {
        ell,
        dim,
        mass_error,
        moment_error,
        moments_checked,
        profile_mass_error,
        majorant_sup: q.sup_norm(),
        kernel_sup_sq: bank.k_inf(dim) * bank.k_inf(dim),
        support_ok,
        domination_checked: triples,
        domination_margin: if triples == 0 { 0.0 } else { margin },
    })
}
