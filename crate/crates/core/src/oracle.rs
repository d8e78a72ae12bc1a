//! Every term of the point-wise oracle inequality, computed against a known
//! density.
//!
//! For a separable density every expectation of a product kernel factors
//! into univariate integrals `int k(u) F(x_j + h_j u) du`. The kernels are
//! the tabulated piecewise-linear functions used by the estimator, so each
//! integral is evaluated cell by cell with Gauss-Legendre nodes, which is
//! exact up to the smoothness of `F` inside a single table cell.

use alloc::vec;
use alloc::vec::Vec;

use crate::bandwidths::{pow2_neg, Bandwidth, BandwidthGrid};
use crate::densities::{Factor, SeparableDensity};
use crate::estimator::{true_majorant, Estimator, KernelKind, PointState};
use crate::kernel::KernelBank;
use crate::math::{gauss_legendre, least_squares, LineFit, Table1D, TensorGrid};
use crate::{Error, Result, MAX_DIM};

/// Relative slack allowed when asserting the oracle inequality.
pub const ORACLE_SLACK: f64 = 1e-6;

/// Gauss-Legendre nodes per table cell.
pub const DEFAULT_CELL_NODES: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Weight {
    Signed,
    Abs,
}

/// `int k(u) F(x + s u) du` (or with `|k|`) for a piecewise-linear table `k`.
fn table_integral(
    table: &Table1D,
    weight: Weight,
    factor: &Factor,
    x: f64,
    s: f64,
    density: &SeparableDensity,
    rule: &(Vec<f64>, Vec<f64>),
) -> f64 {
    let (flo, fhi) = factor.support();
    let lo = table.lo().max((flo - x) / s);
    let hi = table.hi().min((fhi - x) / s);
    if !(hi > lo) {
        return 0.0;
    }
    let step = table.step();
    let vals = table.values();
    let first = libm::floor((lo - table.lo()) / step) as usize;
    let last = (libm::ceil((hi - table.lo()) / step) as usize).min(table.intervals());
    let bump = density.bump();
    let mut total = 0.0;
    let mut piece = |a: f64, b: f64, ka: f64, kb: f64| {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (t, w) in rule.0.iter().zip(&rule.1) {
            let u = mid + half * t;
            let lam = (u - a) / (b - a);
            let k = ka + (kb - ka) * lam;
            total += half * w * k * factor.value(x + s * u, bump);
        }
    };
    for i in first..last {
        let (c0, c1) = (table.node(i), table.node(i + 1));
        let (a, b) = (c0.max(lo), c1.min(hi));
        if !(b > a) {
            continue;
        }
        let v0 = vals[i];
        let v1 = vals[i + 1];
        let at = |u: f64| v0 + (v1 - v0) * (u - c0) / (c1 - c0);
        let (ka, kb) = (at(a), at(b));
        match weight {
            Weight::Signed => piece(a, b, ka, kb),
            Weight::Abs => {
                if ka * kb < 0.0 {
                    let root = a + (b - a) * ka / (ka - kb);
                    piece(a, root, ka.abs(), 0.0);
                    piece(root, b, 0.0, kb.abs());
                } else {
                    piece(a, b, ka.abs(), kb.abs());
                }
            }
        }
    }
    total
}

fn check_inputs(density: &SeparableDensity, x: &[f64], dim: usize) -> Result<()> {
    if density.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: density.dim(),
        });
    }
    if x.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("x", "evaluation point must be finite"));
    }
    Ok(())
}

fn check_finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(alloc::format!("quadrature produced {v}")))
    }
}

/// Univariate kernel integrals of one density at one point.
///
/// For term `c` and coordinate `j`, with `h = 2^-k`:
/// `kernel[k] = int w(u) F(x_j + h u) du`, `abs[k]` the same with `|w|`,
/// `envelope[k]` with the majorant envelope, and for `a <= b`
/// `pair[tri(a, b)] = int q_{b-a}(u) F(x_j + 2^-a u) du`.
struct FactorIntegrals {
    kernel: Vec<f64>,
    abs: Vec<f64>,
    envelope: Vec<f64>,
    pair: Vec<f64>,
}

fn tri(a: usize, b: usize) -> usize {
    b * (b + 1) / 2 + a
}

/// Exact expectations, true majorants and biases at one point.
#[derive(Clone, Debug)]
pub struct PointTruth {
    pub x: Vec<f64>,
    /// `f(x)`.
    pub density: f64,
    /// `E fhat_h(x)` in grid order.
    pub mean: Vec<f64>,
    /// `A_h(K, x)`.
    pub a_kernel: Vec<f64>,
    /// `A_h(Q, x)`.
    pub a_majorant: Vec<f64>,
    /// `M_h(K, x)`.
    pub m_kernel: Vec<f64>,
    /// `M_h(Q, x)`.
    pub m_majorant: Vec<f64>,
    /// `sup_{eta >= h} M_eta(Q, x)`.
    pub m_majorant_sup: Vec<f64>,
    /// `B_h(f, x)`.
    pub bias: Vec<f64>,
    /// `Bbar_h(f, x)`.
    pub bias_bar: Vec<f64>,
    dim: usize,
    side: usize,
    weights: Vec<f64>,
    pair: Vec<Vec<Vec<f64>>>,
    grid: BandwidthGrid,
}

impl PointTruth {
    /// `E fhat_{h,eta}(x)` for grid indices `h`, `eta`.
    pub fn pair_mean(&self, h: usize, eta: usize) -> f64 {
        let hb = self.grid.get(h);
        let eb = self.grid.get(eta);
        let mut keys = [0usize; MAX_DIM];
        for (j, key) in keys.iter_mut().enumerate().take(self.dim) {
            let a = hb.exponent(j) as usize;
            let b = eb.exponent(j) as usize;
            *key = tri(a.min(b), a.max(b));
        }
        self.weights
            .iter()
            .zip(&self.pair)
            .map(|(w, p)| w * (0..self.dim).map(|j| p[j][keys[j]]).product::<f64>())
            .sum()
    }

    pub fn grid(&self) -> &BandwidthGrid {
        &self.grid
    }

    pub fn side(&self) -> usize {
        self.side
    }
}

/// The terms of the oracle inequality at one point for one realization.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleTerms {
    pub x: Vec<f64>,
    pub estimate: f64,
    pub density: f64,
    /// `|fhat(x) - f(x)|`.
    pub lhs: f64,
    /// `min_h {4 Bbar_h + 60 sup_{eta >= h} M_eta(Q) + 61 M_h(K)} + 7 zeta + 18 chi`.
    pub rhs: f64,
    /// Bandwidth attaining the minimum in `rhs`.
    pub best: Bandwidth,
    pub bias_bar: f64,
    pub m_kernel: f64,
    pub m_majorant_sup: f64,
    pub zeta: f64,
    pub chi: f64,
    pub holds: bool,
}

/// Truth calculator bound to a density, kernel tables, grid, `kappa` and `n`.
#[derive(Clone, Debug)]
pub struct Oracle<'a> {
    density: &'a SeparableDensity,
    bank: &'a KernelBank,
    grid: BandwidthGrid,
    kappa: f64,
    n: usize,
    rule: (Vec<f64>, Vec<f64>),
}

impl<'a> Oracle<'a> {
    pub fn new(
        density: &'a SeparableDensity,
        bank: &'a KernelBank,
        grid: BandwidthGrid,
        kappa: f64,
        n: usize,
    ) -> Result<Self> {
        if density.dim() != grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: grid.dim(),
                got: density.dim(),
            });
        }
        if grid.max_exponent() > bank.max_exponent() {
            return Err(Error::invalid("max_exponent", "kernel tables do not cover the bandwidth grid"));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::invalid("kappa", "must be positive"));
        }
        if n == 0 {
            return Err(Error::invalid("n", "sample size must be positive"));
        }
        Ok(Oracle {
            density,
            bank,
            grid,
            kappa,
            n,
            rule: gauss_legendre(DEFAULT_CELL_NODES),
        })
    }

    /// Same grid, tables, `kappa` and `n` as the estimator.
    pub fn for_estimator(density: &'a SeparableDensity, est: &Estimator<'a>) -> Result<Self> {
        Self::new(density, est.bank(), *est.grid(), est.kappa(), est.n())
    }

    /// Gauss-Legendre nodes per table cell (at least one).
    pub fn with_cell_nodes(mut self, nodes: usize) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::invalid("cell_nodes", "need at least one node"));
        }
        self.rule = gauss_legendre(nodes);
        Ok(self)
    }

    pub fn grid(&self) -> &BandwidthGrid {
        &self.grid
    }

    fn factor_integrals(&self, factor: &Factor, x: f64) -> FactorIntegrals {
        let side = self.grid.side();
        let kt = self.bank.composite().table();
        let env = self.bank.envelope(self.grid.max_exponent());
        let f = self.density;
        let mut kernel = Vec::with_capacity(side);
        let mut abs = Vec::with_capacity(side);
        let mut envelope = Vec::with_capacity(side);
        for k in 0..side {
            let h = pow2_neg(k as u8);
            kernel.push(table_integral(kt, Weight::Signed, factor, x, h, f, &self.rule));
            abs.push(table_integral(kt, Weight::Abs, factor, x, h, f, &self.rule));
            envelope.push(table_integral(env, Weight::Signed, factor, x, h, f, &self.rule));
        }
        let mut pair = vec![0.0; side * (side + 1) / 2];
        for b in 0..side {
            for a in 0..=b {
                let table = self.bank.profile((b - a) as u8).table();
                pair[tri(a, b)] = table_integral(table, Weight::Signed, factor, x, pow2_neg(a as u8), f, &self.rule);
            }
        }
        FactorIntegrals {
            kernel,
            abs,
            envelope,
            pair,
        }
    }

    /// Exact expectations, majorants and biases at `x` for the whole grid.
    pub fn point(&self, x: &[f64]) -> Result<PointTruth> {
        let d = self.grid.dim();
        check_inputs(self.density, x, d)?;
        let len = self.grid.len();
        let side = self.grid.side();
        let terms = self.density.terms();
        let per_term: Vec<Vec<FactorIntegrals>> = terms
            .iter()
            .map(|t| (0..d).map(|j| self.factor_integrals(&t.factors[j], x[j])).collect())
            .collect();
        let mut mean = vec![0.0; len];
        let mut a_k = vec![0.0; len];
        let mut a_q = vec![0.0; len];
        for (i, h) in self.grid.iter().enumerate() {
            for (t, fi) in terms.iter().zip(&per_term) {
                let (mut m, mut ak, mut aq) = (t.weight, t.weight, t.weight);
                for j in 0..d {
                    let k = h.exponent(j) as usize;
                    m *= fi[j].kernel[k];
                    ak *= fi[j].abs[k];
                    aq *= fi[j].envelope[k];
                }
                mean[i] += m;
                a_k[i] += ak;
                a_q[i] += aq;
            }
        }
        for v in mean.iter().chain(&a_k).chain(&a_q) {
            check_finite(*v)?;
        }
        let density = self.density.value(x);
        let mut m_k = vec![0.0; len];
        let mut m_q = vec![0.0; len];
        for (i, h) in self.grid.iter().enumerate() {
            let vol = h.volume();
            m_k[i] = true_majorant(a_k[i], self.kappa, self.n, vol);
            m_q[i] = true_majorant(a_q[i], self.kappa, self.n, vol);
        }
        let m_q_sup = running_sup(&self.grid, &m_q);
        let bias: Vec<f64> = mean.iter().map(|m| m - density).collect();
        let mut truth = PointTruth {
            x: x.to_vec(),
            density,
            mean,
            a_kernel: a_k,
            a_majorant: a_q,
            m_kernel: m_k,
            m_majorant: m_q,
            m_majorant_sup: m_q_sup,
            bias,
            bias_bar: vec![0.0; len],
            dim: d,
            side,
            weights: terms.iter().map(|t| t.weight).collect(),
            pair: per_term
                .into_iter()
                .map(|fi| fi.into_iter().map(|f| f.pair).collect())
                .collect(),
            grid: self.grid,
        };
        // int K_eta(t - x) B_h(t) dt = E fhat_{h,eta}(x) - E fhat_eta(x).
        for h in 0..len {
            let mut best = truth.bias[h].abs();
            for eta in 0..len {
                best = best.max((truth.pair_mean(h, eta) - truth.mean[eta]).abs());
            }
            truth.bias_bar[h] = best;
        }
        Ok(truth)
    }

    /// `B_h(f, x)`.
    pub fn bias(&self, h: &Bandwidth, x: &[f64]) -> Result<f64> {
        let t = self.point(x)?;
        Ok(t.bias[self.grid.index_of(h)?])
    }

    /// `Bbar_h(f, x)`.
    pub fn bias_bar(&self, h: &Bandwidth, x: &[f64]) -> Result<f64> {
        let t = self.point(x)?;
        Ok(t.bias_bar[self.grid.index_of(h)?])
    }

    /// `M_h(g, x)`.
    pub fn majorant_true(&self, kind: KernelKind, h: &Bandwidth, x: &[f64]) -> Result<f64> {
        let t = self.point(x)?;
        let i = self.grid.index_of(h)?;
        Ok(match kind {
            KernelKind::Kernel => t.m_kernel[i],
            KernelKind::Majorant => t.m_majorant[i],
        })
    }

    /// Combines the truth at `state.x` with a realization's point state.
    pub fn terms(&self, state: &PointState) -> Result<OracleTerms> {
        let truth = self.point(&state.x)?;
        terms_from(&truth, state)
    }
}

/// `sup_{eta >= h}` of a grid-indexed array: a running maximum along each
/// exponent axis.
fn running_sup(grid: &BandwidthGrid, values: &[f64]) -> Vec<f64> {
    let side = grid.side();
    let mut out = values.to_vec();
    let mut stride = 1;
    for _ in 0..grid.dim() {
        for i in 0..out.len() {
            if (i / stride) % side > 0 && out[i - stride] > out[i] {
                out[i] = out[i - stride];
            }
        }
        stride *= side;
    }
    out
}

/// `zeta(x) = sup_h [|xi_h| - M_h(K)]_+ v sup_{h,eta} [|xi_{h,eta}| - M_{h v eta}(Q)]_+`.
pub fn residual_zeta(truth: &PointTruth, state: &PointState) -> f64 {
    let grid = &truth.grid;
    let d = grid.dim();
    let len = grid.len();
    let mut zeta = 0.0f64;
    for h in 0..len {
        zeta = zeta.max((state.fhat[h] - truth.mean[h]).abs() - truth.m_kernel[h]);
    }
    let mut join = [0u8; MAX_DIM];
    for h in 0..len {
        let hb = grid.get(h);
        for eta in h..len {
            let eb = grid.get(eta);
            for (j, slot) in join.iter_mut().enumerate().take(d) {
                *slot = hb.exponent(j).min(eb.exponent(j));
            }
            let jb = grid.index_unchecked(&join[..d]);
            let xi = state.pair(h, eta) - truth.pair_mean(h, eta);
            zeta = zeta.max(xi.abs() - truth.m_majorant[jb]);
        }
    }
    zeta.max(0.0)
}

/// `chi(x) = max_{g in {K, Q}} sup_h [|Ahat_h(g) - A_h(g)| - M_h(g)]_+`.
pub fn residual_chi(truth: &PointTruth, state: &PointState) -> f64 {
    let mut chi = 0.0f64;
    for h in 0..truth.mean.len() {
        chi = chi.max((state.a_hat_kernel[h] - truth.a_kernel[h]).abs() - truth.m_kernel[h]);
        chi = chi.max((state.a_hat_majorant[h] - truth.a_majorant[h]).abs() - truth.m_majorant[h]);
    }
    chi.max(0.0)
}

/// Assembles both sides of the oracle inequality.
pub fn terms_from(truth: &PointTruth, state: &PointState) -> Result<OracleTerms> {
    if truth.x != state.x || truth.mean.len() != state.fhat.len() {
        return Err(Error::invalid("state", "truth and estimator state refer to different points or grids"));
    }
    let zeta = residual_zeta(truth, state);
    let chi = residual_chi(truth, state);
    let mut best = 0;
    let mut best_val = f64::INFINITY;
    for h in 0..truth.mean.len() {
        let v = 4.0 * truth.bias_bar[h] + 60.0 * truth.m_majorant_sup[h] + 61.0 * truth.m_kernel[h];
        if v < best_val {
            best_val = v;
            best = h;
        }
    }
    let rhs = best_val + 7.0 * zeta + 18.0 * chi;
    let estimate = state.estimate();
    let lhs = (estimate - truth.density).abs();
    Ok(OracleTerms {
        x: truth.x.clone(),
        estimate,
        density: truth.density,
        lhs,
        rhs,
        best: truth.grid.get(best),
        bias_bar: truth.bias_bar[best],
        m_kernel: truth.m_kernel[best],
        m_majorant_sup: truth.m_majorant_sup[best],
        zeta,
        chi,
        holds: lhs <= rhs * (1.0 + ORACLE_SLACK),
    })
}

/// Runs the estimator and the oracle at `x` and checks the inequality.
pub fn assert_oracle_inequality(
    est: &Estimator<'_>,
    density: &SeparableDensity,
    x: &[f64],
) -> Result<OracleTerms> {
    let oracle = Oracle::for_estimator(density, est)?;
    let state = est.point_state(x)?;
    oracle.terms(&state)
}

/// `int zeta^p` and `int chi^p` for one sample by tensor quadrature;
/// `truths[i]` must be the oracle at the `i`-th node of `points`.
pub fn residual_integrals(
    est: &Estimator<'_>,
    truths: &[PointTruth],
    points: &TensorGrid,
    p: f64,
) -> Result<(f64, f64)> {
    if truths.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: truths.len(),
        });
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::invalid("p", "need finite p >= 1"));
    }
    let mut zeta = Vec::with_capacity(truths.len());
    let mut chi = Vec::with_capacity(truths.len());
    for truth in truths {
        let state = est.point_state(&truth.x)?;
        if truth.mean.len() != state.fhat.len() {
            return Err(Error::invalid("grid", "oracle and estimator use different bandwidth grids"));
        }
        zeta.push(libm::pow(residual_zeta(truth, &state), p));
        chi.push(libm::pow(residual_chi(truth, &state), p));
    }
    Ok((points.integrate(&zeta)?, points.integrate(&chi)?))
}

/// Both inequalities relating the empirical and true majorants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProportionalReport {
    /// Majorant built from the empirical average, without the factor four.
    pub m_check: f64,
    pub m_true: f64,
    /// `[|Ahat - A| - M]_+`.
    pub chi: f64,
    /// `[Mcheck - 5 M]_+`, bounded by `chi/2`.
    pub upper_gap: f64,
    /// `[M - 4 Mcheck]_+`, bounded by `2 chi`.
    pub lower_gap: f64,
    pub holds: bool,
}

pub fn check_proportional(a_hat: f64, a_true: f64, kappa: f64, volume: f64, n: usize) -> Result<ProportionalReport> {
    if !(a_hat >= 0.0 && a_true >= 0.0) {
        return Err(Error::invalid("a", "averages must be non-negative"));
    }
    if !(kappa > 0.0 && volume > 0.0) || n == 0 {
        return Err(Error::invalid("kappa", "kappa, volume and n must be positive"));
    }
    let m_check = true_majorant(a_hat, kappa, n, volume);
    let m_true = true_majorant(a_true, kappa, n, volume);
    let chi = ((a_hat - a_true).abs() - m_true).max(0.0);
    let upper_gap = (m_check - 5.0 * m_true).max(0.0);
    let lower_gap = (m_true - 4.0 * m_check).max(0.0);
    let tol = 1e-12 * (m_check + m_true);
    Ok(ProportionalReport {
        m_check,
        m_true,
        chi,
        upper_gap,
        lower_gap,
        holds: upper_gap <= 0.5 * chi + tol && lower_gap <= 2.0 * chi + tol,
    })
}

/// `E fhat_h(x)` for one bandwidth.
pub fn kernel_mean(density: &SeparableDensity, bank: &KernelBank, h: &Bandwidth, x: &[f64]) -> Result<f64> {
    check_inputs(density, x, h.dim())?;
    let rule = gauss_legendre(DEFAULT_CELL_NODES);
    let kt = bank.composite().table();
    let v = density
        .terms()
        .iter()
        .map(|t| {
            t.weight
                * (0..h.dim())
                    .map(|j| table_integral(kt, Weight::Signed, &t.factors[j], x[j], h.value(j), density, &rule))
                    .product::<f64>()
        })
        .sum();
    check_finite(v)
}

/// `B_h(f, x) = E fhat_h(x) - f(x)` for one bandwidth.
pub fn bias(density: &SeparableDensity, bank: &KernelBank, h: &Bandwidth, x: &[f64]) -> Result<f64> {
    Ok(kernel_mean(density, bank, h, x)? - density.value(x))
}

/// Fitted power law of the bias norm along one coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingReport {
    pub coordinate: usize,
    pub exponents: Vec<u8>,
    /// `||B_h(f, .)||_r` on the evaluation grid, one per exponent.
    pub norms: Vec<f64>,
    /// Least-squares line of `ln norm` against `ln h_j`; `None` when the
    /// norms vanish.
    pub fit: Option<LineFit>,
}

impl ScalingReport {
    pub fn slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    pub fn is_degenerate(&self) -> bool {
        self.fit.is_none()
    }
}

/// Varies `h_j = 2^-k` over `exponents`, pins the other coordinates at
/// `2^-pinned`, and regresses `ln ||B_h||_r` on `ln h_j`. The norm is taken
/// by trapezoid quadrature on `grid` (`r = inf` gives the maximum).
pub fn bias_norm_scaling(
    density: &SeparableDensity,
    bank: &KernelBank,
    coordinate: usize,
    exponents: &[u8],
    pinned: u8,
    r: f64,
    grid: &TensorGrid,
) -> Result<ScalingReport> {
    let d = density.dim();
    if coordinate >= d {
        return Err(Error::invalid("coordinate", "coordinate exceeds the dimension"));
    }
    if exponents.len() < 3 {
        return Err(Error::invalid("exponents", "need at least three bandwidths"));
    }
    if !(r >= 1.0) {
        return Err(Error::invalid("r", "need r >= 1"));
    }
    if grid.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: grid.dim(),
        });
    }
    let mut norms = Vec::with_capacity(exponents.len());
    let mut x = [0.0; MAX_DIM];
    for &k in exponents {
        let mut exps = [pinned; MAX_DIM];
        exps[coordinate] = k;
        let h = Bandwidth::new(&exps[..d])?;
        let mut vals = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            grid.point(i, &mut x[..d]);
            vals.push(bias(density, bank, &h, &x[..d])?.abs());
        }
        let norm = if r.is_infinite() {
            vals.iter().cloned().fold(0.0, f64::max)
        } else {
            let powered: Vec<f64> = vals.iter().map(|v| libm::pow(*v, r)).collect();
            libm::pow(grid.integrate(&powered)?, 1.0 / r)
        };
        norms.push(norm);
    }
    let peak = norms.iter().cloned().fold(0.0, f64::max);
    let fit = if norms.iter().all(|&v| v > 1e-12 * peak.max(1.0) && v > 1e-13) {
        let lx: Vec<f64> = exponents.iter().map(|&k| libm::log(pow2_neg(k))).collect();
        let ly: Vec<f64> = norms.iter().map(|v| libm::log(*v)).collect();
        Some(least_squares(&lx, &ly)?)
    } else {
        None
    };
    Ok(ScalingReport {
        coordinate,
        exponents: exponents.to_vec(),
        norms,
        fit,
    })
}

#[cfg(test)]
mod tests;
