//! The data-driven estimator.
//!
//! For every bandwidth `h` of the dyadic grid the kernel estimator is
//! `fhat_h(x) = (1/n) sum_i K_h(X_i - x)` and the pair estimator is
//! `fhat_{h,eta}(x) = (1/n) sum_i [K_h * K_eta](X_i - x)`. The empirical
//! majorant of a kernel `g` is
//!
//! ```text
//! Mhat_h(g,x) = 4 sqrt(kappa Ahat_h(g,x) ln n / (n V_h)) + 4 kappa ln n / (n V_h)
//! Ahat_h(g,x) = (1/n) sum_i |g_h(X_i - x)|
//! ```
//!
//! and the selection criterion is
//!
//! ```text
//! Rhat_h(x) = sup_eta [ |fhat_{h,eta} - fhat_eta| - Mhat_{h v eta}(Q) - Mhat_eta(K) ]_+
//!           + sup_{eta >= h} Mhat_eta(Q) + Mhat_h(K).
//! ```
//!
//! The estimate at `x` is `fhat_{hhat}(x)` with `hhat` the minimizer of
//! `Rhat_h(x)`; ties go to the smallest exponent sum, then to the
//! lexicographically smallest exponents.

mod dataset;

use alloc::vec;
use alloc::vec::Vec;

pub use dataset::Dataset;

use crate::bandwidths::{pow2_neg, Bandwidth, BandwidthGrid};
use crate::kernel::KernelBank;
use crate::{Error, Result, MAX_DIM};

/// The threshold constant `kappa` together with the inputs of its default.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KappaPolicy {
    kappa: f64,
    dim: usize,
    p: f64,
    k_inf: f64,
    overridden: bool,
}

/// `kappa = (k_inf v 1)^2 [(4d + 2) p + 4(d + 1)]`.
pub fn kappa_default(dim: usize, p: f64, k_inf: f64) -> Result<KappaPolicy> {
    if dim == 0 {
        return Err(Error::invalid("dim", "dimension must be at least 1"));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::invalid("p", "p must be finite and at least 1"));
    }
    if !(k_inf > 0.0 && k_inf.is_finite()) {
        return Err(Error::invalid("k_inf", "kernel sup norm must be positive"));
    }
    let d = dim as f64;
    let m = k_inf.max(1.0);
    Ok(KappaPolicy {
        kappa: m * m * ((4.0 * d + 2.0) * p + 4.0 * (d + 1.0)),
        dim,
        p,
        k_inf,
        overridden: false,
    })
}

impl KappaPolicy {
    /// Replaces the threshold by an explicit positive value.
    pub fn with_kappa(self, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::invalid("kappa", "kappa must be positive and finite"));
        }
        Ok(KappaPolicy {
            kappa,
            overridden: true,
            ..self
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn k_inf(&self) -> f64 {
        self.k_inf
    }

    pub fn is_override(&self) -> bool {
        self.overridden
    }
}

/// `4 sqrt(kappa a ln n / (n v)) + 4 kappa ln n / (n v)`.
#[inline]
pub fn empirical_majorant(a_hat: f64, kappa: f64, n: usize, volume: f64) -> f64 {
    4.0 * true_majorant(a_hat, kappa, n, volume)
}

/// `sqrt(kappa a ln n / (n v)) + kappa ln n / (n v)`.
#[inline]
pub fn true_majorant(a: f64, kappa: f64, n: usize, volume: f64) -> f64 {
    let base = kappa * libm::log(n as f64) / (n as f64 * volume);
    libm::sqrt(a.max(0.0) * base) + base
}

/// Which kernel an absolute average or majorant refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    /// The product kernel `K`.
    Kernel,
    /// The majorant kernel `Q`.
    Majorant,
}

/// Result of the selection rule at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct PointwiseFit {
    pub x: Vec<f64>,
    pub selected: Bandwidth,
    pub estimate: f64,
    /// `Rhat_h(x)` in grid order, kept when diagnostics are requested.
    pub criterion: Option<Vec<f64>>,
    /// Data points examined by box queries.
    pub visited: usize,
}

/// Everything computed at one evaluation point.
#[derive(Clone, Debug)]
pub struct PointState {
    pub x: Vec<f64>,
    /// `fhat_eta(x)` in grid order.
    pub fhat: Vec<f64>,
    pub a_hat_kernel: Vec<f64>,
    pub a_hat_majorant: Vec<f64>,
    pub m_hat_kernel: Vec<f64>,
    pub m_hat_majorant: Vec<f64>,
    /// `sup_{eta >= h} Mhat_eta(Q, x)` in grid order.
    pub m_hat_majorant_sup: Vec<f64>,
    pub criterion: Vec<f64>,
    pub selected: usize,
    pub visited: usize,
    pair: PairTable,
}

impl PointState {
    /// `fhat_{h,eta}(x)` for grid indices `h`, `eta`.
    pub fn pair(&self, h: usize, eta: usize) -> f64 {
        self.pair.get(h, eta)
    }

    pub fn estimate(&self) -> f64 {
        self.fhat[self.selected]
    }
}

/// Pair estimates keyed by per-coordinate unordered exponent pairs; the
/// value only depends on `(min, max)` of each coordinate.
#[derive(Clone, Debug)]
struct PairTable {
    dim: usize,
    side: usize,
    tri: usize,
    values: Vec<f64>,
}

impl PairTable {
    #[inline]
    fn tri_index(a: usize, b: usize) -> usize {
        b * (b + 1) / 2 + a
    }

    fn key(&self, h: usize, eta: usize) -> usize {
        let (mut hr, mut er) = (h, eta);
        let mut key = 0;
        let mut mult = 1;
        for _ in 0..self.dim {
            let a = hr % self.side;
            let b = er % self.side;
            hr /= self.side;
            er /= self.side;
            key += mult * Self::tri_index(a.min(b), a.max(b));
            mult *= self.tri;
        }
        key
    }

    fn get(&self, h: usize, eta: usize) -> f64 {
        self.values[self.key(h, eta)]
    }
}

/// The selection procedure bound to a dataset, kernel tables and `kappa`.
#[derive(Clone, Debug)]
pub struct Estimator<'a> {
    data: &'a Dataset,
    bank: &'a KernelBank,
    grid: BandwidthGrid,
    kappa: f64,
    n: usize,
}

impl<'a> Estimator<'a> {
    /// Uses the grid with `max_exponent = floor(log2 n)`.
    pub fn new(data: &'a Dataset, bank: &'a KernelBank, policy: &KappaPolicy) -> Result<Self> {
        let grid = BandwidthGrid::for_sample_size(data.len(), data.dim())?;
        Self::with_grid(data, bank, policy, grid)
    }

    pub fn with_grid(
        data: &'a Dataset,
        bank: &'a KernelBank,
        policy: &KappaPolicy,
        grid: BandwidthGrid,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("n", "the dataset is empty"));
        }
        if grid.dim() != data.dim() {
            return Err(Error::DimensionMismatch {
                expected: data.dim(),
                got: grid.dim(),
            });
        }
        if grid.max_exponent() > bank.max_exponent() {
            return Err(Error::invalid(
                "max_exponent",
                "kernel tables do not cover the bandwidth grid",
            ));
        }
        Ok(Estimator {
            data,
            bank,
            grid,
            kappa: policy.kappa(),
            n: data.len(),
        })
    }

    pub fn grid(&self) -> &BandwidthGrid {
        &self.grid
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn bank(&self) -> &'a KernelBank {
        self.bank
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.grid.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("x", "evaluation point must be finite"));
        }
        Ok(())
    }

    fn check_bandwidth(&self, h: &Bandwidth) -> Result<()> {
        if !self.grid.contains(h) {
            return Err(Error::invalid("bandwidth", "bandwidth is not in the grid"));
        }
        Ok(())
    }

    /// `(fhat_eta, Ahat_eta(K), Ahat_eta(Q), visited)` from a single box scan.
    fn family_entry(&self, exps: &[u8], x: &[f64]) -> (f64, f64, f64, usize) {
        let d = x.len();
        let env = self.bank.envelope(self.grid.max_exponent());
        let k = self.bank.composite();
        let mut lo = [0.0; MAX_DIM];
        let mut hi = [0.0; MAX_DIM];
        let mut scale = [0.0; MAX_DIM];
        for j in 0..d {
            let h = pow2_neg(exps[j]);
            scale[j] = 1.0 / h;
            lo[j] = x[j] - h;
            hi[j] = x[j] + h;
        }
        let (mut sum_k, mut sum_abs, mut sum_q) = (0.0, 0.0, 0.0);
        let visited = self.data.for_each_in_box(&lo[..d], &hi[..d], |p| {
            let mut kv = 1.0;
            let mut qv = 1.0;
            for j in 0..d {
                let u = (p[j] - x[j]) * scale[j];
                qv *= env.eval(u);
                kv *= k.eval(u);
            }
            sum_k += kv;
            sum_abs += kv.abs();
            sum_q += qv;
        });
        let norm = scale[..d].iter().product::<f64>() / self.n as f64;
        (sum_k * norm, sum_abs * norm, sum_q * norm, visited)
    }

    /// `fhat_{h,eta}(x)` for a canonical per-coordinate pair `(a_j <= b_j)`.
    fn pair_entry(&self, lo_exp: &[u8], hi_exp: &[u8], x: &[f64]) -> (f64, usize) {
        let d = x.len();
        let mut lo = [0.0; MAX_DIM];
        let mut hi = [0.0; MAX_DIM];
        let mut scale = [0.0; MAX_DIM];
        let mut prof = [0u8; MAX_DIM];
        for j in 0..d {
            let a = lo_exp[j];
            let b = hi_exp[j];
            prof[j] = b - a;
            let wide = pow2_neg(a);
            let half = 0.5 * (1.0 + pow2_neg(b - a)) * wide;
            scale[j] = 1.0 / wide;
            lo[j] = x[j] - half;
            hi[j] = x[j] + half;
        }
        let mut sum = 0.0;
        let visited = self.data.for_each_in_box(&lo[..d], &hi[..d], |p| {
            let mut v = 1.0;
            for j in 0..d {
                v *= self.bank.profile(prof[j]).eval((p[j] - x[j]) * scale[j]);
            }
            sum += v;
        });
        let norm = scale[..d].iter().product::<f64>() / self.n as f64;
        (sum * norm, visited)
    }

    pub fn fhat(&self, h: &Bandwidth, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.check_bandwidth(h)?;
        Ok(self.family_entry(h.exponents(), x).0)
    }

    pub fn fhat_pair(&self, h: &Bandwidth, eta: &Bandwidth, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.check_bandwidth(h)?;
        self.check_bandwidth(eta)?;
        let lo: Vec<u8> = h.join(eta)?.exponents().to_vec();
        let hi: Vec<u8> = h.meet(eta)?.exponents().to_vec();
        Ok(self.pair_entry(&lo, &hi, x).0)
    }

    pub fn a_hat(&self, kind: KernelKind, h: &Bandwidth, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.check_bandwidth(h)?;
        let (_, a_k, a_q, _) = self.family_entry(h.exponents(), x);
        Ok(match kind {
            KernelKind::Kernel => a_k,
            KernelKind::Majorant => a_q,
        })
    }

    pub fn m_hat(&self, kind: KernelKind, h: &Bandwidth, x: &[f64]) -> Result<f64> {
        let a = self.a_hat(kind, h, x)?;
        Ok(empirical_majorant(a, self.kappa, self.n, h.volume()))
    }

    /// `Rhat_h(x)`.
    pub fn criterion(&self, h: &Bandwidth, x: &[f64]) -> Result<f64> {
        self.check_bandwidth(h)?;
        let state = self.point_state(x)?;
        Ok(state.criterion[self.grid.index_of(h)?])
    }

    /// Computes every family, pair and majorant value at `x`, the
    /// criterion for all `h`, and the selected index.
    pub fn point_state(&self, x: &[f64]) -> Result<PointState> {
        self.check_point(x)?;
        let grid = &self.grid;
        let d = grid.dim();
        let len = grid.len();
        let side = grid.side();
        let mut visited = 0usize;

        let mut fhat = vec![0.0; len];
        let mut a_k = vec![0.0; len];
        let mut a_q = vec![0.0; len];
        let mut m_k = vec![0.0; len];
        let mut m_q = vec![0.0; len];
        for (i, eta) in grid.iter().enumerate() {
            let (f, ak, aq, v) = self.family_entry(eta.exponents(), x);
            visited += v;
            fhat[i] = f;
            a_k[i] = ak;
            a_q[i] = aq;
            let vol = eta.volume();
            m_k[i] = empirical_majorant(ak, self.kappa, self.n, vol);
            m_q[i] = empirical_majorant(aq, self.kappa, self.n, vol);
        }

        let tri = side * (side + 1) / 2;
        let combos = tri.checked_pow(d as u32).ok_or_else(|| {
            Error::invalid("max_exponent", "pair table would overflow")
        })?;
        let mut values = vec![0.0; combos];
        let mut lo = [0u8; MAX_DIM];
        let mut hi = [0u8; MAX_DIM];
        for (key, slot) in values.iter_mut().enumerate() {
            let mut rest = key;
            for j in (0..d).rev() {
                let t = rest % tri;
                rest /= tri;
                let (a, b) = untri(t);
                lo[j] = a as u8;
                hi[j] = b as u8;
            }
            let (v, vis) = self.pair_entry(&lo[..d], &hi[..d], x);
            visited += vis;
            *slot = v;
        }
        let pair = PairTable {
            dim: d,
            side,
            tri,
            values,
        };

        // sup over eta >= h of Mhat_eta(Q): a running maximum over the
        // coordinate-wise down-set in exponent space, one axis at a time.
        let mut m_q_sup = m_q.clone();
        let mut stride = 1;
        for _ in 0..d {
            for i in 0..len {
                let k = (i / stride) % side;
                if k > 0 {
                    let prev = m_q_sup[i - stride];
                    if prev > m_q_sup[i] {
                        m_q_sup[i] = prev;
                    }
                }
            }
            stride *= side;
        }

        let mut join_scratch = [0u8; MAX_DIM];
        let mut criterion = vec![0.0; len];
        for h in 0..len {
            let hb = grid.get(h);
            let mut sup_bracket = 0.0f64;
            for eta in 0..len {
                let eb = grid.get(eta);
                for j in 0..d {
                    join_scratch[j] = hb.exponent(j).min(eb.exponent(j));
                }
                let join = grid.index_unchecked(&join_scratch[..d]);
                let bracket = (pair.get(h, eta) - fhat[eta]).abs() - m_q[join] - m_k[eta];
                if bracket > sup_bracket {
                    sup_bracket = bracket;
                }
            }
            criterion[h] = sup_bracket + m_q_sup[h] + m_k[h];
        }

        let selected = select_index(grid, &criterion);
        Ok(PointState {
            x: x.to_vec(),
            fhat,
            a_hat_kernel: a_k,
            a_hat_majorant: a_q,
            m_hat_kernel: m_k,
            m_hat_majorant: m_q,
            m_hat_majorant_sup: m_q_sup,
            criterion,
            selected,
            visited,
            pair,
        })
    }

    /// Runs the selection rule at `x`.
    pub fn select(&self, x: &[f64], diagnostics: bool) -> Result<PointwiseFit> {
        let state = self.point_state(x)?;
        Ok(PointwiseFit {
            selected: self.grid.get(state.selected),
            estimate: state.estimate(),
            visited: state.visited,
            criterion: diagnostics.then(|| state.criterion.clone()),
            x: state.x,
        })
    }

    /// Independent fits at each row of `points` (row-major, `dim` columns).
    pub fn estimate_on_grid(&self, points: &[f64], diagnostics: bool) -> Result<Vec<PointwiseFit>> {
        points
            .chunks_exact(self.grid.dim())
            .map(|x| self.select(x, diagnostics))
            .collect()
    }
}

fn untri(t: usize) -> (usize, usize) {
    let mut b = (libm::sqrt(2.0 * t as f64) as usize).saturating_sub(1);
    while (b + 1) * (b + 2) / 2 <= t {
        b += 1;
    }
    (t - b * (b + 1) / 2, b)
}

/// Index of the minimum; ties go to the smallest exponent sum, then to the
/// earliest index (lexicographic exponents).
pub fn select_index(grid: &BandwidthGrid, criterion: &[f64]) -> usize {
    let mut best = 0;
    let mut best_sum = grid.get(0).exponent_sum();
    for i in 1..criterion.len() {
        let sum = grid.get(i).exponent_sum();
        let c = criterion[i];
        let b = criterion[best];
        if c < b || (c == b && sum < best_sum) {
            best = i;
            best_sum = sum;
        }
    }
    best
}
