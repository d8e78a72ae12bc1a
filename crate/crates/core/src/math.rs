//! Small numerical helpers: uniform tables, quadrature and least squares.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// A function tabulated on a uniform grid of `[lo, hi]`, evaluated by linear
/// interpolation and extended by zero outside the interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Table1D {
    lo: f64,
    hi: f64,
    step: f64,
    values: Vec<f64>,
}

impl Table1D {
    pub fn new(lo: f64, hi: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid("table_size", "a table needs at least two nodes"));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid("table_range", "require finite lo < hi"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite table value".into()));
        }
        let step = (hi - lo) / (values.len() - 1) as f64;
        Ok(Table1D { lo, hi, step, values })
    }

    /// Tabulates `f` at `intervals + 1` equispaced nodes.
    pub fn from_fn(lo: f64, hi: f64, intervals: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let step = (hi - lo) / intervals as f64;
        let values = (0..=intervals).map(|i| f(lo + i as f64 * step)).collect();
        Self::new(lo, hi, values)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn intervals(&self) -> usize {
        self.values.len() - 1
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.values.len() - 1 {
            self.hi
        } else {
            self.lo + i as f64 * self.step
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        if !(x >= self.lo && x <= self.hi) {
            return 0.0;
        }
        let s = (x - self.lo) / self.step;
        let i = s as usize;
        let last = self.values.len() - 1;
        if i >= last {
            return self.values[last];
        }
        let frac = s - i as f64;
        let a = self.values[i];
        a + frac * (self.values[i + 1] - a)
    }

    /// Largest absolute node value; exact sup of the interpolant.
    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Exact integral of the interpolant.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.values, self.step)
    }

    /// Exact integral of `|interpolant|`, accounting for sign changes
    /// inside cells.
    pub fn integral_abs(&self) -> f64 {
        let mut total = 0.0;
        for w in self.values.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a * b >= 0.0 {
                total += 0.5 * (a.abs() + b.abs()) * self.step;
            } else {
                total += 0.5 * (a * a + b * b) / (a.abs() + b.abs()) * self.step;
            }
        }
        total
    }
}

/// Composite trapezoid rule on equally spaced samples.
pub fn trapezoid(values: &[f64], step: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            step * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let m = order.div_ceil(2);
    for i in 0..m {
        let mut z = libm::cos(core::f64::consts::PI * (i as f64 + 0.75) / (order as f64 + 0.5));
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..order {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = order as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[order - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

/// Piecewise Gauss-Legendre quadrature on `[a, b]`, split at `breaks`.
///
/// The interval receives about `nodes` evaluation points in total, spread
/// over panels of a fixed low order in proportion to piece length.
#[derive(Clone, Debug)]
pub struct Quadrature {
    nodes: usize,
    gl_x: [f64; 4],
    gl_w: [f64; 4],
}

impl Quadrature {
    pub const ORDER: usize = 4;

    pub fn new(nodes: usize) -> Result<Self> {
        if nodes < Self::ORDER {
            return Err(Error::invalid("quadrature_nodes", "need at least 4 nodes"));
        }
        let (x, w) = gauss_legendre(Self::ORDER);
        Ok(Quadrature {
            nodes,
            gl_x: [x[0], x[1], x[2], x[3]],
            gl_w: [w[0], w[1], w[2], w[3]],
        })
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn refined(&self) -> Self {
        Quadrature {
            nodes: 2 * self.nodes,
            ..self.clone()
        }
    }

    /// Visits every `(point, weight)` pair of the rule on `[a, b]`.
    pub fn for_each_node(&self, a: f64, b: f64, breaks: &[f64], mut visit: impl FnMut(f64, f64)) {
        if !(b > a) {
            return;
        }
        let mut cuts: Vec<f64> = Vec::with_capacity(breaks.len() + 2);
        cuts.push(a);
        cuts.extend(breaks.iter().copied().filter(|&t| t > a && t < b));
        cuts.push(b);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let panels_total = (self.nodes / Self::ORDER).max(1) as f64;
        let span = b - a;
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let len = hi - lo;
            if len <= 0.0 {
                continue;
            }
            let panels = libm::ceil(panels_total * len / span).max(1.0) as usize;
            let width = len / panels as f64;
            for k in 0..panels {
                let left = lo + k as f64 * width;
                let half = 0.5 * width;
                let mid = left + half;
                for (x, wt) in self.gl_x.iter().zip(self.gl_w.iter()) {
                    visit(mid + half * x, half * wt);
                }
            }
        }
    }

    pub fn integrate(&self, a: f64, b: f64, breaks: &[f64], f: impl Fn(f64) -> f64) -> f64 {
        let mut total = 0.0;
        self.for_each_node(a, b, breaks, |t, w| total += w * f(t));
        total
    }

    /// Nodes and weights on `[a, b]` collected into vectors.
    pub fn rule(&self, a: f64, b: f64, breaks: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut xs = Vec::new();
        let mut ws = Vec::new();
        self.for_each_node(a, b, breaks, |t, w| {
            xs.push(t);
            ws.push(w);
        });
        (xs, ws)
    }
}

/// A tensor grid of equispaced nodes on a box, with trapezoid weights.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorGrid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    nodes: Vec<usize>,
}

impl TensorGrid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, nodes: Vec<usize>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() || lo.len() != nodes.len() {
            return Err(Error::invalid("grid", "lo, hi and nodes must have one entry per dimension"));
        }
        for j in 0..lo.len() {
            if !(lo[j].is_finite() && hi[j].is_finite() && lo[j] < hi[j]) {
                return Err(Error::invalid("grid", "each dimension needs finite lo < hi"));
            }
            if nodes[j] < 2 {
                return Err(Error::invalid("grid", "each dimension needs at least two nodes"));
            }
        }
        Ok(TensorGrid { lo, hi, nodes })
    }

    /// The same box with every node count replaced by `2 (m - 1) + 1`.
    pub fn refined(&self) -> Self {
        TensorGrid {
            lo: self.lo.clone(),
            hi: self.hi.clone(),
            nodes: self.nodes.iter().map(|m| 2 * (m - 1) + 1).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn step(&self, j: usize) -> f64 {
        (self.hi[j] - self.lo[j]) / (self.nodes[j] - 1) as f64
    }

    pub fn coordinate(&self, j: usize, k: usize) -> f64 {
        if k + 1 == self.nodes[j] {
            self.hi[j]
        } else {
            self.lo[j] + k as f64 * self.step(j)
        }
    }

    /// Per-dimension node indices of the flat index `i` (last dimension
    /// fastest).
    pub fn multi_index(&self, i: usize, out: &mut [usize]) {
        let mut rest = i;
        for j in (0..self.dim()).rev() {
            out[j] = rest % self.nodes[j];
            rest /= self.nodes[j];
        }
    }

    pub fn point(&self, i: usize, out: &mut [f64]) {
        let mut rest = i;
        for j in (0..self.dim()).rev() {
            let k = rest % self.nodes[j];
            rest /= self.nodes[j];
            out[j] = self.coordinate(j, k);
        }
    }

    /// All nodes, row-major.
    pub fn points(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; self.len() * d];
        for (i, chunk) in out.chunks_exact_mut(d).enumerate() {
            self.point(i, chunk);
        }
        out
    }

    /// Tensor trapezoid weight of node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        let mut rest = i;
        let mut w = 1.0;
        for j in (0..self.dim()).rev() {
            let k = rest % self.nodes[j];
            rest /= self.nodes[j];
            let edge = k == 0 || k + 1 == self.nodes[j];
            w *= self.step(j) * if edge { 0.5 } else { 1.0 };
        }
        w
    }

    /// Tensor trapezoid integral of node values.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: values.len(),
            });
        }
        Ok(values.iter().enumerate().map(|(i, v)| v * self.weight(i)).sum())
    }
}

/// Ordinary least squares line through `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual_se: f64,
}

pub fn least_squares(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::invalid("points", "need at least two points for a line"));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::invalid("points", "abscissae are all equal"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .sum();
    let residual_se = if n > 2 { libm::sqrt(rss / (nf - 2.0)) } else { 0.0 };
    if !(slope.is_finite() && intercept.is_finite()) {
        return Err(Error::Numeric("non-finite regression coefficients".into()));
    }
    Ok(LineFit {
        slope,
        intercept,
        residual_se,
    })
}

pub fn binomial(n: usize, k: usize) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}
