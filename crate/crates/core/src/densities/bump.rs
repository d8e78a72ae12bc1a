//! The smooth bump `Lambda(t) = c exp(-1/(1 - t^2))` on `[-1, 1]`, its
//! distribution function `Phi`, the second antiderivative `Psi`, and the
//! odd wave `g(t) = Phi(1 - t) - 2 Phi(-t) + Phi(-1 - t)`.
//!
//! `Lambda` is stored with its derivative at every node and interpolated by
//! cubic Hermite polynomials, which are integrated in closed form. `Phi` and
//! `Psi` are therefore exact antiderivatives of the interpolant, so interval
//! integrals of `Lambda`, `Phi` and `g` are consistent to rounding.

use alloc::vec::Vec;

pub const BUMP_INTERVALS: usize = 1 << 16;

#[derive(Clone, Debug)]
pub struct BumpProfile {
    step: f64,
    lambda: Vec<f64>,
    slope: Vec<f64>,
    cdf: Vec<f64>,
    second: Vec<f64>,
    norm: f64,
}

fn raw_bump(t: f64) -> f64 {
    let s = 1.0 - t * t;
    if s <= 0.0 {
        0.0
    } else {
        libm::exp(-1.0 / s)
    }
}

fn raw_bump_slope(t: f64) -> f64 {
    let s = 1.0 - t * t;
    if s <= 0.0 {
        0.0
    } else {
        raw_bump(t) * (-2.0 * t / (s * s))
    }
}

struct Seg {
    h: f64,
    y0: f64,
    m0: f64,
    y1: f64,
    m1: f64,
}

impl Seg {
    fn value(&self, s: f64) -> f64 {
        let s2 = s * s;
        let s3 = s2 * s;
        self.y0 * (2.0 * s3 - 3.0 * s2 + 1.0)
            + self.h * self.m0 * (s3 - 2.0 * s2 + s)
            + self.y1 * (-2.0 * s3 + 3.0 * s2)
            + self.h * self.m1 * (s3 - s2)
    }

    /// Integral over `[0, s]` in the local variable, scaled to `x`.
    fn first(&self, s: f64) -> f64 {
        let s2 = s * s;
        let s3 = s2 * s;
        let s4 = s3 * s;
        self.h
            * (self.y0 * (0.5 * s4 - s3 + s)
                + self.h * self.m0 * (0.25 * s4 - 2.0 * s3 / 3.0 + 0.5 * s2)
                + self.y1 * (-0.5 * s4 + s3)
                + self.h * self.m1 * (0.25 * s4 - s3 / 3.0))
    }

    /// Double integral over `[0, s]`, scaled to `x`.
    fn second(&self, s: f64) -> f64 {
        let s2 = s * s;
        let s3 = s2 * s;
        let s4 = s3 * s;
        let s5 = s4 * s;
        self.h
            * self.h
            * (self.y0 * (0.1 * s5 - 0.25 * s4 + 0.5 * s2)
                + self.h * self.m0 * (s5 / 20.0 - s4 / 6.0 + s3 / 6.0)
                + self.y1 * (-0.1 * s5 + 0.25 * s4)
                + self.h * self.m1 * (s5 / 20.0 - s4 / 12.0))
    }
}

impl BumpProfile {
    pub fn new() -> Self {
        Self::with_intervals(BUMP_INTERVALS)
    }

    pub fn with_intervals(intervals: usize) -> Self {
        let step = 2.0 / intervals as f64;
        let node = |i: usize| -1.0 + i as f64 * step;
        let mut lambda: Vec<f64> = (0..=intervals).map(|i| raw_bump(node(i))).collect();
        let mut slope: Vec<f64> = (0..=intervals).map(|i| raw_bump_slope(node(i))).collect();
        lambda[0] = 0.0;
        lambda[intervals] = 0.0;
        slope[0] = 0.0;
        slope[intervals] = 0.0;
        let mut profile = BumpProfile {
            step,
            lambda,
            slope,
            cdf: Vec::new(),
            second: Vec::new(),
            norm: 1.0,
        };
        let mut cdf = Vec::with_capacity(intervals + 1);
        let mut second = Vec::with_capacity(intervals + 1);
        cdf.push(0.0);
        second.push(0.0);
        for i in 0..intervals {
            let seg = profile.seg(i);
            let c = cdf[i];
            second.push(second[i] + c * step + seg.second(1.0));
            cdf.push(c + seg.first(1.0));
        }
        let total = cdf[intervals];
        let norm = 1.0 / total;
        for v in profile.lambda.iter_mut().chain(profile.slope.iter_mut()) {
            *v *= norm;
        }
        for v in cdf.iter_mut().chain(second.iter_mut()) {
            *v *= norm;
        }
        profile.cdf = cdf;
        profile.second = second;
        profile.norm = norm;
        profile
    }

    fn seg(&self, i: usize) -> Seg {
        Seg {
            h: self.step,
            y0: self.lambda[i],
            m0: self.slope[i],
            y1: self.lambda[i + 1],
            m1: self.slope[i + 1],
        }
    }

    /// Interval index and local coordinate of `t` in `[-1, 1]`.
    fn locate(&self, t: f64) -> (usize, f64) {
        let pos = (t + 1.0) / self.step;
        let last = self.lambda.len() - 2;
        let i = (pos as usize).min(last);
        (i, pos - i as f64)
    }

    /// The normalizing constant `c`.
    pub fn constant(&self) -> f64 {
        self.norm
    }

    /// `Lambda(t)`.
    pub fn lambda(&self, t: f64) -> f64 {
        if !(t > -1.0 && t < 1.0) {
            return 0.0;
        }
        let (i, s) = self.locate(t);
        self.seg(i).value(s).max(0.0)
    }

    /// Closed-form `Lambda(t)`, used by samplers.
    pub fn lambda_exact(&self, t: f64) -> f64 {
        self.norm * raw_bump(t)
    }

    /// `Phi(t) = int_{-1}^t Lambda`, with `Phi(t) = 1 - Phi(-t)` imposed.
    pub fn cdf(&self, t: f64) -> f64 {
        if !(t > -1.0) {
            return 0.0;
        }
        if t >= 1.0 {
            return 1.0;
        }
        if t > 0.0 {
            return 1.0 - self.cdf(-t);
        }
        if t == 0.0 {
            return 0.5;
        }
        let (i, s) = self.locate(t);
        (self.cdf[i] + self.seg(i).first(s)).max(0.0)
    }

    /// `Psi(t) = int_{-1}^t Phi`, with `Psi(t) = t + Psi(-t)` imposed, so
    /// `Psi(t) = t` beyond `1`.
    pub fn second(&self, t: f64) -> f64 {
        if !(t > -1.0) {
            return 0.0;
        }
        if t > 0.0 {
            return t + self.second(-t);
        }
        let (i, s) = self.locate(t);
        self.second[i] + self.cdf[i] * s * self.step + self.seg(i).second(s)
    }

    /// `g(t) = Phi(1 - t) - 2 Phi(-t) + Phi(-1 - t)`; odd, supported on
    /// `[-2, 2]`, zero mean, bounded by one.
    pub fn wave(&self, t: f64) -> f64 {
        if t.abs() >= 2.0 {
            return 0.0;
        }
        self.cdf(1.0 - t) - 2.0 * self.cdf(-t) + self.cdf(-1.0 - t)
    }

    /// `int_{-inf}^t g`.
    pub fn wave_primitive(&self, t: f64) -> f64 {
        if t <= -2.0 || t >= 2.0 {
            return 0.0;
        }
        -self.second(1.0 - t) + 2.0 * self.second(-t) - self.second(-1.0 - t)
    }
}

impl Default for BumpProfile {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile() -> BumpProfile {
        BumpProfile::new()
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn bump_is_a_density() {
        let b = profile();
        assert_eq!(b.lambda(1.0), 0.0);
        assert_eq!(b.lambda(-1.0), 0.0);
        assert!((b.cdf(1.0) - 1.0).abs() < 1e-15);
        assert!((b.cdf(0.0) - 0.5).abs() < 1e-12);
        let direct = simpson(|t| b.lambda_exact(t), -1.0, 1.0, 200_000);
        assert!((direct - 1.0).abs() < 1e-8);
        for i in 0..1000 {
            let t = -1.0 + i as f64 * 0.002 + 0.0007;
            assert!(b.lambda(t) >= 0.0);
            assert!((b.lambda(t) - b.lambda_exact(t)).abs() < 1e-10);
        }
    }

    #[test]
    fn cdf_and_second_match_quadrature() {
        let b = profile();
        for t in [-0.9f64, -0.3, 0.0, 0.42, 0.97, 1.5] {
            let c = simpson(|u| b.lambda_exact(u), -1.0, t.min(1.0), 100_000);
            assert!((b.cdf(t) - c).abs() < 1e-9, "t={t}");
            let s = simpson(|u| b.cdf(u), -1.0, t, 100_000);
            assert!((b.second(t) - s).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn wave_properties() {
        let b = profile();
        assert_eq!(b.wave(0.0), 0.0);
        let mut sup = 0.0f64;
        for i in 0..=10_000 {
            let t = -2.0 + 4.0 * i as f64 / 10_000.0;
            sup = sup.max(b.wave(t).abs());
            assert!((b.wave(-t) + b.wave(t)).abs() < 1e-14);
        }
        assert!(sup <= 1.0);
        let integral = simpson(|t| b.wave(t), -2.0, 2.0, 100_000);
        assert!(integral.abs() < 1e-8);
        assert!(b.wave_primitive(2.5).abs() < 1e-15);
        assert!(b.wave_primitive(1.9999999).abs() < 1e-9);
        let half = simpson(|t| b.wave(t), -2.0, 0.3, 100_000);
        assert!((b.wave_primitive(0.3) - half).abs() < 1e-9);
    }
}
