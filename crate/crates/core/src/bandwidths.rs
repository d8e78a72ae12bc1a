//! Dyadic bandwidth vectors and the lattice they form.

use core::fmt;

use alloc::vec::Vec;

use crate::{Error, Result};

/// Largest supported dimension.
pub const MAX_DIM: usize = 4;

/// A dyadic bandwidth `h = (2^{-k_1}, ..., 2^{-k_d})`, carried by its
/// exponents.
///
/// Ordering is lexicographic in the exponents, which is also the iteration
/// order of [`BandwidthGrid`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bandwidth {
    dim: u8,
    exps: [u8; MAX_DIM],
}

impl Bandwidth {
    pub fn new(exponents: &[u8]) -> Result<Self> {
        let d = exponents.len();
        if d == 0 || d > MAX_DIM {
            return Err(Error::invalid("dim", "dimension must be in 1..=4"));
        }
        if exponents.iter().any(|&k| k > 63) {
            return Err(Error::invalid("exponent", "exponents must be at most 63"));
        }
        let mut exps = [0u8; MAX_DIM];
        exps[..d].copy_from_slice(exponents);
        Ok(Bandwidth { dim: d as u8, exps })
    }

    /// The bandwidth `(1, ..., 1)`.
    pub fn ones(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::invalid("dim", "dimension must be in 1..=4"));
        }
        Ok(Bandwidth {
            dim: dim as u8,
            exps: [0; MAX_DIM],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn exponents(&self) -> &[u8] {
        &self.exps[..self.dim as usize]
    }

    pub fn exponent(&self, j: usize) -> u8 {
        self.exponents()[j]
    }

    pub fn exponent_sum(&self) -> u32 {
        self.exponents().iter().map(|&k| k as u32).sum()
    }

    /// `h_j = 2^{-k_j}`.
    pub fn value(&self, j: usize) -> f64 {
        pow2_neg(self.exponent(j))
    }

    pub fn values(&self) -> Vec<f64> {
        self.exponents().iter().map(|&k| pow2_neg(k)).collect()
    }

    /// `V_h = 2^{-sum k_j}`.
    pub fn volume(&self) -> f64 {
        libm::ldexp(1.0, -(self.exponent_sum() as i32))
    }

    fn check(&self, other: &Bandwidth) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(())
    }

    fn zip(&self, other: &Bandwidth, f: impl Fn(u8, u8) -> u8) -> Bandwidth {
        let mut exps = [0u8; MAX_DIM];
        for j in 0..self.dim() {
            exps[j] = f(self.exps[j], other.exps[j]);
        }
        Bandwidth { dim: self.dim, exps }
    }

    /// Coordinate-wise maximum of the bandwidth values.
    pub fn join(&self, other: &Bandwidth) -> Result<Bandwidth> {
        self.check(other)?;
        Ok(self.zip(other, u8::min))
    }

    /// Coordinate-wise minimum of the bandwidth values.
    pub fn meet(&self, other: &Bandwidth) -> Result<Bandwidth> {
        self.check(other)?;
        Ok(self.zip(other, u8::max))
    }

    /// `self >= other` coordinate-wise (in bandwidth values).
    pub fn geq(&self, other: &Bandwidth) -> Result<bool> {
        self.check(other)?;
        Ok(self
            .exponents()
            .iter()
            .zip(other.exponents())
            .all(|(a, b)| a <= b))
    }

    /// Exponents of the ratio `(h ∧ η) / (h ∨ η)`: `|k_j - e_j|`.
    pub fn ratio_exponents(&self, other: &Bandwidth) -> Result<Vec<u8>> {
        self.check(other)?;
        Ok(self
            .exponents()
            .iter()
            .zip(other.exponents())
            .map(|(a, b)| a.abs_diff(*b))
            .collect())
    }

    pub fn ratio(&self, other: &Bandwidth) -> Result<Vec<f64>> {
        Ok(self
            .ratio_exponents(other)?
            .into_iter()
            .map(pow2_neg)
            .collect())
    }
}

impl fmt::Debug for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bandwidth{:?}", self.exponents())
    }
}

#[inline]
pub(crate) fn pow2_neg(k: u8) -> f64 {
    libm::ldexp(1.0, -(k as i32))
}

/// The lattice `H = {2^{-k} : k_j = 0..=max_exponent}^d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BandwidthGrid {
    dim: usize,
    max_exponent: u8,
}

impl BandwidthGrid {
    /// The grid for sample size `n`: `max_exponent = floor(log2 n)`.
    pub fn for_sample_size(n: usize, dim: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("n", "the bandwidth grid needs n >= 2"));
        }
        let k = (usize::BITS - 1 - n.leading_zeros()) as u8;
        Self::with_max_exponent(dim, k)
    }

    pub fn with_max_exponent(dim: usize, max_exponent: u8) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::invalid("dim", "dimension must be in 1..=4"));
        }
        if max_exponent > 63 {
            return Err(Error::invalid("max_exponent", "must be at most 63"));
        }
        let grid = BandwidthGrid { dim, max_exponent };
        if (grid.side() as u128).pow(dim as u32) > u32::MAX as u128 {
            return Err(Error::invalid("max_exponent", "grid too large"));
        }
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_exponent(&self) -> u8 {
        self.max_exponent
    }

    /// Number of exponent values per coordinate.
    pub fn side(&self) -> usize {
        self.max_exponent as usize + 1
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, h: &Bandwidth) -> bool {
        h.dim() == self.dim && h.exponents().iter().all(|&k| k <= self.max_exponent)
    }

    /// Mixed-radix position of `h`, the first coordinate most significant.
    pub fn index_of(&self, h: &Bandwidth) -> Result<usize> {
        if !self.contains(h) {
            return Err(Error::invalid("bandwidth", "bandwidth is not in the grid"));
        }
        Ok(self.index_unchecked(h.exponents()))
    }

    #[inline]
    pub(crate) fn index_unchecked(&self, exps: &[u8]) -> usize {
        let side = self.side();
        exps.iter().fold(0, |acc, &k| acc * side + k as usize)
    }

    pub fn get(&self, index: usize) -> Bandwidth {
        let side = self.side();
        let mut exps = [0u8; MAX_DIM];
        let mut rest = index;
        for j in (0..self.dim).rev() {
            exps[j] = (rest % side) as u8;
            rest /= side;
        }
        Bandwidth {
            dim: self.dim as u8,
            exps,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Bandwidth> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    /// All `η` in the grid with `η >= h`, in lexicographic order.
    pub fn iter_geq(&self, h: Bandwidth) -> impl Iterator<Item = Bandwidth> + '_ {
        self.iter()
            .filter(move |eta| eta.exponents().iter().zip(h.exponents()).all(|(a, b)| a <= b))
    }

    /// The ratio set `{2^{-b} : b = 0..=max_exponent}`.
    pub fn ratio_set(&self) -> Vec<f64> {
        (0..=self.max_exponent).map(pow2_neg).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bw(e: &[u8]) -> Bandwidth {
        Bandwidth::new(e).unwrap()
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(BandwidthGrid::for_sample_size(8, 2).unwrap().len(), 16);
        let g = BandwidthGrid::for_sample_size(9, 1).unwrap();
        assert_eq!(g.max_exponent(), 3);
        let exps: Vec<u8> = g.iter().map(|h| h.exponent(0)).collect();
        assert_eq!(exps, [0, 1, 2, 3]);
        assert_eq!(BandwidthGrid::for_sample_size(2, 3).unwrap().len(), 8);
        assert!(BandwidthGrid::for_sample_size(1, 1).is_err());
        assert!(BandwidthGrid::for_sample_size(8, 5).is_err());
    }

    #[test]
    fn join_meet_ratio_example() {
        let h = bw(&[2, 0]);
        let eta = bw(&[1, 3]);
        assert_eq!(h.join(&eta).unwrap().values(), [0.5, 1.0]);
        assert_eq!(h.meet(&eta).unwrap().values(), [0.25, 0.125]);
        assert_eq!(h.ratio(&eta).unwrap(), [0.5, 0.125]);
        assert_eq!(h.ratio(&h).unwrap(), [1.0, 1.0]);
        assert!(bw(&[0, 0]).geq(&bw(&[1, 2])).unwrap());
        assert!(!bw(&[1, 0]).geq(&bw(&[0, 2])).unwrap());
        assert!(h.join(&bw(&[1])).is_err());
    }

    #[test]
    fn index_roundtrip_and_order() {
        let g = BandwidthGrid::with_max_exponent(3, 4).unwrap();
        let all: Vec<Bandwidth> = g.iter().collect();
        for (i, h) in all.iter().enumerate() {
            assert_eq!(g.index_of(h).unwrap(), i);
        }
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert!(g.index_of(&bw(&[5, 0, 0])).is_err());
    }

    #[test]
    fn ones_bandwidth() {
        assert_eq!(Bandwidth::ones(3).unwrap().exponents(), [0, 0, 0]);
        assert!(Bandwidth::ones(0).is_err());
        assert!(Bandwidth::ones(7).is_err());
    }

    proptest! {
        #[test]
        fn lattice_laws(a in proptest::collection::vec(0u8..10, 3), b in proptest::collection::vec(0u8..10, 3)) {
            let h = bw(&a);
            let eta = bw(&b);
            prop_assert_eq!(h.join(&eta).unwrap(), eta.join(&h).unwrap());
            prop_assert_eq!(h.meet(&h.join(&eta).unwrap()).unwrap(), h);
            let vj = h.join(&eta).unwrap().volume();
            let vm = h.meet(&eta).unwrap().volume();
            prop_assert_eq!(vj * vm, h.volume() * eta.volume());
        }

        #[test]
        fn geq_family_size(a in proptest::collection::vec(0u8..5, 1..4)) {
            let g = BandwidthGrid::with_max_exponent(a.len(), 4).unwrap();
            let h = bw(&a);
            let expected: usize = a.iter().map(|&k| k as usize + 1).product();
            prop_assert_eq!(g.iter_geq(h).count(), expected);
            prop_assert!(g.iter_geq(h).all(|eta| eta.geq(&h).unwrap()));
        }
    }
}
