//! Binary codes with large pairwise Hamming distance.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Largest code size the greedy construction aims for.
pub const MAX_MEMBERS: usize = 1 << 16;
/// Number of independent greedy attempts before giving up.
pub const SEED_BUDGET: usize = 200;

/// A subset of `{0,1}^m` stored as packed bitsets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackingSet {
    m: usize,
    words: usize,
    bits: Vec<u64>,
}

impl PackingSet {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.bits.len() / self.words
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    pub fn member(&self, i: usize) -> Vec<bool> {
        let r = self.row(i);
        (0..self.m).map(|k| r[k / 64] >> (k % 64) & 1 == 1).collect()
    }

    pub fn hamming(&self, i: usize, j: usize) -> usize {
        distance(self.row(i), self.row(j))
    }

    /// Smallest pairwise distance by exhaustive comparison; `None` with
    /// fewer than two members.
    pub fn min_distance(&self) -> Option<usize> {
        let k = self.len();
        let mut best = None;
        for i in 0..k {
            for j in i + 1..k {
                let d = self.hamming(i, j);
                best = Some(best.map_or(d, |b: usize| b.min(d)));
            }
        }
        best
    }

    /// Required size `ceil(2^(m/8))` and separation `ceil(m/8)`.
    pub fn requirements(m: usize) -> (usize, usize) {
        let size = libm::ceil(libm::exp2(m as f64 / 8.0));
        let size = if size > MAX_MEMBERS as f64 { MAX_MEMBERS } else { size as usize };
        (size, m.div_ceil(8))
    }

    /// Exhaustive check of the size and separation requirements.
    pub fn verify(&self) -> Result<()> {
        let (size, sep) = Self::requirements(self.m);
        if self.len() < size {
            return Err(Error::Construction(alloc::format!(
                "packing has {} members, need {size}",
                self.len()
            )));
        }
        if let Some(d) = self.min_distance() {
            if d < sep {
                return Err(Error::Construction(alloc::format!(
                    "packing separation {d} below {sep}"
                )));
            }
        }
        Ok(())
    }
}

fn distance(a: &[u64], b: &[u64]) -> usize {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones() as usize).sum()
}

/// Randomized greedy packing of `{0,1}^m` with separation `ceil(m/8)` and
/// at least `ceil(2^(m/8))` members (capped at [`MAX_MEMBERS`]).
///
/// Each attempt draws uniform candidates from a generator seeded by `rng`
/// and keeps those far from every accepted word. Up to [`SEED_BUDGET`]
/// attempts are made; the result is verified exhaustively.
pub fn vg_packing<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<PackingSet> {
    if m < 8 {
        return Err(Error::invalid("m", "need m >= 8"));
    }
    let (size, sep) = PackingSet::requirements(m);
    let words = m.div_ceil(64);
    let tail = if m.is_multiple_of(64) { u64::MAX } else { (1u64 << (m % 64)) - 1 };
    let candidates = 64 * size + 1024;
    for _ in 0..SEED_BUDGET {
        let mut local = ChaCha8Rng::seed_from_u64(rng.random());
        let mut bits: Vec<u64> = Vec::with_capacity(size * words);
        let mut cand = alloc::vec![0u64; words];
        for _ in 0..candidates {
            for w in cand.iter_mut() {
                *w = local.random();
            }
            cand[words - 1] &= tail;
            if bits.chunks(words).all(|row| distance(row, &cand) >= sep) {
                bits.extend_from_slice(&cand);
                if bits.len() / words == size {
                    break;
                }
            }
        }
        let set = PackingSet { m, words, bits };
        if set.verify().is_ok() {
            return Ok(set);
        }
    }
    Err(Error::Construction(alloc::format!(
        "no packing of size {size} found for m = {m}"
    )))
}
