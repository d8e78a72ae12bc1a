use alloc::vec::Vec;

use crate::{Error, Result, MAX_DIM};

/// Sample points in `R^d` with one sorted index per coordinate for
/// axis-aligned box queries.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dim: usize,
    points: Vec<f64>,
    order: Vec<Vec<u32>>,
    sorted: Vec<Vec<f64>>,
}

impl Dataset {
    /// Builds a dataset from row-major coordinates.
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::invalid("dim", "dimension must be in 1..=4"));
        }
        if !points.len().is_multiple_of(dim) {
            return Err(Error::invalid("points", "coordinate count is not a multiple of dim"));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("points", "coordinates must be finite"));
        }
        let n = points.len() / dim;
        if n > u32::MAX as usize {
            return Err(Error::invalid("points", "too many points"));
        }
        let mut order = Vec::with_capacity(dim);
        let mut sorted = Vec::with_capacity(dim);
        for j in 0..dim {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| {
                points[a as usize * dim + j]
                    .total_cmp(&points[b as usize * dim + j])
                    .then(a.cmp(&b))
            });
            sorted.push(idx.iter().map(|&i| points[i as usize * dim + j]).collect());
            order.push(idx);
        }
        Ok(Dataset {
            dim,
            points,
            order,
            sorted,
        })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            flat.extend_from_slice(r);
        }
        Self::new(dim, flat)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Row-major coordinates.
    pub fn coordinates(&self) -> &[f64] {
        &self.points
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    /// Calls `visit` on every point of the closed box `[lo, hi]` and returns
    /// the number of candidates examined.
    ///
    /// Candidates come from the coordinate whose slab holds the fewest
    /// points; the remaining coordinates are filtered directly.
    pub fn for_each_in_box(&self, lo: &[f64], hi: &[f64], mut visit: impl FnMut(&[f64])) -> usize {
        debug_assert!(lo.len() == self.dim && hi.len() == self.dim);
        let mut best = (0usize, 0usize, 0usize);
        let mut best_len = usize::MAX;
        for j in 0..self.dim {
            let s = &self.sorted[j];
            let a = s.partition_point(|&v| v < lo[j]);
            let b = s.partition_point(|&v| v <= hi[j]);
            let len = b.saturating_sub(a);
            if len < best_len {
                best_len = len;
                best = (j, a, b);
                if len == 0 {
                    return 0;
                }
            }
        }
        let (jb, a, b) = best;
        for &i in &self.order[jb][a..b] {
            let p = self.point(i as usize);
            let inside = (0..self.dim).all(|j| j == jb || (p[j] >= lo[j] && p[j] <= hi[j]));
            if inside {
                visit(p);
            }
        }
        b - a
    }
}
