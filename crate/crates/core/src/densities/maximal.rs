//! Strong maximal function over a finite dyadic set of box sizes.

use alloc::vec;
use alloc::vec::Vec;

use super::SeparableDensity;
use crate::math::TensorGrid;
use crate::{Error, Result, MAX_DIM};

/// Dyadic side lengths `2^-10, ..., 2`.
pub fn default_h_levels() -> Vec<f64> {
    (-10..=1).map(|k| libm::exp2(k as f64)).collect()
}

/// Values of `g*(x) = max_h (1/V_h) int_{x + [-h/2, h/2]} g` at the nodes of
/// a tensor grid, `h` ranging over all tuples of the given side lengths.
#[derive(Clone, Debug)]
pub struct MaximalField {
    grid: TensorGrid,
    values: Vec<f64>,
}

impl MaximalField {
    pub fn grid(&self) -> &TensorGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Discretized strong maximal function; a lower bound on the exact one.
pub fn strong_maximal(density: &SeparableDensity, grid: &TensorGrid, h_levels: &[f64]) -> Result<MaximalField> {
    let d = density.dim();
    if grid.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: grid.dim(),
        });
    }
    if h_levels.is_empty() || h_levels.iter().any(|h| !(*h > 0.0 && *h <= 2.0)) {
        return Err(Error::invalid("h_levels", "side lengths must lie in (0, 2]"));
    }
    let levels = h_levels.len();
    let bump = density.bump();
    // averages[c][j][k * levels + a]: average of factor (c, j) over the
    // interval of length h_a centred at the k-th grid coordinate.
    let averages: Vec<Vec<Vec<f64>>> = density
        .terms()
        .iter()
        .map(|t| {
            (0..d)
                .map(|j| {
                    let mut out = Vec::with_capacity(grid.nodes()[j] * levels);
                    for k in 0..grid.nodes()[j] {
                        let x = grid.coordinate(j, k);
                        for &h in h_levels {
                            out.push(t.factors[j].integral(x - 0.5 * h, x + 0.5 * h, bump) / h);
                        }
                    }
                    out
                })
                .collect()
        })
        .collect();
    let nonneg_single = density.terms().len() == 1
        && density.terms()[0].weight >= 0.0
        && density.terms()[0].factors.iter().all(|f| f.is_probability());
    let weights: Vec<f64> = density.terms().iter().map(|t| t.weight).collect();
    let combos = levels.pow(d as u32);
    let mut idx = [0usize; MAX_DIM];
    let mut values = vec![0.0; grid.len()];
    for (i, out) in values.iter_mut().enumerate() {
        grid.multi_index(i, &mut idx[..d]);
        if nonneg_single {
            let mut v = weights[0];
            for j in 0..d {
                let row = &averages[0][j][idx[j] * levels..(idx[j] + 1) * levels];
                v *= row.iter().cloned().fold(0.0, f64::max);
            }
            *out = v;
            continue;
        }
        let mut best = f64::NEG_INFINITY;
        for combo in 0..combos {
            let mut r = combo;
            let mut total = 0.0;
            let mut a = [0usize; MAX_DIM];
            for slot in a[..d].iter_mut() {
                *slot = r % levels;
                r /= levels;
            }
            for (c, w) in weights.iter().enumerate() {
                let mut v = *w;
                for j in 0..d {
                    v *= averages[c][j][idx[j] * levels + a[j]];
                }
                total += v;
            }
            best = best.max(total);
        }
        *out = best;
    }
    Ok(MaximalField {
        grid: grid.clone(),
        values,
    })
}

/// `(int (g*)^theta)^(1/theta)` by trapezoid quadrature on the field's grid.
pub fn tail_quasi_norm(field: &MaximalField, theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::invalid("theta", "theta must lie in (0, 1]"));
    }
    let powered: Vec<f64> = field.values.iter().map(|v| libm::pow(v.max(0.0), theta)).collect();
    Ok(libm::pow(field.grid.integrate(&powered)?, 1.0 / theta))
}
