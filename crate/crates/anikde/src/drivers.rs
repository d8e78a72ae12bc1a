//! Parallel batch drivers.
//!
//! Every job derives its generator from `(seed, stream, index)` and results
//! are collected in job order, so the worker count never changes an output.

use anikde_core::densities::SeparableDensity;
use anikde_core::math::TensorGrid;
use anikde_core::oracle::{residual_integrals, Oracle, OracleTerms, PointTruth};
use anikde_core::risk::{gap_ratio, risk_replicate, ExperimentPlan, GapReport, ReplicateOutcome};
use anikde_core::rng::{replicate_rng, STREAM_ORACLE};
use anikde_core::{BandwidthGrid, Estimator, KappaPolicy, KernelBank, PointwiseFit};
use rand::Rng;
use rayon::prelude::*;

use crate::error::CliResult;

/// Pointwise fits at each row of `points`.
pub fn fit_points(est: &Estimator<'_>, points: &[f64]) -> CliResult<Vec<PointwiseFit>> {
    let d = est.grid().dim();
    Ok(points
        .par_chunks_exact(d)
        .map(|x| est.select(x, false))
        .collect::<anikde_core::Result<Vec<_>>>()?)
}

/// All `(n, replicate)` outcomes of a plan, ordered by `n` then replicate.
pub fn risk_outcomes(plan: &ExperimentPlan, bank: &KernelBank) -> CliResult<Vec<ReplicateOutcome>> {
    let jobs: Vec<(usize, usize)> = plan
        .n_schedule()
        .iter()
        .flat_map(|&n| (0..plan.replicates()).map(move |r| (n, r)))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|&(n, r)| risk_replicate(plan, bank, n, r, false))
        .collect::<anikde_core::Result<Vec<_>>>()?)
}

/// Selected versus best fixed-bandwidth loss over `replicates` samples.
pub fn gap(plan: &ExperimentPlan, bank: &KernelBank, n: usize, replicates: usize) -> CliResult<GapReport> {
    let ratios = (0..replicates)
        .into_par_iter()
        .map(|r| gap_ratio(&risk_replicate(plan, bank, n, r, true)?, plan.p()))
        .collect::<anikde_core::Result<Vec<_>>>()?;
    Ok(GapReport::from_ratios(n, ratios)?)
}

/// One oracle instance: a fresh sample of size `n` and a point drawn
/// uniformly from the density's box, both from the instance's stream.
pub fn oracle_instance(
    density: &SeparableDensity,
    bank: &KernelBank,
    policy: &KappaPolicy,
    n: usize,
    cell_nodes: usize,
    seed: u64,
    instance: usize,
) -> CliResult<OracleTerms> {
    let mut rng = replicate_rng(seed, STREAM_ORACLE, instance as u64);
    let data = density.sample(n, &mut rng)?;
    let (lo, hi) = density.bbox();
    let x: Vec<f64> = lo.iter().zip(hi).map(|(&a, &b)| rng.random_range(a..=b)).collect();
    let est = Estimator::new(&data, bank, policy)?;
    let oracle = Oracle::for_estimator(density, &est)?.with_cell_nodes(cell_nodes)?;
    Ok(oracle.terms(&est.point_state(&x)?)?)
}

pub fn oracle_suite(
    density: &SeparableDensity,
    bank: &KernelBank,
    policy: &KappaPolicy,
    n: usize,
    instances: usize,
    cell_nodes: usize,
    seed: u64,
) -> CliResult<Vec<OracleTerms>> {
    (0..instances)
        .into_par_iter()
        .map(|i| oracle_instance(density, bank, policy, n, cell_nodes, seed, i))
        .collect()
}

/// Monte Carlo means of the residual integrals at one sample size.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualRow {
    pub n: usize,
    pub replicates: usize,
    /// Mean of `int zeta^p`.
    pub zeta: f64,
    /// Mean of `int chi^p`.
    pub chi: f64,
    /// `n^{p/2}` times the mean.
    pub zeta_scaled: f64,
    pub chi_scaled: f64,
}

/// Evaluation box for residuals: the density box widened by a quarter of
/// its side on each end.
pub fn residual_points(density: &SeparableDensity, nodes: usize) -> CliResult<TensorGrid> {
    let (lo, hi) = density.bbox();
    let pad: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.25 * (b - a)).collect();
    Ok(TensorGrid::new(
        lo.iter().zip(&pad).map(|(a, m)| a - m).collect(),
        hi.iter().zip(&pad).map(|(b, m)| b + m).collect(),
        vec![nodes; density.dim()],
    )?)
}

/// Residual integrals averaged over replicates for each `n`. Replicate `r`
/// at size `n` uses the same stream as the risk sweep.
#[allow(clippy::too_many_arguments)]
pub fn residual_series(
    density: &SeparableDensity,
    bank: &KernelBank,
    policy: &KappaPolicy,
    schedule: &[usize],
    replicates: usize,
    points: &TensorGrid,
    cell_nodes: usize,
    seed: u64,
) -> CliResult<Vec<ResidualRow>> {
    let p = policy.p();
    let d = density.dim();
    let nodes = points.points();
    let mut rows = Vec::with_capacity(schedule.len());
    for &n in schedule {
        let grid = BandwidthGrid::for_sample_size(n, d)?;
        let oracle = Oracle::new(density, bank, grid, policy.kappa(), n)?.with_cell_nodes(cell_nodes)?;
        let truths = nodes
            .par_chunks_exact(d)
            .map(|x| oracle.point(x))
            .collect::<anikde_core::Result<Vec<PointTruth>>>()?;
        let sums = (0..replicates)
            .into_par_iter()
            .map(|r| {
                let mut rng = replicate_rng(seed, n as u64, r as u64);
                let data = density.sample(n, &mut rng)?;
                let est = Estimator::with_grid(&data, bank, policy, grid)?;
                residual_integrals(&est, &truths, points, p)
            })
            .collect::<anikde_core::Result<Vec<(f64, f64)>>>()?;
        let k = replicates.max(1) as f64;
        let zeta = sums.iter().map(|s| s.0).sum::<f64>() / k;
        let chi = sums.iter().map(|s| s.1).sum::<f64>() / k;
        let scale = (n as f64).powf(p / 2.0);
        rows.push(ResidualRow {
            n,
            replicates,
            zeta,
            chi,
            zeta_scaled: scale * zeta,
            chi_scaled: scale * chi,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use anikde_core::densities::{smooth_product_density, BumpProfile, SmoothKind, SmoothParams};
    use anikde_core::estimator::kappa_default;
    use std::sync::Arc;

    fn density() -> SeparableDensity {
        let bump = Arc::new(BumpProfile::with_intervals(1 << 12));
        smooth_product_density(SmoothKind::RaisedCosine, 1, &SmoothParams::default(), bump).unwrap()
    }

    fn pool(threads: usize) -> rayon::ThreadPool {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
    }

    #[test]
    fn fits_match_sequential_and_ignore_threads() {
        let f = density();
        let bank = KernelBank::new(2, 512, 7).unwrap();
        let data = f.sample(128, &mut replicate_rng(1, 128, 0)).unwrap();
        let policy = kappa_default(1, 2.0, bank.k_inf(1)).unwrap().with_kappa(0.5).unwrap();
        let est = Estimator::new(&data, &bank, &policy).unwrap();
        let pts: Vec<f64> = (0..40).map(|i| -0.6 + 0.03 * i as f64).collect();
        let seq = est.estimate_on_grid(&pts, false).unwrap();
        for t in [1, 3] {
            let par = pool(t).install(|| fit_points(&est, &pts)).unwrap();
            assert_eq!(par, seq);
        }
    }

    #[test]
    fn oracle_suite_is_thread_independent() {
        let f = density();
        let bank = KernelBank::new(2, 512, 6).unwrap();
        let policy = kappa_default(1, 2.0, bank.k_inf(1)).unwrap();
        let a = pool(1).install(|| oracle_suite(&f, &bank, &policy, 64, 6, 2, 9)).unwrap();
        let b = pool(4).install(|| oracle_suite(&f, &bank, &policy, 64, 6, 2, 9)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|t| t.holds));
        assert_ne!(a[0].x, a[1].x);
    }

    #[test]
    fn residual_rows_scale_by_root_n() {
        let f = density();
        let bank = KernelBank::new(2, 512, 6).unwrap();
        let policy = kappa_default(1, 2.0, bank.k_inf(1)).unwrap().with_kappa(2.0).unwrap();
        let pts = residual_points(&f, 9).unwrap();
        assert_eq!((pts.lo()[0], pts.hi()[0]), (-0.75, 0.75));
        let rows = residual_series(&f, &bank, &policy, &[32, 64], 3, &pts, 2, 4).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert!(r.zeta >= 0.0 && r.chi >= 0.0);
            assert_eq!(r.zeta_scaled, r.n as f64 * r.zeta);
        }
    }
}
