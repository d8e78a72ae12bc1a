//! Monte-Carlo `L_p` risk, rate fitting and the oracle gap.

use alloc::vec;
use alloc::vec::Vec;

use crate::bandwidths::BandwidthGrid;
use crate::densities::SeparableDensity;
use crate::estimator::{kappa_default, Estimator, KappaPolicy};
use crate::kernel::KernelBank;
use crate::math::{least_squares, LineFit, TensorGrid};
use crate::rng::replicate_rng;
use crate::{Error, Result};

/// `(int |a - b|^p)^(1/p)` by tensor trapezoid quadrature.
pub fn lp_norm_on_grid(a: &[f64], b: &[f64], p: f64, grid: &TensorGrid) -> Result<f64> {
    Ok(libm::pow(lp_power_on_grid(a, b, p, grid)?, 1.0 / p))
}

/// `int |a - b|^p` by tensor trapezoid quadrature.
pub fn lp_power_on_grid(a: &[f64], b: &[f64], p: f64, grid: &TensorGrid) -> Result<f64> {
    if a.len() != grid.len() || b.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            got: if a.len() != grid.len() { a.len() } else { b.len() },
        });
    }
    check_p(p)?;
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| libm::pow((x - y).abs(), p)).collect();
    grid.integrate(&diff)
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("p", "need finite p >= 1"))
    }
}

/// What is compared with the truth on the evaluation grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitMode {
    /// The adaptive estimator.
    Selected,
    /// The density itself; every loss is zero. Used to check the plumbing.
    Truth,
}

/// A Monte-Carlo risk experiment for one density.
#[derive(Clone, Debug)]
pub struct ExperimentPlan {
    density: SeparableDensity,
    p: f64,
    n_schedule: Vec<usize>,
    replicates: usize,
    grid: TensorGrid,
    seed: u64,
    kappa: Option<f64>,
    max_exponent: Option<u8>,
    mode: FitMode,
    points: Vec<f64>,
    truth: Vec<f64>,
}

impl ExperimentPlan {
    /// Checks that the schedule is strictly increasing, `replicates >= 2`,
    /// and the grid box contains the density's box inflated by one.
    pub fn new(
        density: SeparableDensity,
        p: f64,
        n_schedule: Vec<usize>,
        replicates: usize,
        grid: TensorGrid,
        seed: u64,
    ) -> Result<Self> {
        check_p(p)?;
        if n_schedule.is_empty() || n_schedule[0] == 0 || n_schedule.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("n_schedule", "must be non-empty, positive and strictly increasing"));
        }
        if replicates < 2 {
            return Err(Error::invalid("replicates", "need at least two replicates"));
        }
        if grid.dim() != density.dim() {
            return Err(Error::DimensionMismatch {
                expected: density.dim(),
                got: grid.dim(),
            });
        }
        let (lo, hi) = density.bbox();
        for j in 0..grid.dim() {
            if grid.lo()[j] > lo[j] - 1.0 + 1e-12 || grid.hi()[j] < hi[j] + 1.0 - 1e-12 {
                return Err(Error::invalid("grid", "grid box must contain the density support plus a margin of one"));
            }
        }
        let points = grid.points();
        let d = grid.dim();
        let truth = points.chunks(d).map(|x| density.value(x)).collect();
        Ok(ExperimentPlan {
            density,
            p,
            n_schedule,
            replicates,
            grid,
            seed,
            kappa: None,
            max_exponent: None,
            mode: FitMode::Selected,
            points,
            truth,
        })
    }

    /// Overrides the threshold constant.
    pub fn with_kappa(mut self, kappa: Option<f64>) -> Self {
        self.kappa = kappa;
        self
    }

    /// Caps the bandwidth grid at `2^-k` instead of `floor(log2 n)`.
    pub fn with_max_exponent(mut self, k: Option<u8>) -> Self {
        self.max_exponent = k;
        self
    }

    pub fn with_mode(mut self, mode: FitMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn density(&self) -> &SeparableDensity {
        &self.density
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn n_schedule(&self) -> &[usize] {
        &self.n_schedule
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn grid(&self) -> &TensorGrid {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn kappa_override(&self) -> Option<f64> {
        self.kappa
    }

    pub fn max_exponent(&self) -> Option<u8> {
        self.max_exponent
    }

    /// Flattened evaluation points, last coordinate fastest.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Density values at [`points`](Self::points).
    pub fn truth(&self) -> &[f64] {
        &self.truth
    }

    /// Threshold policy for the plan's `p` and the bank's kernel.
    pub fn policy(&self, bank: &KernelBank) -> Result<KappaPolicy> {
        let d = self.density.dim();
        let base = kappa_default(d, self.p, bank.k_inf(d))?;
        match self.kappa {
            Some(k) => base.with_kappa(k),
            None => Ok(base),
        }
    }

    /// Bandwidth grid used at sample size `n`.
    pub fn bandwidth_grid(&self, n: usize) -> Result<BandwidthGrid> {
        let d = self.density.dim();
        match self.max_exponent {
            Some(k) => BandwidthGrid::with_max_exponent(d, k),
            None => BandwidthGrid::for_sample_size(n, d),
        }
    }

    /// Largest grid exponent over the schedule; the kernel bank must cover it.
    pub fn required_exponent(&self) -> Result<u8> {
        let n = *self.n_schedule.last().expect("schedule is non-empty");
        Ok(self.bandwidth_grid(n)?.max_exponent())
    }
}

/// Loss of one replicate.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateOutcome {
    pub n: usize,
    pub replicate: usize,
    /// `||fhat - f||_p^p`.
    pub loss: f64,
    /// `||fhat_h - f||_p^p` for every fixed `h` in grid order, when requested.
    pub family: Option<Vec<f64>>,
}

/// One replicate: sample, estimate on the grid, integrate the loss.
pub fn risk_replicate(
    plan: &ExperimentPlan,
    bank: &KernelBank,
    n: usize,
    replicate: usize,
    with_family: bool,
) -> Result<ReplicateOutcome> {
    let mut rng = replicate_rng(plan.seed, n as u64, replicate as u64);
    let data = plan.density.sample(n, &mut rng)?;
    let d = plan.density.dim();
    let truth = &plan.truth;
    let p = plan.p;
    if plan.mode == FitMode::Truth {
        return Ok(ReplicateOutcome {
            n,
            replicate,
            loss: lp_power_on_grid(truth, truth, p, &plan.grid)?,
            family: None,
        });
    }
    let policy = plan.policy(bank)?;
    let est = Estimator::with_grid(&data, bank, &policy, plan.bandwidth_grid(n)?)?;
    let len = est.grid().len();
    let mut selected = vec![0.0; truth.len()];
    let mut family = if with_family { vec![vec![0.0; truth.len()]; len] } else { Vec::new() };
    for (i, x) in plan.points.chunks(d).enumerate() {
        let state = est.point_state(x)?;
        selected[i] = state.estimate();
        if with_family {
            for (h, row) in family.iter_mut().enumerate() {
                row[i] = state.fhat[h];
            }
        }
    }
    let loss = lp_power_on_grid(&selected, truth, p, &plan.grid)?;
    let family = if with_family {
        Some(
            family
                .iter()
                .map(|row| lp_power_on_grid(row, truth, p, &plan.grid))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    if !loss.is_finite() {
        return Err(Error::Numeric(alloc::format!("non-finite loss at n = {n}")));
    }
    Ok(ReplicateOutcome {
        n,
        replicate,
        loss,
        family,
    })
}

/// Aggregate over the replicates at one sample size.
#[derive(Clone, Debug, PartialEq)]
pub struct RiskRow {
    pub n: usize,
    pub replicates: usize,
    /// Mean of `||fhat - f||_p^p`.
    pub mean_loss: f64,
    /// Standard error of the mean from the replicate variance.
    pub stderr: f64,
    /// `mean_loss^(1/p)`.
    pub risk: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RiskReport {
    pub p: f64,
    pub seed: u64,
    pub rows: Vec<RiskRow>,
}

impl RiskReport {
    /// Folds outcomes in `(n, replicate)` order, whatever order they came in.
    pub fn from_outcomes(p: f64, seed: u64, outcomes: &[ReplicateOutcome]) -> Result<Self> {
        check_p(p)?;
        let mut sorted: Vec<&ReplicateOutcome> = outcomes.iter().collect();
        sorted.sort_by_key(|o| (o.n, o.replicate));
        let mut rows = Vec::new();
        let mut i = 0;
        while i < sorted.len() {
            let n = sorted[i].n;
            let mut j = i;
            while j < sorted.len() && sorted[j].n == n {
                j += 1;
            }
            let losses: Vec<f64> = sorted[i..j].iter().map(|o| o.loss).collect();
            let r = losses.len();
            let mean = losses.iter().sum::<f64>() / r as f64;
            let stderr = if r > 1 {
                let var = losses.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / (r - 1) as f64;
                libm::sqrt(var / r as f64)
            } else {
                0.0
            };
            if !(mean.is_finite() && mean >= 0.0) {
                return Err(Error::Numeric(alloc::format!("invalid mean loss at n = {n}")));
            }
            rows.push(RiskRow {
                n,
                replicates: r,
                mean_loss: mean,
                stderr,
                risk: libm::pow(mean, 1.0 / p),
            });
            i = j;
        }
        Ok(RiskReport { p, seed, rows })
    }
}

/// Every replicate of the plan, sequentially.
pub fn run_plan(plan: &ExperimentPlan, bank: &KernelBank) -> Result<RiskReport> {
    let mut outcomes = Vec::with_capacity(plan.n_schedule.len() * plan.replicates);
    for &n in &plan.n_schedule {
        for r in 0..plan.replicates {
            outcomes.push(risk_replicate(plan, bank, n, r, false)?);
        }
    }
    RiskReport::from_outcomes(plan.p, plan.seed, &outcomes)
}

/// Least-squares line of `ln risk` on `ln n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual_se: f64,
    pub points: usize,
}

pub fn fit_rate(report: &RiskReport) -> Result<RateFit> {
    if report.rows.len() < 3 {
        return Err(Error::invalid("n_schedule", "rate fitting needs at least three sample sizes"));
    }
    if report.rows.iter().any(|r| !(r.risk > 0.0)) {
        return Err(Error::Numeric("rate fitting needs positive risks".into()));
    }
    let x: Vec<f64> = report.rows.iter().map(|r| libm::log(r.n as f64)).collect();
    let y: Vec<f64> = report.rows.iter().map(|r| libm::log(r.risk)).collect();
    let LineFit {
        slope,
        intercept,
        residual_se,
    } = least_squares(&x, &y)?;
    Ok(RateFit {
        slope,
        intercept,
        residual_se,
        points: x.len(),
    })
}

/// Ratios `||fhat - f||_p / min_h ||fhat_h - f||_p` over replicates.
#[derive(Clone, Debug, PartialEq)]
pub struct GapReport {
    pub n: usize,
    pub ratios: Vec<f64>,
    pub median: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Ratio of the selected loss to the best fixed-bandwidth loss for one
/// outcome computed with the family.
pub fn gap_ratio(outcome: &ReplicateOutcome, p: f64) -> Result<f64> {
    let family = outcome
        .family
        .as_ref()
        .ok_or_else(|| Error::invalid("family", "outcome lacks fixed-bandwidth losses"))?;
    let best = family.iter().cloned().fold(f64::INFINITY, f64::min);
    let sel = libm::pow(outcome.loss, 1.0 / p);
    let best = libm::pow(best, 1.0 / p);
    if best == 0.0 {
        return Ok(if sel == 0.0 { 1.0 } else { f64::INFINITY });
    }
    Ok(sel / best)
}

impl GapReport {
    pub fn from_ratios(n: usize, ratios: Vec<f64>) -> Result<Self> {
        if ratios.is_empty() {
            return Err(Error::invalid("replicates", "no ratios"));
        }
        let mut s = ratios.clone();
        s.sort_by(f64::total_cmp);
        let k = s.len();
        let median = if k % 2 == 1 { s[k / 2] } else { 0.5 * (s[k / 2 - 1] + s[k / 2]) };
        Ok(GapReport {
            n,
            mean: s.iter().sum::<f64>() / k as f64,
            min: s[0],
            max: s[k - 1],
            median,
            ratios,
        })
    }
}

/// Oracle gap at sample size `n` over `replicates` replicates, sequentially.
pub fn oracle_gap(plan: &ExperimentPlan, bank: &KernelBank, n: usize, replicates: usize) -> Result<GapReport> {
    let ratios = (0..replicates)
        .map(|r| gap_ratio(&risk_replicate(plan, bank, n, r, true)?, plan.p))
        .collect::<Result<Vec<_>>>()?;
    GapReport::from_ratios(n, ratios)
}
