//! Subcommands. Each one writes its outputs into a [`RunDir`] and reports
//! failed checks, which the caller turns into exit code 2 after the
//! manifest is written.

use std::path::PathBuf;

use anikde_core::densities::{build_perturbed, PerturbedDensity, SeparableDensity};
use anikde_core::estimator::{kappa_default, KappaPolicy};
use anikde_core::kernel::check_kernel;
use anikde_core::math::TensorGrid;
use anikde_core::oracle::OracleTerms;
use anikde_core::regimes::{classify, classify_tail, theta_star, ClassSpec, TailSpec};
use anikde_core::risk::{fit_rate, ExperimentPlan, GapReport, RiskReport};
use anikde_core::rng::{replicate_rng, STREAM_LOWER_BOUND, STREAM_POINTS};
use anikde_core::{BandwidthGrid, Dataset, Estimator, KernelBank};
use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::cache::load_or_build;
use crate::config::{default_nodes, ExperimentConfig, Format, GridConfig};
use crate::drivers;
use crate::error::{CliError, CliResult};
use crate::io::{csv_text, dat_text, fmt_f64, read_points, RunDir};
use crate::manifest::Stopwatch;

/// Kernel moment and majorant tolerances.
pub const MASS_TOL: f64 = 1e-6;
pub const MOMENT_TOL: f64 = 1e-5;
pub const PROFILE_TOL: f64 = 1e-5;
pub const DOMINATION_TOL: f64 = 1e-10;
/// Lower-bound tolerances.
pub const LB_MASS_TOL: f64 = 1e-6;
pub const LB_SEPARATION_RTOL: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    KernelCheck,
    Estimate,
    Oracle,
    Regime,
    Lowerbound,
    Risk,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::KernelCheck => "kernel-check",
            Command::Estimate => "estimate",
            Command::Oracle => "oracle",
            Command::Regime => "regime",
            Command::Lowerbound => "lowerbound",
            Command::Risk => "risk",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            Command::KernelCheck,
            Command::Estimate,
            Command::Oracle,
            Command::Regime,
            Command::Lowerbound,
            Command::Risk,
        ]
        .into_iter()
        .find(|c| c.name() == name)
    }
}

/// Names of failed checks; empty on success.
pub type Failures = Vec<String>;

pub fn run(command: Command, cfg: &ExperimentConfig, run: &mut RunDir, clock: &mut Stopwatch) -> CliResult<Failures> {
    match command {
        Command::KernelCheck => kernel_check(cfg, run, clock),
        Command::Estimate => estimate(cfg, run, clock),
        Command::Oracle => oracle(cfg, run, clock),
        Command::Regime => regime(cfg, run),
        Command::Lowerbound => lowerbound(cfg, run, clock),
        Command::Risk => risk(cfg, run, clock),
    }
}

/// A JSON number, or `"inf"`, `"-inf"`, `"nan"` for values JSON lacks.
pub fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn nums(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| num(x)).collect())
}

fn bank(cfg: &ExperimentConfig, max_exponent: u8, clock: &mut Stopwatch) -> CliResult<KernelBank> {
    let k = &cfg.kernel;
    let (bank, status) = clock.time("kernel_tables", || {
        load_or_build(k.cache.as_deref(), k.ell, k.table_size, max_exponent)
    })?;
    if k.cache.is_some() {
        eprintln!("kernel cache: {status:?}");
    }
    Ok(bank)
}

fn policy(cfg: &ExperimentConfig, bank: &KernelBank, dim: usize) -> CliResult<KappaPolicy> {
    let base = kappa_default(dim, cfg.estimator.p, bank.k_inf(dim))?;
    Ok(match cfg.estimator.kappa {
        Some(k) => base.with_kappa(k)?,
        None => base,
    })
}

fn density(cfg: &ExperimentConfig) -> CliResult<SeparableDensity> {
    cfg.density.build(ExperimentConfig::bump())
}

fn exponent_for(n: usize, dim: usize) -> CliResult<u8> {
    Ok(BandwidthGrid::for_sample_size(n, dim)?.max_exponent())
}

fn coord_header(prefix: &str, dim: usize) -> Vec<String> {
    (1..=dim).map(|j| format!("{prefix}_{j}")).collect()
}

fn kernel_check(cfg: &ExperimentConfig, run: &mut RunDir, clock: &mut Stopwatch) -> CliResult<Failures> {
    let bank = bank(cfg, cfg.kernel.max_exponent, clock)?;
    let mut failures = Vec::new();
    let mut reports = Vec::new();
    for &dim in &cfg.kernel.dims {
        let mut rng = replicate_rng(cfg.seed, STREAM_POINTS, dim as u64);
        let c = clock.time("check", || check_kernel(&bank, dim, cfg.kernel.triples, &mut rng))?;
        let moments = c.moments_hold(MASS_TOL, MOMENT_TOL);
        let profiles = c.profiles_hold(PROFILE_TOL);
        let majorant = c.majorant_holds(DOMINATION_TOL);
        for (ok, what) in [(moments, "moments"), (profiles, "profiles"), (majorant, "majorant")] {
            if !ok {
                failures.push(format!("kernel {what} (ell = {}, d = {dim})", c.ell));
            }
        }
        reports.push(json!({
            "dim": dim,
            "mass_error": num(c.mass_error),
            "moment_error": num(c.moment_error),
            "moments_checked": c.moments_checked,
            "profile_mass_error": num(c.profile_mass_error),
            "majorant_sup": num(c.majorant_sup),
            "kernel_sup_sq": num(c.kernel_sup_sq),
            "support_ok": c.support_ok,
            "domination_checked": c.domination_checked,
            "domination_margin": num(c.domination_margin),
            "moments_ok": moments,
            "profiles_ok": profiles,
            "majorant_ok": majorant,
        }));
    }
    let report = json!({
        "ell": cfg.kernel.ell,
        "table_size": cfg.kernel.table_size,
        "max_exponent": cfg.kernel.max_exponent,
        "tolerances": {
            "mass": MASS_TOL,
            "moment": MOMENT_TOL,
            "profile": PROFILE_TOL,
            "domination": DOMINATION_TOL,
        },
        "checks": reports,
        "pass": failures.is_empty(),
    });
    run.write_json("kernel_check.json", &report)?;
    Ok(failures)
}

fn estimate(cfg: &ExperimentConfig, run: &mut RunDir, clock: &mut Stopwatch) -> CliResult<Failures> {
    let path: PathBuf = cfg
        .estimate
        .data
        .clone()
        .ok_or_else(|| CliError::Config("`estimate.data`: no data file given (use --data)".into()))?;
    let (dim, coords) = read_points(&path, cfg.estimate.header)?;
    let data = Dataset::new(dim, coords)?;
    let grid = match &cfg.estimate.grid {
        Some(g) => {
            if g.lo.len() != dim {
                return Err(CliError::Config(format!(
                    "`estimate.grid`: has {} coordinates, data has {dim}",
                    g.lo.len()
                )));
            }
            g.clone()
        }
        None => {
            let (lo, hi) = data_box(&data);
            GridConfig::around(&lo, &hi, 1.0, default_nodes(dim))
        }
    };
    let points = grid.points()?;
    let bank = bank(cfg, exponent_for(data.len(), dim)?, clock)?;
    let policy = policy(cfg, &bank, dim)?;
    let est = Estimator::new(&data, &bank, &policy)?;
    let fits = clock.time("fit", || drivers::fit_points(&est, &points))?;
    let mut header = coord_header("x", dim);
    header.push("fhat".into());
    header.extend(coord_header("k", dim));
    let rows = fits.iter().map(|f| {
        let mut row: Vec<String> = f.x.iter().map(|&v| fmt_f64(v)).collect();
        let value = if cfg.estimator.clamp { f.estimate.max(0.0) } else { f.estimate };
        row.push(fmt_f64(value));
        row.extend(f.selected.exponents().iter().map(|k| k.to_string()));
        row
    });
    run.write("fits.csv", csv_text(&header, rows).as_bytes())?;
    Ok(Vec::new())
}

fn data_box(data: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let d = data.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for x in data.rows() {
        for j in 0..d {
            lo[j] = lo[j].min(x[j]);
            hi[j] = hi[j].max(x[j]);
        }
    }
    (lo, hi)
}

fn oracle(cfg: &ExperimentConfig, run: &mut RunDir, clock: &mut Stopwatch) -> CliResult<Failures> {
    let oc = &cfg.oracle;
    if oc.n == 0 {
        return Err(CliError::Config("`oracle.n`: must be positive".into()));
    }
    let f = density(cfg)?;
    let d = f.dim();
    let top = oc
        .residual_schedule
        .iter()
        .chain([&oc.n])
        .map(|&n| exponent_for(n, d))
        .collect::<CliResult<Vec<u8>>>()?
        .into_iter()
        .max()
        .unwrap_or(0);
    let bank = bank(cfg, top, clock)?;
    let policy = policy(cfg, &bank, d)?;
    let terms = clock.time("oracle_suite", || {
        drivers::oracle_suite(&f, &bank, &policy, oc.n, oc.instances, oc.cell_nodes, cfg.seed)
    })?;
    let holds = terms.iter().filter(|t| t.holds).count();
    let worst = terms.iter().map(|t| if t.rhs > 0.0 { t.lhs / t.rhs } else { 0.0 }).fold(0.0, f64::max);
    let mut failures = Vec::new();
    if holds < terms.len() {
        failures.push(format!("oracle inequality failed at {} of {} instances", terms.len() - holds, terms.len()));
    }
    let mut report = json!({
        "density": f.label(),
        "dim": d,
        "n": oc.n,
        "kappa": num(policy.kappa()),
        "kappa_overridden": policy.is_override(),
        "cell_nodes": oc.cell_nodes,
        "instances": terms.len(),
        "holds": holds,
        "max_lhs_over_rhs": num(worst),
        "pass": failures.is_empty(),
    });
    if cfg.output.wants(Format::Csv) {
        run.write("oracle.csv", oracle_csv(&terms, d).as_bytes())?;
    }
    if !oc.residual_schedule.is_empty() {
        let points = drivers::residual_points(&f, oc.residual_nodes)?;
        let rows = clock.time("residuals", || {
            drivers::residual_series(
                &f,
                &bank,
                &policy,
                &oc.residual_schedule,
                oc.residual_replicates,
                &points,
                oc.cell_nodes,
                cfg.seed,
            )
        })?;
        report["residuals"] = Value::Array(
            rows.iter()
                .map(|r| {
                    json!({
                        "n": r.n,
                        "replicates": r.replicates,
                        "zeta_p": num(r.zeta),
                        "chi_p": num(r.chi),
                        "zeta_p_scaled": num(r.zeta_scaled),
                        "chi_p_scaled": num(r.chi_scaled),
                    })
                })
                .collect(),
        );
        if cfg.output.wants(Format::Csv) {
            let header: Vec<String> = ["n", "replicates", "zeta_p", "chi_p", "zeta_p_scaled", "chi_p_scaled"]
                .map(String::from)
                .to_vec();
            let body = rows.iter().map(|r| {
                vec![
                    r.n.to_string(),
                    r.replicates.to_string(),
                    fmt_f64(r.zeta),
                    fmt_f64(r.chi),
                    fmt_f64(r.zeta_scaled),
                    fmt_f64(r.chi_scaled),
                ]
            });
            run.write("residuals.csv", csv_text(&header, body).as_bytes())?;
        }
    }
    if cfg.output.wants(Format::Json) {
        run.write_json("oracle.json", &report)?;
    }
    Ok(failures)
}

fn oracle_csv(terms: &[OracleTerms], d: usize) -> String {
    let mut header = vec!["instance".to_string()];
    header.extend(coord_header("x", d));
    header.extend(
        ["estimate", "density", "lhs", "rhs", "bias_bar", "m_kernel", "m_majorant_sup", "zeta", "chi"]
            .map(String::from),
    );
    header.extend(coord_header("best_k", d));
    header.push("holds".into());
    let rows = terms.iter().enumerate().map(|(i, t)| {
        let mut row = vec![i.to_string()];
        row.extend(t.x.iter().map(|&v| fmt_f64(v)));
        row.extend(
            [t.estimate, t.density, t.lhs, t.rhs, t.bias_bar, t.m_kernel, t.m_majorant_sup, t.zeta, t.chi].map(fmt_f64),
        );
        row.extend(t.best.exponents().iter().map(|k| k.to_string()));
        row.push(t.holds.to_string());
        row
    });
    csv_text(&header, rows)
}

fn class_spec(cfg: &ExperimentConfig) -> CliResult<(ClassSpec, Option<TailSpec>)> {
    if let Some(c) = &cfg.class {
        let tail = match c.theta {
            Some(theta) => Some(TailSpec::new(theta, c.radius.unwrap_or(1.0))?),
            None => None,
        };
        return Ok((c.spec()?, tail));
    }
    let f = density(cfg)?;
    f.class().cloned().map(|c| (c, None)).ok_or_else(|| {
        CliError::Config("`class`: missing, and the configured density carries no smoothness class".into())
    })
}

fn regime(cfg: &ExperimentConfig, run: &mut RunDir) -> CliResult<Failures> {
    let (spec, tail) = class_spec(cfg)?;
    let p = cfg.estimator.p;
    let r = classify(&spec, p)?;
    let mut report = json!({
        "p": num(p),
        "dim": spec.dim(),
        "beta": nums(spec.beta()),
        "r": nums(spec.r()),
        "l": nums(spec.l()),
        "m": num(spec.m()),
        "aggregates": {
            "beta": num(r.aggregates.beta),
            "s": num(r.aggregates.s),
            "l_beta": num(r.aggregates.l_beta),
            "lower_boundary": num(r.aggregates.lower_boundary()),
            "upper_boundary": num(r.aggregates.upper_boundary()),
        },
        "zone": r.zone.name(),
        "nu": num(r.nu),
        "mu_exponent": num(r.mu_exponent),
        "alpha_log": r.alpha_log,
        "note": r.note,
    });
    report["theta_star"] = match theta_star(&spec, p)? {
        Some(t) => json!({ "value": num(t.value), "at_most_one": t.at_most_one }),
        None => Value::Null,
    };
    if let Some(tail) = tail {
        let t = classify_tail(&spec, p, &tail)?;
        report["tail_dominance"] = json!({
            "theta": num(tail.theta()),
            "radius": num(tail.radius()),
            "nu": num(t.nu),
            "mu_exponent": num(t.mu_exponent),
            "tail_boundary": num(t.tail_boundary),
        });
    }
    run.write_json("regime.json", &report)?;
    Ok(Vec::new())
}

/// Member density values on a coarse tensor grid over its box.
fn density_csv(f: &SeparableDensity, nodes_per_dim: usize) -> CliResult<String> {
    let (lo, hi) = f.bbox();
    let grid = TensorGrid::new(lo.to_vec(), hi.to_vec(), vec![nodes_per_dim; f.dim()])?;
    let mut header = coord_header("x", f.dim());
    header.push("f".into());
    let points = grid.points();
    let rows: Vec<Vec<String>> = points
        .chunks_exact(f.dim())
        .map(|x| {
            let mut row: Vec<String> = x.iter().map(|&v| fmt_f64(v)).collect();
            row.push(fmt_f64(f.value(x)));
            row
        })
        .collect();
    Ok(csv_text(&header, rows))
}

fn min_on_grid(f: &SeparableDensity, grid: &TensorGrid) -> f64 {
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let mut x = vec![0.0; grid.dim()];
            grid.point(i, &mut x);
            f.value(&x)
        })
        .reduce(|| f64::INFINITY, f64::min)
}

fn lowerbound(cfg: &ExperimentConfig, run: &mut RunDir, clock: &mut Stopwatch) -> CliResult<Failures> {
    let lb = &cfg.lowerbound;
    let d = lb.sigma.len();
    if d == 0 || d > anikde_core::MAX_DIM {
        return Err(CliError::Config("`lowerbound.sigma`: needs one entry per coordinate, 1 to 4".into()));
    }
    let p = cfg.estimator.p;
    let bump = ExperimentConfig::bump();
    let counts = anikde_core::densities::perturbation_counts(lb.n, lb.scale, &lb.sigma);
    let m: usize = counts.iter().product();
    let plateau = (lb.scale / lb.n).powi(d as i32);
    let amplitude = lb.amplitude.unwrap_or(plateau);
    let mut rng = replicate_rng(cfg.seed, STREAM_LOWER_BOUND, 0);
    let packing = clock.time("packing", || anikde_core::densities::vg_packing(m, &mut rng))?;
    let (need_size, need_sep) = anikde_core::densities::PackingSet::requirements(m);
    let min_distance = packing.min_distance();
    let mut failures = Vec::new();
    let packing_ok = packing.verify().is_ok();
    if !packing_ok {
        failures.push("packing size or separation".into());
    }
    let members: Vec<PerturbedDensity> = clock.time("members", || {
        (0..packing.len())
            .into_par_iter()
            .map(|i| build_perturbed(lb.n, lb.scale, &lb.sigma, amplitude, &packing.member(i), bump.clone()))
            .collect::<anikde_core::Result<Vec<_>>>()
    })?;
    let per_dim = ((lb.check_nodes.max(2) as f64).powf(1.0 / d as f64).ceil() as usize).max(2);
    let check_grid = {
        let (lo, hi) = members[0].density().bbox();
        TensorGrid::new(lo.to_vec(), hi.to_vec(), vec![per_dim; d])?
    };
    let checks: Vec<(f64, f64, f64)> = clock.time("member_checks", || {
        members
            .iter()
            .map(|w| {
                let mass = w.density().total_mass();
                let low = min_on_grid(w.density(), &check_grid);
                let pert = w.central_integral(|x| w.perturbation(x));
                (mass, low, pert)
            })
            .collect()
    });
    let mass_err = checks.iter().map(|c| (c.0 - 1.0).abs()).fold(0.0, f64::max);
    let min_value = checks.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let pert_err = checks.iter().map(|c| c.2.abs()).fold(0.0, f64::max);
    if mass_err > LB_MASS_TOL {
        failures.push(format!("member mass error {mass_err:e}"));
    }
    if min_value < 0.0 {
        failures.push(format!("member negative on the check grid ({min_value:e})"));
    }
    if pert_err > LB_MASS_TOL {
        failures.push(format!("perturbation integral {pert_err:e}"));
    }
    let mut pair_rng = replicate_rng(cfg.seed, STREAM_LOWER_BOUND, 1);
    let pairs: Vec<(usize, usize)> = if members.len() < 2 {
        Vec::new()
    } else {
        (0..lb.pairs)
            .map(|_| {
                let i = pair_rng.random_range(0..members.len());
                let mut j = pair_rng.random_range(0..members.len() - 1);
                if j >= i {
                    j += 1;
                }
                (i, j)
            })
            .collect()
    };
    let separations = clock.time("separation", || {
        pairs
            .par_iter()
            .map(|&(i, j)| {
                let measured = members[i].lp_distance_pow(&members[j], p)?;
                let predicted = members[i].predicted_distance_pow(&members[j], p)?;
                Ok((i, j, packing.hamming(i, j), measured, predicted))
            })
            .collect::<anikde_core::Result<Vec<_>>>()
    })?;
    let mut worst_rel: f64 = 0.0;
    let pair_json: Vec<Value> = separations
        .iter()
        .map(|&(i, j, h, measured, predicted)| {
            let rel = if predicted > 0.0 { (measured - predicted).abs() / predicted } else { measured.abs() };
            worst_rel = worst_rel.max(rel);
            json!({
                "i": i,
                "j": j,
                "hamming": h,
                "measured": num(measured),
                "predicted": num(predicted),
                "relative_error": num(rel),
            })
        })
        .collect();
    if worst_rel > LB_SEPARATION_RTOL {
        failures.push(format!("separation identity off by {:.2}%", 100.0 * worst_rel));
    }
    let member_json: Vec<Value> = checks
        .iter()
        .enumerate()
        .map(|(i, c)| json!({ "index": i, "mass": num(c.0), "min_on_grid": num(c.1), "perturbation_integral": num(c.2) }))
        .collect();
    let mut report = json!({
        "n": num(lb.n),
        "scale": num(lb.scale),
        "sigma": nums(&lb.sigma),
        "amplitude": num(amplitude),
        "amplitude_max": num(plateau),
        "p": num(p),
        "counts": counts,
        "m": m,
        "packing": {
            "size": packing.len(),
            "min_distance": min_distance,
            "required_size": need_size,
            "required_distance": need_sep,
            "ok": packing_ok,
        },
        "check_nodes_per_dim": per_dim,
        "max_mass_error": num(mass_err),
        "min_value": num(min_value),
        "max_perturbation_integral": num(pert_err),
        "max_separation_relative_error": num(worst_rel),
        "members": member_json,
        "pairs": pair_json,
        "pass": failures.is_empty(),
    });
    let out_nodes = (4096f64.powf(1.0 / d as f64).round() as usize).max(2);
    if cfg.output.wants(Format::Csv) {
        let header = vec!["member".to_string(), "bits".to_string()];
        let rows = (0..packing.len()).map(|i| {
            let bits: String = packing.member(i).iter().map(|&b| if b { '1' } else { '0' }).collect();
            vec![i.to_string(), bits]
        });
        run.write("lowerbound/packing.csv", csv_text(&header, rows).as_bytes())?;
        for (i, w) in members.iter().take(lb.write_members).enumerate() {
            run.write(&format!("lowerbound/member_{i}.csv"), density_csv(w.density(), out_nodes)?.as_bytes())?;
        }
    }
    if let Some(theta) = lb.theta {
        let ft = anikde_core::densities::FTheta::new(lb.n, theta);
        let f = ft.build(d, bump.clone())?;
        report["f_theta"] = json!({
            "theta": num(theta),
            "mass": num(f.total_mass()),
            "tail_mass": num(ft.mass(d)),
        });
        if cfg.output.wants(Format::Csv) {
            run.write("lowerbound/f_theta.csv", density_csv(&f, out_nodes)?.as_bytes())?;
        }
    }
    run.write_json("lowerbound/report.json", &report)?;
    Ok(failures)
}

/// Risk plan from the configuration: the `[risk]` grid, or the density box
/// inflated by one with the default node count.
pub fn risk_plan(cfg: &ExperimentConfig) -> CliResult<ExperimentPlan> {
    let f = density(cfg)?;
    let d = f.dim();
    let grid = match &cfg.risk.grid {
        Some(g) => g.clone(),
        None => {
            let (lo, hi) = f.bbox();
            GridConfig::around(lo, hi, 1.0, default_nodes(d))
        }
    };
    if grid.is_empty() {
        return Err(CliError::Config("`risk.grid`: needs at least one node per coordinate".into()));
    }
    let plan = ExperimentPlan::new(
        f,
        cfg.estimator.p,
        cfg.risk.n_schedule.clone(),
        cfg.risk.replicates,
        grid.tensor()?,
        cfg.seed,
    )
    .map_err(|e| CliError::Config(format!("`risk`: {e}")))?;
    Ok(plan.with_kappa(cfg.estimator.kappa).with_max_exponent(cfg.risk.max_exponent))
}

fn risk(cfg: &ExperimentConfig, run: &mut RunDir, clock: &mut Stopwatch) -> CliResult<Failures> {
    let plan = risk_plan(cfg)?;
    let mut top = plan.required_exponent()?;
    if let Some(n) = cfg.risk.gap_n {
        top = top.max(plan.bandwidth_grid(n)?.max_exponent());
    }
    let bank = bank(cfg, top, clock)?;
    let outcomes = clock.time("replicates", || drivers::risk_outcomes(&plan, &bank))?;
    let report = RiskReport::from_outcomes(plan.p(), plan.seed(), &outcomes)?;
    let fit = if report.rows.len() >= 3 { Some(fit_rate(&report)?) } else { None };
    let gap = match cfg.risk.gap_n {
        Some(n) => Some(clock.time("gap", || drivers::gap(&plan, &bank, n, cfg.risk.gap_replicates))?),
        None => None,
    };
    let kappa = plan.policy(&bank)?.kappa();
    if cfg.output.wants(Format::Csv) {
        let header: Vec<String> = ["n", "mean_risk_p", "stderr", "risk"].map(String::from).to_vec();
        let rows = report
            .rows
            .iter()
            .map(|r| vec![r.n.to_string(), fmt_f64(r.mean_loss), fmt_f64(r.stderr), fmt_f64(r.risk)]);
        run.write("risk.csv", csv_text(&header, rows).as_bytes())?;
    }
    if cfg.output.wants(Format::Dat) {
        let rows: Vec<Vec<f64>> = report
            .rows
            .iter()
            .map(|r| vec![r.n as f64, r.risk, risk_error(r.mean_loss, r.stderr, plan.p())])
            .collect();
        run.write("plot/risk.dat", dat_text(&["n", "risk", "risk_err"], &rows).as_bytes())?;
    }
    if cfg.output.wants(Format::Json) {
        let value = json!({
            "density": plan.density().label(),
            "p": num(report.p),
            "seed": report.seed,
            "kappa": num(kappa),
            "replicates": plan.replicates(),
            "rows": report.rows.iter().map(|r| json!({
                "n": r.n,
                "replicates": r.replicates,
                "mean_risk_p": num(r.mean_loss),
                "stderr": num(r.stderr),
                "risk": num(r.risk),
            })).collect::<Vec<_>>(),
            "rate": fit.map(|f| json!({
                "slope": num(f.slope),
                "intercept": num(f.intercept),
                "residual_se": num(f.residual_se),
                "points": f.points,
            })),
        });
        run.write_json("risk.json", &value)?;
        if let Some(g) = &gap {
            run.write_json("gap.json", &gap_json(g))?;
        }
    }
    Ok(Vec::new())
}

/// Standard error of `mean^{1/p}` by the delta method.
fn risk_error(mean: f64, stderr: f64, p: f64) -> f64 {
    if mean > 0.0 {
        stderr * mean.powf(1.0 / p - 1.0) / p
    } else {
        0.0
    }
}

fn gap_json(g: &GapReport) -> Value {
    json!({
        "n": g.n,
        "replicates": g.ratios.len(),
        "median": num(g.median),
        "mean": num(g.mean),
        "min": num(g.min),
        "max": num(g.max),
        "ratios": nums(&g.ratios),
    })
}
