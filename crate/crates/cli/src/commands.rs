//! Subcommand implementations. Each returns the files it wrote plus the
//! fitted constants to echo into the manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fujita_lab::blowup::{classify, ClassifyConfig, DichotomyCell, DichotomyReport, SmallDataPolicy, DICHOTOMY_FOOTER};
use fujita_lab::evolve::{evolve, solve_local, EvolveConfig, EvolveError, Trajectory};
use fujita_lab::kernel::{verify_kernel, KernelError, Propagator};
use fujita_lab::lorentz::{
    embedding_constant, inequality_suite, lebesgue_norm, lorentz_norm, weak_norm, InequalityParams, LorentzError,
    LorentzIndex, RearrangementTable,
};
use fujita_lab::semigroup::{decay_rates, fit_smoothing_constants, NormKind, SemigroupError, SmoothingConstants, SmoothingPairs};
use fujita_lab::weights::{make_grid, Grid, GridFunction, Sampling, WeightCase, WeightError, WeightSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{EvolveMode, ExperimentConfig};

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("invariant failed: {0}")]
    Numerical(String),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

macro_rules! numerical_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CommandError {
            fn from(e: $t) -> Self {
                CommandError::Numerical(e.to_string())
            }
        }
    )*};
}
numerical_from!(KernelError, EvolveError, SemigroupError, LorentzError, WeightError, fujita_lab::blowup::BlowupError);

/// What a command produced.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<PathBuf>,
    /// `name = value` lines for the manifest.
    pub fitted: Vec<String>,
    /// Human-readable summary for stdout.
    pub summary: Vec<String>,
}

fn write(out: &Path, name: &str, contents: &str, art: &mut Artifacts) -> Result<(), CommandError> {
    let path = out.join(name);
    fs::write(&path, contents).map_err(|source| CommandError::Io { path: path.display().to_string(), source })?;
    art.files.push(path);
    Ok(())
}

fn e16(x: f64) -> String {
    format!("{x:.16e}")
}

fn grid_for(spec: WeightSpec, radius: f64, cells: usize, grading: f64) -> Result<Arc<Grid>, CommandError> {
    Ok(Arc::new(make_grid(spec, radius, cells, grading)?))
}

fn propagator(spec: WeightSpec, radius: f64, cells: usize, grading: f64) -> Result<Propagator, CommandError> {
    Ok(Propagator::new(grid_for(spec, radius, cells, grading)?)?)
}

fn primary_propagator(cfg: &ExperimentConfig, spec: WeightSpec) -> Result<Propagator, CommandError> {
    propagator(spec, cfg.grid_radius, cfg.grid_cells, cfg.grid_grading)
}

fn global_propagator(cfg: &ExperimentConfig, spec: WeightSpec) -> Result<Propagator, CommandError> {
    propagator(spec, cfg.global_radius, cfg.global_cells, cfg.global_grading)
}

/// Empirical smoothing constants from unit-height bumps of widths 0.5, 1, 2.
pub fn smoothing_constants(prop: &Propagator) -> Result<SmoothingConstants, CommandError> {
    let data: Vec<GridFunction> = [0.5, 1.0, 2.0]
        .iter()
        .map(|w| GridFunction::from_fn(prop.grid().clone(), |x| (-(x / w) * (x / w)).exp()))
        .collect::<Result<_, _>>()?;
    Ok(fit_smoothing_constants(prop, &data, &[0.01, 0.1, 0.5, 1.0, 2.0, 4.0], &SmoothingPairs::default())?)
}

fn constants_lines(prefix: &str, c: &SmoothingConstants) -> Vec<String> {
    let mut out = vec![
        format!("{prefix}c1 = {}", c.c1),
        format!("{prefix}c2 = {}", c.c2),
        format!("{prefix}c_star_star = {}", c.c_star_star),
        format!("{prefix}duhamel_c1 = {}", c.duhamel),
    ];
    for (r, cr) in &c.weak_contraction {
        out.push(format!("{prefix}weak_contraction_r{r} = {cr}"));
    }
    out
}

pub fn kernel_verify(cfg: &ExperimentConfig, out: &Path) -> Result<Artifacts, CommandError> {
    let mut art = Artifacts::default();
    let grid = make_grid(cfg.spec(), cfg.grid_radius, cfg.grid_cells, cfg.grid_grading)?;
    let report = verify_kernel(&grid, &cfg.kernel_times, cfg.kernel_scheme)?;
    let mut csv = String::from("time,row_mass_error,symmetry_error,composition_error,min_entry,gaussian_error\n");
    for c in &report.times {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            e16(c.t),
            e16(c.row_mass_error),
            e16(c.symmetry_error),
            e16(c.composition_error),
            e16(c.min_entry),
            c.gaussian_error.map(e16).unwrap_or_default()
        );
    }
    write(out, "kernel_checks.csv", &csv, &mut art)?;
    let mut slopes = String::from("label,r,slope,predicted,relative_error\n");
    for s in &report.slopes {
        let _ = writeln!(slopes, "{},{},{},{},{}", s.label, e16(s.r), e16(s.slope), e16(s.predicted), e16(s.relative_error()));
    }
    write(out, "kernel_slopes.csv", &slopes, &mut art)?;

    art.summary.push(format!("nodes: {}", report.nodes));
    art.summary.push(format!("max row-mass error: {:.3e}", report.max_row_mass_error()));
    art.summary.push(format!("max symmetry error: {:.3e}", report.max_symmetry_error()));
    art.summary.push(format!("max composition error: {:.3e}", report.max_composition_error()));
    let gauss: Vec<f64> = report.times.iter().filter_map(|c| c.gaussian_error).collect();
    if !gauss.is_empty() {
        let worst = gauss.iter().copied().fold(0.0, f64::max);
        art.summary.push(format!(
            "gaussian match: max relative weighted-L1 error {:.4}% ({} 1%)",
            100.0 * worst,
            if worst < 0.01 { "<" } else { ">=" }
        ));
    }
    for s in &report.slopes {
        art.summary.push(format!("slope {}: {:.5} (predicted {:.5})", s.label, s.slope, s.predicted));
    }
    match &report.fit {
        Ok(fit) => {
            art.fitted.push(format!("kernel.d = {}", fit.d));
            art.fitted.push(format!("kernel.big_d = {}", fit.big_d));
            art.fitted.push(format!("kernel.c_star = {}", fit.c_star));
            art.fitted.push(format!("kernel.big_c_star = {}", fit.big_c_star));
            art.summary.push(format!("envelope fit: d = {:.4}, D = {:.4}, c* = {:.4}, C* = {:.4}", fit.d, fit.big_d, fit.c_star, fit.big_c_star));
        }
        Err(msg) => {
            art.fitted.push("kernel.fit = failed".into());
            art.summary.push(format!("envelope fit failed: {msg}"));
        }
    }
    Ok(art)
}

/// One row of the Lorentz self-test.
struct Check {
    case: usize,
    name: String,
    lhs: f64,
    rhs: f64,
    pass: bool,
}

pub fn lorentz_selftest(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<Artifacts, CommandError> {
    let mut art = Artifacts::default();
    let grid = grid_for(cfg.spec(), cfg.grid_radius.min(16.0), 64, cfg.grid_grading)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    let n = cfg.dimension;
    for case in 0..cfg.lorentz_cases {
        let random = |rng: &mut ChaCha8Rng| -> Result<GridFunction, CommandError> {
            let values = (0..grid.len()).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.01..5.0) }).collect();
            Ok(GridFunction::new(grid.clone(), values)?)
        };
        let f = random(&mut rng)?;
        let g = random(&mut rng)?;
        for &r in &cfg.lorentz_r {
            let a = lorentz_norm(&f, LorentzIndex::strong(r)?)?;
            let b = lebesgue_norm(&f, r);
            checks.push(Check { case, name: format!("strong_index_r{r}"), lhs: a, rhs: b, pass: (a - b).abs() <= 1e-6 * b });
        }
        let table = RearrangementTable::from_grid_function(&f);
        for (r, s) in [(1.5, 1.0), (2.0, 3.0), (3.0, f64::INFINITY)] {
            let idx = LorentzIndex::new(r, s)?;
            let (a, b) = (table.norm_via_rearrangement(idx), table.norm_via_distribution(idx));
            checks.push(Check { case, name: format!("reconcile_r{r}_s{s}"), lhs: a, rhs: b, pass: (a - b).abs() <= 1e-8 * a.max(b) });
        }
        let r = rng.random_range(1.1..4.0);
        let (s1, s2) = (rng.random_range(1.0..3.0), rng.random_range(3.0..8.0));
        let lhs = lorentz_norm(&f, LorentzIndex::new(r, s2)?)?;
        let rhs = embedding_constant(r, s1, s2) * lorentz_norm(&f, LorentzIndex::new(r, s1)?)?;
        checks.push(Check { case, name: "embedding".into(), lhs, rhs, pass: lhs <= rhs * (1.0 + 1e-10) });
        let report = inequality_suite(&f, &g, &InequalityParams::around(r, n))?;
        for (name, c) in [("spherical_bound", report.spherical), ("interpolation", report.interpolation), ("holder", report.holder)] {
            checks.push(Check { case, name: name.into(), lhs: c.lhs, rhs: c.rhs, pass: c.holds() });
        }
    }
    // |x|^{-1/2} in L^{2,∞} with n = 1, b = 0 has norm √2
    let flat = grid_for(WeightSpec::radial(0.0, 1)?, 64.0, 512, 2.0)?;
    let f = GridFunction::sample(flat, |x| x.abs().powf(-0.5), Sampling::OuterEdge)?;
    let w = weak_norm(&f, 2.0)?;
    checks.push(Check { case: cfg.lorentz_cases, name: "inverse_sqrt_weak_norm".into(), lhs: w, rhs: 2f64.sqrt(), pass: (w - 2f64.sqrt()).abs() < 1e-6 });

    let mut csv = String::from("case,check,lhs,rhs,margin,pass\n");
    for c in &checks {
        let _ = writeln!(csv, "{},{},{},{},{},{}", c.case, c.name, e16(c.lhs), e16(c.rhs), e16(c.rhs - c.lhs), c.pass);
    }
    write(out, "lorentz_selftest.csv", &csv, &mut art)?;
    let failed: Vec<&Check> = checks.iter().filter(|c| !c.pass).collect();
    art.summary.push(format!("{} checks, {} failed", checks.len(), failed.len()));
    art.summary.push(format!("weak norm of |x|^(-1/2): {w:.9} (sqrt 2 = {:.9})", 2f64.sqrt()));
    if let Some(c) = failed.first() {
        return Err(CommandError::Numerical(format!("lorentz check `{}` case {}: lhs {:.6e} rhs {:.6e}", c.name, c.case, c.lhs, c.rhs)));
    }
    Ok(art)
}

pub fn decay_fit(cfg: &ExperimentConfig, out: &Path) -> Result<Artifacts, CommandError> {
    let mut art = Artifacts::default();
    let prop = primary_propagator(cfg, cfg.spec())?;
    let profile = cfg.decay_profile.resolve(cfg.evolve.p);
    let mut csv = String::from("q,r,kind,slope,predicted,relative_error,constant\n");
    for &(q, r, kind) in &cfg.decay_pairs {
        let fit = decay_rates(&prop, &|x| profile.eval(x), &cfg.decay_times, q, r, kind, cfg.decay_scaling)?;
        let kind_name = if kind == NormKind::Weak { "weak" } else { "strong" };
        let _ = writeln!(csv, "{},{},{kind_name},{},{},{},{}", e16(q), e16(r), e16(fit.slope), e16(fit.predicted), e16(fit.error()), e16(fit.constant()));
        art.summary.push(format!("{kind_name} ({q}, {r}): slope {:.5}, predicted {:.5}", fit.slope, fit.predicted));
        art.fitted.push(format!("decay.{kind_name}_q{q}_r{r}.constant = {}", fit.constant()));
    }
    write(out, "decay_fit.csv", &csv, &mut art)?;
    Ok(art)
}

fn outcome_line(traj: &Trajectory, factor: f64) -> String {
    match traj.outcome {
        fujita_lab::evolve::Outcome::Converged => format!("outcome: converged to t = {}", traj.final_time()),
        fujita_lab::evolve::Outcome::ThresholdExceeded { time } => format!(
            "outcome: threshold exceeded at t = {time:.6e} (numerical blow-up proxy: sup u > {factor:e} |u0|_inf)"
        ),
        fujita_lab::evolve::Outcome::IterationBudgetExhausted { time } => {
            format!("outcome: Picard iteration budget exhausted at t = {time:.6e}")
        }
    }
}

pub fn evolve_command(cfg: &ExperimentConfig, out: &Path) -> Result<Artifacts, CommandError> {
    let mut art = Artifacts::default();
    let prop = primary_propagator(cfg, cfg.spec())?;
    let profile = cfg.evolve_u0.resolve(cfg.evolve.p);
    let u0 = GridFunction::from_fn(prop.grid().clone(), |x| profile.eval(x))?;
    let constants = smoothing_constants(&prop)?;
    art.fitted.extend(constants_lines("smoothing.", &constants));
    let traj = match cfg.evolve_mode {
        EvolveMode::Continuation => evolve(&prop, &u0, &cfg.evolve)?,
        EvolveMode::Local => {
            let local = solve_local(&prop, &u0, &cfg.evolve, &constants)?;
            art.fitted.push(format!("local.existence_time = {}", local.existence_time));
            art.summary.push(format!(
                "local existence time {:.6e}; sup u = {:.6e} <= 2 c** |u0|_inf = {:.6e}",
                local.existence_time, local.max_sup, local.bound
            ));
            local.trajectory
        }
    };
    write(out, "trajectory.csv", &traj.to_csv(), &mut art)?;
    art.summary.push(outcome_line(&traj, cfg.evolve.blowup_factor));
    art.summary.push(format!(
        "windows {}, Picard iterations {}, monotonicity defect {:.3e}, lower-bound defect {:.3e}",
        traj.windows, traj.picard_iterations, traj.monotonicity_defect, traj.lower_bound_defect
    ));
    if traj.monotonicity_defect < -cfg.evolve.picard_tol {
        return Err(CommandError::Numerical(format!("monotone iterates: defect {:.3e}", traj.monotonicity_defect)));
    }
    if traj.lower_bound_defect < -cfg.evolve.picard_tol {
        return Err(CommandError::Numerical(format!("Duhamel lower bound: defect {:.3e}", traj.lower_bound_defect)));
    }
    Ok(art)
}

fn classify_config(cfg: &ExperimentConfig, p: f64) -> ClassifyConfig {
    ClassifyConfig {
        evolve: EvolveConfig { p, ..cfg.evolve.clone() },
        small_data: if cfg.global_calibrate {
            SmallDataPolicy::Calibrate { delta: cfg.global_delta, max_halvings: cfg.global_max_halvings }
        } else {
            SmallDataPolicy::Fixed { delta: cfg.global_delta }
        },
        mode: cfg.global_mode,
    }
}

fn global_evolve(cfg: &ExperimentConfig, p: f64) -> ClassifyConfig {
    let mut c = classify_config(cfg, p);
    c.evolve.horizon = cfg.global_horizon;
    c
}

fn case_name(case: WeightCase) -> &'static str {
    match case {
        WeightCase::AxisPower => "axis |x1|^a",
        WeightCase::RadialPower => "radial |x|^b",
    }
}

/// Classifies every `(α, p)` cell, in parallel over cells, in a fixed order.
pub fn run_sweep(cfg: &ExperimentConfig, ps: &[f64], alphas: &[f64], single_data: bool) -> Result<(DichotomyReport, Vec<String>), CommandError> {
    struct Props {
        alpha: f64,
        primary: Propagator,
        global: Option<Propagator>,
    }
    let props: Vec<Props> = alphas
        .par_iter()
        .map(|&alpha| -> Result<Props, CommandError> {
            let spec = cfg.spec_with(alpha);
            let p_star = 1.0 + 2.0 / spec.homogeneous_dimension();
            let needs_global = ps.iter().any(|p| fujita_lab::blowup::regime(*p, p_star) == fujita_lab::blowup::Regime::Supercritical);
            Ok(Props {
                alpha,
                primary: primary_propagator(cfg, spec)?,
                global: if needs_global { Some(global_propagator(cfg, spec)?) } else { None },
            })
        })
        .collect::<Result<_, _>>()?;
    let mut fitted = Vec::new();
    for pr in &props {
        fitted.extend(constants_lines(&format!("smoothing.alpha{}.", pr.alpha), &smoothing_constants(&pr.primary)?));
    }
    let jobs: Vec<(usize, f64)> = (0..props.len()).flat_map(|k| ps.iter().map(move |p| (k, *p))).collect();
    let cells: Vec<DichotomyCell> = jobs
        .par_iter()
        .map(|&(k, p)| -> Result<DichotomyCell, CommandError> {
            let pr = &props[k];
            let p_star = 1.0 + 2.0 / pr.primary.grid().spec().homogeneous_dimension();
            let supercritical = fujita_lab::blowup::regime(p, p_star) == fujita_lab::blowup::Regime::Supercritical;
            let data = match (single_data, supercritical) {
                (true, _) => &cfg.evolve_u0,
                (false, true) => &cfg.sweep_supercritical_u0,
                (false, false) => &cfg.sweep_subcritical_u0,
            };
            let profile = data.resolve(p);
            let global = pr.global.as_ref().unwrap_or(&pr.primary);
            let ccfg = if supercritical { global_evolve(cfg, p) } else { classify_config(cfg, p) };
            let outcome = classify(&pr.primary, global, &profile, &ccfg)?;
            Ok(DichotomyCell { p, alpha: pr.alpha, outcome })
        })
        .collect::<Result<_, _>>()?;
    let report = DichotomyReport {
        spec_case: case_name(cfg.case).into(),
        dimension: cfg.dimension,
        ps: ps.to_vec(),
        alphas: alphas.to_vec(),
        cells,
    };
    Ok((report, fitted))
}

fn cell_summary(report: &DichotomyReport) -> Vec<String> {
    let mut out: Vec<String> = report
        .cells
        .iter()
        .map(|c| {
            let p_star = report.p_star(c.alpha);
            let detail = match &c.outcome {
                fujita_lab::blowup::CellOutcome::BlowUp { escape_time, kaplan_crossing, log_slope } => format!(
                    "escape t = {escape_time:.4}{}{}",
                    kaplan_crossing.map(|t| format!(", C* crossing t = {t:.4}")).unwrap_or_default(),
                    log_slope.map(|s| format!(", I(t) log slope = {s:.4}")).unwrap_or_default()
                ),
                fujita_lab::blowup::CellOutcome::GlobalCandidate { decay_slope, delta, .. } => {
                    format!("sup-norm decay slope {decay_slope:.4}, accepted delta {delta}")
                }
                fujita_lab::blowup::CellOutcome::Inconclusive { reason } => reason.clone(),
            };
            format!("p = {:.6}, alpha = {} (p* = {p_star:.6}): {} ({detail})", c.p, c.alpha, c.outcome.label())
        })
        .collect();
    out.push(DICHOTOMY_FOOTER.into());
    out
}

pub fn classify_command(cfg: &ExperimentConfig, out: &Path) -> Result<Artifacts, CommandError> {
    let mut art = Artifacts::default();
    let (report, fitted) = run_sweep(cfg, &[cfg.evolve.p], &[cfg.exponent], true)?;
    art.fitted = fitted;
    write(out, "classify.csv", &report.to_csv(), &mut art)?;
    art.summary = cell_summary(&report);
    Ok(art)
}

pub fn sweep_command(cfg: &ExperimentConfig, out: &Path) -> Result<Artifacts, CommandError> {
    let mut art = Artifacts::default();
    let (report, fitted) = run_sweep(cfg, &cfg.sweep_p, &cfg.sweep_alpha, false)?;
    art.fitted = fitted;
    write(out, "dichotomy.csv", &report.to_csv(), &mut art)?;
    write(out, "dichotomy.svg", &report.to_svg(), &mut art)?;
    art.summary = cell_summary(&report);
    Ok(art)
}
