//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without the libtest harness so the lines always print.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use fujita_cli::commands::{lorentz_selftest, run_sweep};
use fujita_cli::config::ExperimentConfig;
use fujita_lab::blowup::{a_k_direct, c_star_estimate, log_a_k, CellOutcome, DichotomyReport};
use fujita_lab::evolve::{evolve, picard_iterate, solve_local, split_step, stability_check, EvolveConfig};
use fujita_lab::kernel::{build_kernel, gaussian_match_error, verify_kernel, Propagator, TimeScheme};
use fujita_lab::semigroup::{decay_rates, fit_smoothing_constants, DataScaling, NormKind, SmoothingPairs};
use fujita_lab::weights::{make_grid, GridFunction, WeightSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn axis(a: f64) -> WeightSpec {
    WeightSpec::axis(a, 1).unwrap()
}

fn c1_gaussian_oracle() -> Verdict {
    let grid = make_grid(axis(0.0), 16.0, 256, 2.0).unwrap();
    let full = Arc::new(grid.mirrored().unwrap());
    let mut parts = Vec::new();
    let mut worst: f64 = 0.0;
    for t in [0.25, 1.0, 4.0] {
        let table = build_kernel(full.clone(), t, TimeScheme::Exponential).unwrap();
        let err = gaussian_match_error(&table).unwrap();
        worst = worst.max(err);
        parts.push(format!("t={t}: {:.3}%", 100.0 * err));
    }
    check(worst < 0.01, format!("{} (limit 1%)", parts.join(", ")))
}

fn c2_structure() -> Verdict {
    let specs = [axis(0.0), axis(0.5), WeightSpec::radial(0.0, 2).unwrap(), WeightSpec::radial(1.0, 2).unwrap()];
    let times = [0.25, 1.0, 4.0, 16.0];
    let (mut mass, mut comp, mut sym): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut implicit_comp: f64 = 0.0;
    for spec in specs {
        let grid = make_grid(spec, 32.0, 256, 2.0).unwrap();
        let report = verify_kernel(&grid, &times, TimeScheme::Exponential).unwrap();
        mass = mass.max(report.max_row_mass_error());
        comp = comp.max(report.max_composition_error());
        sym = sym.max(report.max_symmetry_error());
        let implicit = verify_kernel(&grid, &times, TimeScheme::BackwardEuler { steps: 400 }).unwrap();
        mass = mass.max(implicit.max_row_mass_error());
        sym = sym.max(implicit.max_symmetry_error());
        implicit_comp = implicit_comp.max(implicit.max_composition_error());
    }
    check(
        mass < 1e-3 && comp < 2e-3 && implicit_comp < 2e-3 && sym < 1e-8,
        format!(
            "row mass {mass:.2e} (<1e-3), composition {comp:.2e} exponential / {implicit_comp:.2e} implicit 400 steps (<2e-3), symmetry {sym:.2e} (<1e-8)"
        ),
    )
}

fn c3_decay_exponents() -> Verdict {
    let inf = f64::INFINITY;
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (name, spec) in [("a=0.5", axis(0.5)), ("b=1,n=2", WeightSpec::radial(1.0, 2).unwrap())] {
        let grid = make_grid(spec, 32.0, 256, 2.0).unwrap();
        let report = verify_kernel(&grid, &[0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0], TimeScheme::Exponential).unwrap();
        for s in report.slopes.iter().filter(|s| s.label == "L^2" || s.label == "L^inf") {
            worst = worst.max(s.relative_error());
        }
        let prop = Propagator::new(Arc::new(make_grid(spec, 64.0, 256, 2.0).unwrap())).unwrap();
        let times: Vec<f64> = (0..7).map(|k| 0.25 * 2f64.powi(k)).collect();
        for (q, r) in [(1.0, inf), (1.0, 2.0), (2.0, inf)] {
            let fit = decay_rates(&prop, &|x: f64| (-x * x).exp(), &times, q, r, NormKind::Strong, DataScaling::ParabolicRescaled).unwrap();
            worst = worst.max(fit.error());
            parts.push(format!("{name} ({q},{r}) {:.4}/{:.4}", fit.slope, fit.predicted));
        }
    }
    check(worst < 0.05, format!("max relative exponent error {:.2}% (limit 5%); {}", 100.0 * worst, parts.join(", ")))
}

fn c4_lorentz() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::default();
    match lorentz_selftest(&cfg, 2024, dir.path()) {
        Ok(art) => Ok(art.summary.join("; ")),
        Err(e) => Err(e.to_string()),
    }
}

fn c5_picard() -> Verdict {
    let grid = Arc::new(make_grid(axis(0.5), 24.0, 128, 2.0).unwrap());
    let prop = Propagator::new(grid.clone()).unwrap();
    let data: Vec<GridFunction> =
        [0.5, 1.0, 2.0].iter().map(|w| GridFunction::from_fn(grid.clone(), |x| (-(x / w) * (x / w)).exp()).unwrap()).collect();
    let constants = fit_smoothing_constants(&prop, &data, &[0.01, 0.1, 0.5, 1.0, 2.0, 4.0], &SmoothingPairs::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut mono, mut lower, mut oracle): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let tol = EvolveConfig::default().picard_tol;
    for _ in 0..5 {
        let (h, w, p) = (rng.random_range(0.2..1.0), rng.random_range(0.5..2.0), rng.random_range(1.5..3.0));
        let u0 = GridFunction::from_fn(grid.clone(), |x| h * (-(x / w) * (x / w)).exp()).unwrap();
        let cfg = EvolveConfig { p, duhamel_steps: 128, ..Default::default() };
        let local = solve_local(&prop, &u0, &cfg, &constants).unwrap();
        let half = local.existence_time / 2.0;
        let picard = picard_iterate(&prop, &u0, &EvolveConfig { duhamel_steps: 64, ..cfg.clone() }, half).unwrap();
        let split = split_step(&prop, &u0, p, half, 4000).unwrap();
        let diff = picard.snapshots[1].1.iter().zip(&split).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        oracle = oracle.max(diff);
        let long = evolve(&prop, &u0, &EvolveConfig { p, horizon: 4.0, ..Default::default() }).unwrap();
        for t in [&local.trajectory, &picard, &long] {
            mono = mono.min(t.monotonicity_defect);
            lower = lower.min(t.lower_bound_defect);
        }
    }
    check(
        mono >= -tol && lower >= -tol && oracle < 2e-3,
        format!("min monotonicity defect {mono:.2e}, min lower-bound defect {lower:.2e} (>= -{tol:e}); split-step gap {oracle:.2e} (<2e-3) over 5 cases"),
    )
}

fn c6_combinatorics() -> Verdict {
    let a2 = log_a_k(2.0, 2).exp();
    let a3 = log_a_k(2.0, 3).exp();
    let direct_gap = (a2 - a_k_direct(2.0, 2)).abs().max((a3 - a_k_direct(2.0, 3)).abs());
    let est = c_star_estimate(2.0).unwrap();
    let bound = (1.0 + 2f64.ln()) * 1.5;
    let ok = (a2 - 1.0 / 3.0).abs() < 1e-12
        && (a3 - 1.0 / 63.0).abs() < 1e-12
        && direct_gap < 1e-12
        && (est.log_bound - bound).abs() < 1e-12
        && est.tail < 1e-12
        && est.log_c_star <= est.log_bound;
    check(
        ok,
        format!(
            "A2 = {a2:.15}, A3 = {a3:.15}; log C* bound {:.15} vs (1+log 2)(3/2) = {bound:.15}; log C* estimate {:.6} with tail {:.1e}",
            est.log_bound, est.log_c_star, est.tail
        ),
    )
}

fn sweep_report() -> &'static Result<DichotomyReport, String> {
    static REPORT: OnceLock<Result<DichotomyReport, String>> = OnceLock::new();
    REPORT.get_or_init(|| {
        let cfg = ExperimentConfig::default();
        run_sweep(&cfg, &cfg.sweep_p, &cfg.sweep_alpha, false).map(|r| r.0).map_err(|e| e.to_string())
    })
}

fn c7_dichotomy() -> Verdict {
    let report = sweep_report().as_ref().map_err(Clone::clone)?;
    let mut ok = report.cells.len() == 4;
    let mut parts = Vec::new();
    for (k, cell) in report.cells.iter().enumerate() {
        let good = match (k, &cell.outcome) {
            (0 | 1, CellOutcome::BlowUp { escape_time, .. }) => *escape_time > 0.0,
            (2, CellOutcome::BlowUp { log_slope: Some(s), .. }) => *s > 0.0,
            (3, CellOutcome::GlobalCandidate { decay_slope, .. }) => (decay_slope + 0.5).abs() <= 0.05,
            _ => false,
        };
        ok &= good;
        let detail = match &cell.outcome {
            CellOutcome::BlowUp { escape_time, log_slope, .. } => {
                format!("BlowUp t={escape_time:.3}{}", log_slope.map(|s| format!(" log-slope {s:.3}")).unwrap_or_default())
            }
            CellOutcome::GlobalCandidate { decay_slope, delta, .. } => format!("GlobalCandidate slope {decay_slope:.4} delta {delta}"),
            CellOutcome::Inconclusive { reason } => format!("Inconclusive ({reason})"),
        };
        parts.push(format!("p={:.4}: {detail}", cell.p));
    }
    check(ok, parts.join("; "))
}

fn c8_functionals() -> Verdict {
    let report = sweep_report().as_ref().map_err(Clone::clone)?;
    match report.cells.last().map(|c| &c.outcome) {
        Some(CellOutcome::GlobalCandidate { functional_slopes, .. }) => {
            let ok = functional_slopes.len() == 3 && functional_slopes.iter().all(|s| s.abs() <= 0.05);
            let labels = ["r*", "2r*", "inf"];
            let parts: Vec<String> = functional_slopes.iter().zip(labels).map(|(s, l)| format!("q={l}: {s:+.4}")).collect();
            check(ok, format!("late log-log slopes {} (limit 0.05)", parts.join(", ")))
        }
        other => Err(format!("no accepted supercritical run: {other:?}")),
    }
}

fn c9_stability() -> Verdict {
    let grid = Arc::new(make_grid(axis(0.5), 24.0, 96, 2.0).unwrap());
    let prop = Propagator::new(grid.clone()).unwrap();
    let cfg = EvolveConfig { p: 2.0, ..Default::default() };
    let u1 = GridFunction::from_fn(grid, |x| 0.2 * (-x * x).exp()).unwrap();
    let ratio = |eps: f64| stability_check(&prop, &u1, &u1.map(|v| v + eps), 1.0, &cfg).unwrap();
    let (r1, r2) = (ratio(1e-3), ratio(5e-4));
    let rel = (r1 - r2).abs() / r2;
    check(r1.is_finite() && rel <= 0.2, format!("ratio {r1:.6} at eps 1e-3, {r2:.6} at eps 5e-4, relative change {:.3}% (limit 20%)", 100.0 * rel))
}

fn c10_determinism() -> Verdict {
    let bin = env!("CARGO_BIN_EXE_fujita");
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, jobs: &str| -> Result<Vec<u8>, String> {
        let out = dir.path().join(name);
        let status = Command::new(bin)
            .args(["sweep", "--seed", "42", "--jobs", jobs, "--out"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        std::fs::read(out.join("dichotomy.csv")).map_err(|e| e.to_string())
    };
    let a = run("first", "4")?;
    let b = run("second", "4")?;
    let c = run("serial", "1")?;
    check(a == b && a == c && !a.is_empty(), format!("{} bytes; repeat identical: {}; serial identical: {}", a.len(), a == b, a == c))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("kernel Gaussian oracle", c1_gaussian_oracle),
        ("kernel structure", c2_structure),
        ("decay exponents", c3_decay_exponents),
        ("Lorentz suite", c4_lorentz),
        ("Picard invariants", c5_picard),
        ("A_k and C* combinatorics", c6_combinatorics),
        ("Fujita dichotomy", c7_dichotomy),
        ("global decay functionals", c8_functionals),
        ("stability", c9_stability),
        ("determinism", c10_determinism),
    ];
    let mut failures = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({secs:.1}s) {detail}", k + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {:>2} {name}: FAIL ({secs:.1}s) {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
