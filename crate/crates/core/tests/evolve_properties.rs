use std::sync::Arc;

use fujita_lab::evolve::*;
use fujita_lab::kernel::Propagator;
use fujita_lab::lorentz::lebesgue_norm;
use fujita_lab::semigroup::{fit_smoothing_constants, SmoothingPairs};
use fujita_lab::weights::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn axis_prop(radius: f64, cells: usize) -> Propagator {
    let grid = make_grid(WeightSpec::axis(0.5, 1).unwrap(), radius, cells, 2.0).unwrap();
    Propagator::new(Arc::new(grid)).unwrap()
}

fn bump(prop: &Propagator, height: f64, width: f64) -> GridFunction {
    GridFunction::from_fn(prop.grid().clone(), |x| height * (-(x / width) * (x / width)).exp()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn iterates_increase_and_dominate_linear_flow(height in 0.05f64..1.0, width in 0.3f64..2.0, p in 1.5f64..3.0) {
        let prop = axis_prop(24.0, 96);
        let u0 = bump(&prop, height, width);
        let cfg = EvolveConfig { p, horizon: 2.0, ..Default::default() };
        let traj = evolve(&prop, &u0, &cfg).unwrap();
        prop_assert!(traj.monotonicity_defect >= -cfg.picard_tol);
        prop_assert!(traj.lower_bound_defect >= -cfg.picard_tol);
        prop_assert!(traj.records.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn comparison_in_initial_data(height in 0.05f64..0.5, extra in 0.01f64..0.5) {
        let prop = axis_prop(24.0, 96);
        let small = bump(&prop, height, 1.0);
        let large = bump(&prop, height + extra, 1.0);
        let cfg = EvolveConfig { p: 2.0, horizon: 1.0, duhamel_steps: 32, ..Default::default() };
        let a = picard_iterate(&prop, &small, &cfg, 1.0).unwrap();
        let b = picard_iterate(&prop, &large, &cfg, 1.0).unwrap();
        let (ua, ub) = (&a.snapshots[1].1, &b.snapshots[1].1);
        prop_assert!(ua.iter().zip(ub).all(|(x, y)| *x <= *y + cfg.picard_tol));
    }
}

#[test]
fn small_data_contraction() {
    let prop = axis_prop(32.0, 128);
    let u0 = GridFunction::from_fn(prop.grid().clone(), |x| 0.01 / (1.0 + x.abs())).unwrap();
    let cfg = EvolveConfig { p: 2.0, duhamel_steps: 64, ..Default::default() };
    let traj = picard_iterate(&prop, &u0, &cfg, 1.0).unwrap();
    let h = &traj.picard_history;
    assert!(h.len() >= 3);
    for w in h.windows(2).filter(|w| w[0] > 1e-14) {
        assert!(w[1] <= 0.5 * w[0], "{h:?}");
    }
}

fn fitted_constants(prop: &Propagator) -> fujita_lab::semigroup::SmoothingConstants {
    let data: Vec<GridFunction> = [0.5, 1.0, 2.0].iter().map(|w| bump(prop, 1.0, *w)).collect();
    fit_smoothing_constants(prop, &data, &[0.01, 0.1, 0.5, 1.0, 2.0], &SmoothingPairs::default()).unwrap()
}

#[test]
fn local_solution_bound_and_split_step_oracle() {
    let prop = axis_prop(24.0, 128);
    let constants = fitted_constants(&prop);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let height = rng.random_range(0.2..1.0);
        let width = rng.random_range(0.5..2.0);
        let u0 = bump(&prop, height, width);
        let cfg = EvolveConfig { p: 2.0, duhamel_steps: 128, ..Default::default() };
        let local = solve_local(&prop, &u0, &cfg, &constants).unwrap();
        assert!(local.max_sup <= local.bound);
        let half = local.existence_time / 2.0;
        let cfg_half = EvolveConfig { duhamel_steps: 64, ..cfg.clone() };
        let picard = picard_iterate(&prop, &u0, &cfg_half, half).unwrap();
        let oracle = split_step(&prop, &u0, 2.0, half, 4000).unwrap();
        let diff = picard.snapshots[1].1.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 2e-3, "h={height} w={width}: {diff}");
    }
}

#[test]
fn unit_sup_local_bound() {
    let prop = axis_prop(24.0, 128);
    let constants = fitted_constants(&prop);
    let u0 = bump(&prop, 1.0, 1.0);
    let local = solve_local(&prop, &u0, &EvolveConfig::default(), &constants).unwrap();
    assert!(local.max_sup <= 2.0 * constants.c_star_star);
}

#[test]
fn zero_data_local_and_global() {
    let prop = axis_prop(24.0, 64);
    let constants = fitted_constants(&prop);
    let zero = GridFunction::zeros(prop.grid().clone());
    let local = solve_local(&prop, &zero, &EvolveConfig { horizon: 5.0, ..Default::default() }, &constants).unwrap();
    assert_eq!(local.max_sup, 0.0);
    let cfg = EvolveConfig { p: 3.0, horizon: 16.0, ..Default::default() };
    let sol = solve_global_small(&prop, &|_| 0.0, SmallData::WeakCritical, 1.0, &cfg).unwrap();
    assert_eq!(sol.trajectory.outcome, Outcome::Converged);
    assert!(sol.functionals.iter().all(|f| f.sup == 0.0));
}

#[test]
fn balancing_equalises_norms() {
    let prop = axis_prop(64.0, 256);
    let profile = |x: f64| 0.3 * (-x * x).exp();
    for r in [1.0, 1.2] {
        let lambda = balancing_scale(&prop, &profile, 3.0, r).unwrap();
        let scaled = GridFunction::from_fn(prop.grid().clone(), |x| lambda * profile(lambda * x)).unwrap();
        let (lr, sup) = (lebesgue_norm(&scaled, r), scaled.sup_norm());
        assert!((lr - sup).abs() <= 1e-6 * sup, "r={r}: {lr} vs {sup}");
    }
}

#[test]
fn smallness_gate_refuses_large_data() {
    let prop = axis_prop(64.0, 128);
    let cfg = EvolveConfig { p: 3.0, horizon: 16.0, ..Default::default() };
    let err = solve_global_small(&prop, &|x| 50.0 / (1.0 + x.abs()), SmallData::WeakCritical, 1.0, &cfg).unwrap_err();
    assert!(matches!(err, EvolveError::SmallnessUnmet { measured, .. } if measured > 1.0));
    let sub = EvolveConfig { p: 2.0, ..cfg };
    assert!(matches!(
        solve_global_small(&prop, &|x| 0.01 / (1.0 + x.abs()), SmallData::WeakCritical, 1.0, &sub),
        Err(EvolveError::NotSupercritical { .. })
    ));
}

#[test]
fn balanced_global_run_with_integrable_data() {
    let prop = axis_prop(256.0, 256);
    let cfg = EvolveConfig { p: 3.0, horizon: 1024.0, ..Default::default() };
    let sol = solve_global_small(&prop, &|x| 0.2 * (-x * x).exp(), SmallData::Balanced { r: 1.0 }, 1.0, &cfg).unwrap();
    assert_eq!(sol.trajectory.outcome, Outcome::Converged);
    assert!(sol.lambda.is_some());
    // integrable data: sup-norm decays like t^{-(n+α)/2}
    assert!((sol.sup_slope + 0.75).abs() < 0.05, "{}", sol.sup_slope);
    assert!(sol.functionals.iter().all(|f| f.sup.is_finite() && f.late_slope < 0.05));
}

#[test]
fn stability_ratio() {
    let prop = axis_prop(24.0, 96);
    let cfg = EvolveConfig { p: 2.0, duhamel_steps: 64, ..Default::default() };
    let u1 = bump(&prop, 0.2, 1.0);
    assert_eq!(stability_check(&prop, &u1, &u1, 1.0, &cfg).unwrap(), 0.0);
    let shifted = |eps: f64| u1.map(|v| v + eps);
    let r1 = stability_check(&prop, &u1, &shifted(1e-3), 1.0, &cfg).unwrap();
    let r2 = stability_check(&prop, &u1, &shifted(5e-4), 1.0, &cfg).unwrap();
    assert!(r1.is_finite() && (r1 - r2).abs() <= 0.2 * r2, "{r1} {r2}");
    let short = stability_check(&prop, &u1, &shifted(1e-3), 0.1, &cfg).unwrap();
    assert!(short <= r1, "{short} {r1}");
}

#[test]
fn trajectory_csv_columns() {
    let prop = axis_prop(16.0, 32);
    let cfg = EvolveConfig { p: 2.0, horizon: 0.5, qs: vec![2.0, f64::INFINITY], ..Default::default() };
    let traj = evolve(&prop, &bump(&prop, 0.1, 1.0), &cfg).unwrap();
    let csv = traj.to_csv();
    let header = csv.lines().next().unwrap();
    assert_eq!(header, "time,sup_norm,strong_q2,weak_q2,strong_qinf,weak_qinf");
    assert_eq!(csv.lines().count(), traj.records.len() + 1);
}
