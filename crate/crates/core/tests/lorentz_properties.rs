use std::sync::Arc;

use fujita_lab::lorentz::*;
use fujita_lab::weights::*;
use proptest::prelude::*;

fn grid(a: f64) -> Arc<Grid> {
    Arc::new(make_grid(WeightSpec::axis(a, 1).unwrap(), 8.0, 48, 1.5).unwrap())
}

fn step_values() -> impl Strategy<Value = Vec<f64>> {
    // mostly positive levels with some zero cells
    prop::collection::vec(prop_oneof![3 => 0.01f64..5.0, 1 => Just(0.0)], 49)
        .prop_filter("nonzero", |v| v.iter().any(|x| *x > 0.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn strong_index_matches_lebesgue(values in step_values(), a in 0.0f64..0.9) {
        let f = GridFunction::new(grid(a), values).unwrap();
        for r in [1.0, 2.0, 4.0] {
            let via_lorentz = lorentz_norm(&f, LorentzIndex::strong(r).unwrap()).unwrap();
            let direct = lebesgue_norm(&f, r);
            prop_assert!((via_lorentz - direct).abs() <= 1e-6 * direct, "r={r}: {via_lorentz} vs {direct}");
        }
    }

    #[test]
    fn rearrangement_is_equimeasurable(values in step_values(), shift in 1usize..48) {
        let g = grid(0.5);
        let f = GridFunction::new(g.clone(), values.clone()).unwrap();
        let table = RearrangementTable::from_grid_function(&f);
        // μ_f(λ) = |{s : f*(s) > λ}| on the rearranged side
        for lambda in [0.0, 0.5, 1.0, 2.5, 4.0] {
            let mu = distribution_fn(&f, lambda);
            let via_star = table.levels().iter().zip(table.cumulative()).filter(|(v, _)| **v > lambda).map(|(_, s)| *s).fold(0.0, f64::max);
            prop_assert!((mu - via_star).abs() <= 1e-12 * mu.max(1.0));
        }
        // permuting values over equal-mass cells leaves f* unchanged
        let masses: Vec<f64> = (0..g.len()).map(|i| g.measure(i)).collect();
        let mut pieces: Vec<(f64, f64)> = values.iter().copied().zip(masses.iter().copied()).collect();
        pieces.rotate_left(shift);
        let permuted = RearrangementTable::new(&StepFunction::new(pieces).unwrap());
        for s in [0.1, 1.0, 3.0, 10.0] {
            prop_assert!((permuted.rearrangement(s) - table.rearrangement(s)).abs() < 1e-12);
        }
    }

    #[test]
    fn two_formulas_reconcile(values in step_values(), r in 1.0f64..6.0, sigma in 1.0f64..8.0) {
        let f = GridFunction::new(grid(0.3), values).unwrap();
        let table = RearrangementTable::from_grid_function(&f);
        let idx = LorentzIndex::new(r, sigma).unwrap();
        let a = table.norm_via_rearrangement(idx);
        let b = table.norm_via_distribution(idx);
        prop_assert!((a - b).abs() <= 1e-8 * a.max(b));
    }

    #[test]
    fn embedding_holds(values in step_values(), r in 1.0f64..5.0, s1 in 1.0f64..4.0, ds in 0.1f64..6.0) {
        let f = GridFunction::new(grid(0.6), values).unwrap();
        let s2 = s1 + ds;
        let small = lorentz_norm(&f, LorentzIndex::new(r, s2).unwrap()).unwrap();
        let large = lorentz_norm(&f, LorentzIndex::new(r, s1).unwrap()).unwrap();
        prop_assert!(small <= embedding_constant(r, s1, s2) * large * (1.0 + 1e-10));
        let weak = lorentz_norm(&f, LorentzIndex::weak(r).unwrap()).unwrap();
        prop_assert!(weak <= embedding_constant(r, s1, f64::INFINITY) * large * (1.0 + 1e-10));
    }

    #[test]
    fn inequalities_have_nonnegative_margin(f_vals in step_values(), g_vals in step_values(), r in 1.1f64..4.0) {
        let g = grid(0.5);
        let f = GridFunction::new(g.clone(), f_vals).unwrap();
        let h = GridFunction::new(g, g_vals).unwrap();
        let report = inequality_suite(&f, &h, &InequalityParams::around(r, 1)).unwrap();
        prop_assert!(report.all_hold(), "{report:?}");
    }
}

#[test]
fn inverse_square_root_weak_norm() {
    let grid = Arc::new(make_grid(WeightSpec::radial(0.0, 1).unwrap(), 64.0, 512, 2.0).unwrap());
    let f = GridFunction::sample(grid, |x| x.abs().powf(-0.5), Sampling::OuterEdge).unwrap();
    let w = weak_norm(&f, 2.0).unwrap();
    assert!((w - 2f64.sqrt()).abs() < 1e-6, "{w}");
}
