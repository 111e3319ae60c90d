//! End-to-end checks of the grouped Sobol' estimators through the public API.

use mfugsa_core::gsa::{estimate_indices, GroupedParameterSpace, ParamSpec, SobolEstimate};
use mfugsa_core::sampling::Density;
use proptest::prelude::*;
use std::f64::consts::PI;

fn uniform_space(names: &[&str], lo: f64, hi: f64) -> GroupedParameterSpace {
    let params = names
        .iter()
        .map(|n| ParamSpec::scalar(n, Density::Uniform { lo, hi }))
        .collect();
    let groups: Vec<(&str, Vec<&str>)> = names.iter().map(|n| (*n, vec![*n])).collect();
    GroupedParameterSpace::independent(params, &groups).unwrap()
}

fn ishigami(x: &[f64]) -> f64 {
    x[0].sin() + 7.0 * x[1].sin().powi(2) + 0.1 * x[2].powi(4) * x[0].sin()
}

fn find<'a>(est: &'a [SobolEstimate], g: &str) -> &'a SobolEstimate {
    est.iter().find(|e| e.group == g).unwrap()
}

#[test]
fn ishigami_indices_match_closed_form() {
    // Closed-form ANOVA terms for a = 7, b = 0.1 on U[-π, π]³.
    let (a, b) = (7.0_f64, 0.1_f64);
    let v1 = 0.5 * (1.0 + b * PI.powi(4) / 5.0).powi(2);
    let v2 = a * a / 8.0;
    let v13 = b * b * PI.powi(8) * (1.0 / 18.0 - 1.0 / 50.0);
    let var = v1 + v2 + v13;
    let space = uniform_space(&["x1", "x2", "x3"], -PI, PI);
    let est = estimate_indices(&space, &ishigami, 50_000, 3).unwrap();
    let expect = [
        ("x1", v1 / var, (v1 + v13) / var),
        ("x2", v2 / var, v2 / var),
        ("x3", 0.0, v13 / var),
    ];
    for (g, s, t) in expect {
        let e = find(&est, g);
        assert!((e.s_main - s).abs() < 0.03, "{g}: S {} vs {s}", e.s_main);
        assert!((e.t_total - t).abs() < 0.03, "{g}: T {} vs {t}", e.t_total);
    }
}

#[test]
fn same_seed_gives_identical_estimates() {
    let space = uniform_space(&["x1", "x2", "x3"], -PI, PI);
    let a = estimate_indices(&space, &ishigami, 2_000, 11).unwrap();
    let b = estimate_indices(&space, &ishigami, 2_000, 11).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn indices_are_affine_invariant(scale in 0.1f64..50.0, shift in -100.0f64..100.0, seed in 0u64..1000) {
        let space = uniform_space(&["x1", "x2", "x3"], -1.0, 1.0);
        let f = |x: &[f64]| x[0] + 2.0 * x[1] * x[1] + x[0] * x[1] * x[2];
        let g = |x: &[f64]| scale * f(x) + shift;
        let base = estimate_indices(&space, &f, 500, seed).unwrap();
        let moved = estimate_indices(&space, &g, 500, seed).unwrap();
        for (p, q) in base.iter().zip(&moved) {
            prop_assert!((p.s_main - q.s_main).abs() < 1e-9);
            prop_assert!((p.t_total - q.t_total).abs() < 1e-9);
            prop_assert!((q.total_numerator - scale * scale * p.total_numerator).abs()
                <= 1e-9 * q.total_numerator.abs().max(1.0));
        }
    }

    #[test]
    fn total_numerators_are_nonnegative(seed in 0u64..1000) {
        let space = uniform_space(&["x1", "x2", "x3"], -PI, PI);
        for e in estimate_indices(&space, &ishigami, 200, seed).unwrap() {
            prop_assert!(e.total_numerator >= 0.0);
        }
    }
}
