use std::f64::consts::PI;

use liouville_core::torus_green::{self, TailCoefficientInput, TorusError, TorusFunction, TorusGreen};
use proptest::prelude::*;

/// Unit-area lattice with a shear and an aspect ratio.
fn skewed(shear: f64, aspect: f64) -> TorusGreen {
    TorusGreen::new([aspect, 0.0], [shear, 1.0 / aspect]).unwrap()
}

fn point() -> impl Strategy<Value = [f64; 2]> {
    [(-2.0f64..2.0), (-2.0f64..2.0)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn symmetric_periodic_translation_invariant(
        x in point(), y in point(), v in point(),
        shear in -0.5f64..0.5, aspect in 0.7f64..1.4,
        i in -2i32..3, j in -2i32..3,
    ) {
        let tg = skewed(shear, aspect);
        let (a1, a2) = tg.lattice();
        let l = [i as f64 * a1[0] + j as f64 * a2[0], i as f64 * a1[1] + j as f64 * a2[1]];
        let (d, _) = tg.reduce([x[0] - y[0], x[1] - y[1]]);
        prop_assume!(d[0].hypot(d[1]) > 1e-3);
        let g = tg.green(x, y).unwrap();
        prop_assert!((g - tg.green(y, x).unwrap()).abs() <= 1e-12);
        prop_assert!((g - tg.green([x[0] + l[0], x[1] + l[1]], y).unwrap()).abs() <= 1e-11);
        prop_assert!((g - tg.green([x[0] + v[0], x[1] + v[1]], [y[0] + v[0], y[1] + v[1]]).unwrap()).abs() <= 1e-11);
        let xr = [y[0] + d[0], y[1] + d[1]];
        let gr = tg.gamma_reg(xr, y);
        prop_assert!((gr - tg.gamma_reg([xr[0] + v[0], xr[1] + v[1]], [y[0] + v[0], y[1] + v[1]])).abs() <= 1e-11);
    }

    #[test]
    fn ewald_parameter_independence(x in point(), shear in -0.5f64..0.5, aspect in 0.7f64..1.4) {
        let (a1, a2) = skewed(shear, aspect).lattice();
        let a = TorusGreen::with_alpha(a1, a2, PI).unwrap();
        let b = TorusGreen::with_alpha(a1, a2, 2.0 * PI).unwrap();
        let (d, _) = a.reduce(x);
        prop_assume!(d[0].hypot(d[1]) > 1e-3);
        prop_assert!((a.green(x, [0.0, 0.0]).unwrap() - b.green(x, [0.0, 0.0]).unwrap()).abs() <= 1e-10);
        prop_assert!((a.gamma_diagonal() - b.gamma_diagonal()).abs() <= 1e-10);
    }

    #[test]
    fn regular_part_gradient_matches_differences(x in point(), y in point()) {
        let tg = TorusGreen::unit_square();
        let (d, _) = tg.reduce([x[0] - y[0], x[1] - y[1]]);
        prop_assume!(d[0].hypot(d[1]) > 1e-2);
        let xr = [y[0] + d[0], y[1] + d[1]];
        let g = tg.grad_gamma(xr, y);
        let h = 1e-5;
        for k in 0..2 {
            let mut p = xr;
            let mut m = xr;
            p[k] += h;
            m[k] -= h;
            let fd = (tg.gamma_reg(p, y) - tg.gamma_reg(m, y)) / (2.0 * h);
            prop_assert!((fd - g[k]).abs() <= 1e-6);
        }
        prop_assert!(tg.grad1_gamma(y).iter().all(|v| v.abs() <= 1e-10));
    }
}

#[test]
fn spectral_coefficients_on_a_skewed_lattice() {
    let tg = skewed(0.3, 1.2);
    for c in tg.spectral_coefficients(&[[1, 0], [0, 1], [1, -1], [2, 1]]) {
        assert!((c.laplacian_coefficient - 1.0).abs() <= 1e-8, "{c:?}");
    }
    assert!(tg.mean_value([0.1, 0.2]).abs() <= 1e-8);
}

#[test]
fn near_diagonal_limit() {
    let tg = TorusGreen::unit_square();
    let y = [0.4, 0.7];
    let reg = |r: f64| tg.green([y[0] + r, y[1]], y).unwrap() + r.ln() / (2.0 * PI);
    assert!((reg(1e-3) - reg(1e-4)).abs() < 1e-6);
    assert!((reg(1e-5) - tg.gamma_diagonal()).abs() < 1e-8);
}

#[test]
fn tail_coefficient_is_translation_invariant_for_constant_weight() {
    let tg = TorusGreen::unit_square();
    let a = torus_green::tail_coefficient(&TailCoefficientInput::new(3.0, [0.0, 0.0], TorusFunction::one()), &tg).unwrap();
    let b = torus_green::tail_coefficient(&TailCoefficientInput::new(3.0, [0.37, 0.81], TorusFunction::one()), &tg).unwrap();
    assert!((a.value() - b.value()).abs() < 1e-6 * a.value().abs());
    // the extrapolated excision estimates form a plateau
    assert!(a.plateau_spread < 1e-3 * a.value().abs());
}

#[test]
fn tail_coefficient_input_validation() {
    let tg = TorusGreen::unit_square();
    let bad_m = TailCoefficientInput::new(4.0, [0.0, 0.0], TorusFunction::one());
    assert_eq!(torus_green::tail_coefficient(&bad_m, &tg).unwrap_err(), TorusError::MOutOfRange(4.0));
    let negative = TailCoefficientInput::new(3.0, [0.0, 0.0], TorusFunction::one().with_term([1, 0], 2.0, 0.0));
    assert!(matches!(torus_green::tail_coefficient(&negative, &tg), Err(TorusError::NonPositive { .. })));
    assert!(matches!(TorusGreen::new([2.0, 0.0], [0.0, 1.0]), Err(TorusError::AreaNotUnit(_))));
}
