mod common;

use liouville_core::linearized::{self, ModeSystem};
use liouville_core::radial::{self, RadialOptions, RadialProfile};
use liouville_core::CouplingMatrix;
use proptest::prelude::*;

fn random_profile(seed: u64) -> RadialProfile {
    let mut rng = common::rng(seed);
    let a = common::random_h1(&mut rng, 2);
    let u0 = common::random_center(&mut rng, 2);
    radial::integrate_entire(&a, &[1.0, 1.0], &u0, RadialOptions::default().with_r_max(1e3)).unwrap()
}

fn max_gap(a: &[Vec<f64>], b: &[Vec<f64>]) -> (f64, f64) {
    let mut gap = 0.0f64;
    let mut scale = 0.0f64;
    for (ra, rb) in a.iter().zip(b) {
        for (x, y) in ra.iter().zip(rb) {
            gap = gap.max((x - y).abs());
            scale = scale.max(y.abs());
        }
    }
    (gap, scale)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// The radial correction is linear in the forcing data and quadratic in ε.
    #[test]
    fn radial_correction_superposition(seed in 0u64..10_000, d1 in -2.0f64..2.0, d2 in -2.0f64..2.0) {
        let p = random_profile(seed);
        let f = |lh: [f64; 2], eps: f64| linearized::radial_correction(&p, &lh, eps).unwrap().solution.values;
        let sum = f([d1 + 0.3, d2 - 0.7], 0.01);
        let parts: Vec<Vec<f64>> = f([d1, d2], 0.01)
            .iter()
            .zip(f([0.3, -0.7], 0.01))
            .map(|(a, b)| a.iter().zip(&b).map(|(x, y)| x + y).collect())
            .collect();
        let (gap, scale) = max_gap(&sum, &parts);
        prop_assert!(gap <= 1e-8 * scale.max(1e-12), "{gap} vs {scale}");

        let doubled: Vec<Vec<f64>> = f([d1, d2], 0.02);
        let four: Vec<Vec<f64>> = f([d1, d2], 0.01).iter().map(|r| r.iter().map(|v| 4.0 * v).collect()).collect();
        let (gap, scale) = max_gap(&doubled, &four);
        prop_assert!(gap <= 1e-8 * scale.max(1e-12));
    }

    /// Bounded-kernel dimensions do not depend on the component labels.
    #[test]
    fn kernel_dimensions_permutation_equivariant(seed in 0u64..10_000) {
        let mut rng = common::rng(seed);
        let a = common::random_h1(&mut rng, 2);
        let u0 = common::random_center(&mut rng, 2);
        let opts = RadialOptions::default().with_r_max(1e3);
        let p = radial::integrate_entire(&a, &[1.0, 1.0], &u0, opts).unwrap();
        let q = radial::integrate_entire(&a.permuted(&[1, 0]), &[1.0, 1.0], &[u0[1], u0[0]], opts).unwrap();
        for ell in 0..3 {
            let dp = linearized::uniqueness_probe(&ModeSystem::new(&p, ell), p.r_max()).unwrap().bounded_dimension;
            let dq = linearized::uniqueness_probe(&ModeSystem::new(&q, ell), q.r_max()).unwrap().bounded_dimension;
            prop_assert_eq!(dp, dq);
        }
    }
}

/// For one component the forcing always excites the far-field `r` mode: no
/// bounded-growth correction exists and the obstruction is reported.
#[test]
fn scalar_mode1_correction_is_obstructed() {
    let p = radial::integrate_entire(&CouplingMatrix::scalar(1.0), &[1.0], &[0.0], RadialOptions::default()).unwrap();
    let c = linearized::mode1_correction(&p, &[[1.0, 0.0]]).unwrap();
    assert!(c.components[0].obstruction > 0.1, "{}", c.components[0].obstruction);
    assert_eq!(c.components[1].obstruction, 0.0);
    let doubled = linearized::mode1_correction(&p, &[[2.0, 0.0]]).unwrap();
    assert!((doubled.components[0].obstruction / c.components[0].obstruction - 2.0).abs() < 1e-8);
}

/// With two components the obstruction vanishes exactly when
/// Σ_k σ_k ∂H_k = 0, and the correction then obeys a stable bound.
#[test]
fn coupled_mode1_obstruction_vanishes_on_the_location_condition() {
    let a = CouplingMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
    let p = radial::integrate_entire(&a, &[1.0, 1.0], &[0.0, -1.0], RadialOptions::default()).unwrap();
    let s = radial::energy_total(&p).unwrap();
    let balanced = linearized::mode1_correction(&p, &[[s.sigma[1], 0.0], [-s.sigma[0], 0.0]]).unwrap();
    let generic = linearized::mode1_correction(&p, &[[1.0, 0.0], [1.0, 0.0]]).unwrap();
    let ob = balanced.components[0].obstruction;
    let og = generic.components[0].obstruction;
    assert!(og > 0.1, "{og}");
    assert!(ob < 1e-4 * og, "{ob} vs {og}");
    assert!(balanced.components[0].bound_constant.is_finite());
}
