mod common;

use liouville_core::radial::{self, RadialOptions};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Shifting every center value by s = 2 log λ rescales the solution:
    /// energies are unchanged and c_i moves by s(1 − l_i/2).
    #[test]
    fn scaling_covariance(seed in 0u64..10_000, s in -1.5f64..1.5) {
        let mut rng = common::rng(seed);
        let a = common::random_h1(&mut rng, 2);
        let u0 = common::random_center(&mut rng, 2);
        let shifted: Vec<f64> = u0.iter().map(|v| v + s).collect();
        let h = [1.0, 1.0];
        let p = radial::integrate_entire(&a, &h, &u0, RadialOptions::default()).unwrap();
        let q = radial::integrate_entire(&a, &h, &shifted, RadialOptions::default()).unwrap();
        let sp = radial::energy_total(&p).unwrap();
        let sq = radial::energy_total(&q).unwrap();
        for i in 0..2 {
            prop_assert!((sp.sigma[i] - sq.sigma[i]).abs() <= 1e-7, "σ {} vs {}", sp.sigma[i], sq.sigma[i]);
            let predicted = sp.c[i] + s * (1.0 - sp.l_direct[i] / 2.0);
            prop_assert!((sq.c[i] - predicted).abs() <= 1e-5, "c {} vs {}", sq.c[i], predicted);
        }
        // pointwise: u_shift(r) = u(λ r) + s with λ = e^{s/2}
        let lambda = (s / 2.0).exp();
        for r in [0.5, 2.0, 10.0] {
            let a_val = q.state_at(r).unwrap()[0];
            let b_val = p.state_at(lambda * r).unwrap()[0] + s;
            prop_assert!((a_val - b_val).abs() <= 1e-7);
        }
    }

    /// Relabelling components permutes energies and constants.
    #[test]
    fn permutation_equivariance(seed in 0u64..10_000) {
        let mut rng = common::rng(seed);
        let a = common::random_h1(&mut rng, 3);
        let u0 = common::random_center(&mut rng, 3);
        let perm = [2usize, 0, 1];
        let pa = a.permuted(&perm);
        let pu: Vec<f64> = perm.iter().map(|&i| u0[i]).collect();
        let s = radial::energy_total(&radial::integrate_entire(&a, &[1.0; 3], &u0, RadialOptions::default()).unwrap()).unwrap();
        let sp = radial::energy_total(&radial::integrate_entire(&pa, &[1.0; 3], &pu, RadialOptions::default()).unwrap()).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert!((sp.sigma[k] - s.sigma[i]).abs() <= 1e-9);
            prop_assert!((sp.c[k] - s.c[i]).abs() <= 1e-7);
        }
    }

    /// Shooting for the energies of a computed profile recovers its center
    /// values up to the common gauge shift.
    #[test]
    fn shooting_round_trip(seed in 0u64..10_000) {
        let mut rng = common::rng(seed);
        let a = common::random_h1(&mut rng, 2);
        let u0 = common::random_center(&mut rng, 2);
        let p = radial::integrate_entire(&a, &[1.0, 1.0], &u0, RadialOptions::default()).unwrap();
        let s = radial::energy_total(&p).unwrap();
        let shot = radial::shoot_for_energies(&a, &[1.0, 1.0], &s.sigma, 1e-8, RadialOptions::default()).unwrap();
        prop_assert_eq!(shot.center()[0], 0.0);
        prop_assert!((shot.center()[1] - (u0[1] - u0[0])).abs() <= 1e-5, "{:?} vs {:?}", shot.center(), u0);
    }

    /// Weights enter only through log h: h e^{u} is invariant under
    /// (h, u0) → (t h, u0 − log t).
    #[test]
    fn weight_gauge(seed in 0u64..10_000, t in 0.3f64..3.0) {
        let mut rng = common::rng(seed);
        let a = common::random_h1(&mut rng, 2);
        let u0 = common::random_center(&mut rng, 2);
        let shifted: Vec<f64> = u0.iter().map(|v| v - t.ln()).collect();
        let s1 = radial::energy_total(&radial::integrate_entire(&a, &[1.0, 1.0], &u0, RadialOptions::default()).unwrap()).unwrap();
        let s2 = radial::energy_total(&radial::integrate_entire(&a, &[t, t], &shifted, RadialOptions::default()).unwrap()).unwrap();
        for i in 0..2 {
            prop_assert!((s1.sigma[i] - s2.sigma[i]).abs() <= 1e-7);
        }
    }
}

#[test]
fn finite_radius_energies_increase_to_the_total() {
    let p = radial::integrate_entire(&liouville_core::CouplingMatrix::scalar(1.0), &[1.0], &[0.0], RadialOptions::default()).unwrap();
    let s = radial::energy_total(&p).unwrap();
    let mut last = 0.0;
    for w in &s.sigma_r {
        assert!(w.sigma[0] >= last);
        last = w.sigma[0];
        // closed form σ_R = 4R²/(8 + R²)
        assert!((w.sigma[0] - 4.0 * w.r * w.r / (8.0 + w.r * w.r)).abs() < 1e-8);
    }
    assert!(last <= s.sigma[0] + 1e-12);
}
