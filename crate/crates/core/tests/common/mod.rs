#![allow(dead_code, clippy::needless_range_loop)]

use liouville_core::algebra;
use liouville_core::CouplingMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random symmetric, nonnegative, irreducible, invertible `n × n` matrix
/// with diagonal in `[0.5, 2)` and off-diagonal entries in `[0.1, 1)`.
pub fn random_h1(rng: &mut ChaCha8Rng, n: usize) -> CouplingMatrix {
    loop {
        let mut rows = vec![vec![0.0; n]; n];
        for i in 0..n {
            rows[i][i] = rng.random_range(0.5..2.0);
            for j in 0..i {
                let v = rng.random_range(0.1..1.0);
                rows[i][j] = v;
                rows[j][i] = v;
            }
        }
        let a = CouplingMatrix::from_rows(&rows).unwrap();
        if algebra::check_h1(&a).holds() {
            return a;
        }
    }
}

pub fn random_center(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// The scalar bubble `u = −2 log(1 + r²/8)` (`a = h = 1`, `u(0) = 0`).
pub fn bubble(r: f64) -> f64 {
    -2.0 * (1.0 + r * r / 8.0).ln()
}

/// Quarter-decade eps list from `1e−2` to `1e−4`.
pub fn eps_list() -> Vec<f64> {
    (0..9).map(|k| 10f64.powf(-2.0 - 0.25 * k as f64)).collect()
}
