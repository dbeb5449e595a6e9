//! Exponential integrals used by the Ewald sums.

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Entire part of the exponential integral,
/// `Ein(z) = Σ_{k≥1} (-1)^{k+1} z^k / (k·k!) = E1(z) + ln z + γ`.
pub fn ein(z: f64) -> f64 {
    if z <= 2.0 {
        let mut term = z;
        let mut sum = z;
        let mut k = 1.0;
        loop {
            term *= -z / (k + 1.0);
            let add = term / (k + 1.0);
            sum += add;
            k += 1.0;
            if add.abs() <= 1e-17 * sum.abs() || k > 200.0 {
                break;
            }
        }
        sum
    } else {
        e1(z) + z.ln() + EULER_GAMMA
    }
}

/// Exponential integral `E1(z) = ∫_z^∞ e^{-t}/t dt` for `z > 0`.
pub fn e1(z: f64) -> f64 {
    debug_assert!(z > 0.0);
    if z <= 1.0 {
        ein(z) - z.ln() - EULER_GAMMA
    } else {
        // Modified Lentz evaluation of the continued fraction.
        let tiny = 1e-300;
        let mut b = z + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-z).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        // Abramowitz & Stegun table 5.1.
        let cases = [
            (0.1, 1.822_923_958_419_390_7),
            (0.5, 0.559_773_594_776_160_8),
            (1.0, 0.219_383_934_395_520_3),
            (2.0, 0.048_900_510_708_061_12),
            (5.0, 0.001_148_295_591_275_326),
            (10.0, 4.156_968_929_685_324e-6),
        ];
        for (z, want) in cases {
            let got = e1(z);
            assert!(((got - want) / want).abs() < 1e-14, "E1({z}) = {got}, want {want}");
        }
    }

    #[test]
    fn ein_is_continuous_across_branch() {
        for z in [0.999, 1.0, 1.001, 1.999, 2.0, 2.001] {
            let a = ein(z);
            let b = e1(z) + z.ln() + EULER_GAMMA;
            assert!((a - b).abs() < 1e-14);
        }
        assert!((ein(1e-8) - (1e-8 - 2.5e-17)).abs() < 1e-24);
    }

    #[test]
    fn derivative_identity() {
        // d/dz E1(z) = -e^{-z}/z
        for z in [0.3, 1.5, 4.0] {
            let h = 1e-5;
            let fd = (e1(z + h) - e1(z - h)) / (2.0 * h);
            let exact = -(-z).exp() / z;
            assert!(((fd - exact) / exact).abs() < 1e-8);
        }
    }
}
