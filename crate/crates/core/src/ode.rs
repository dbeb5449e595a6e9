//! Explicit Runge–Kutta integrators.
//!
//! [`Dopri5`] is the Dormand–Prince 5(4) embedded pair with standard
//! step-size control; [`rk4_fixed`] is the classical fixed-step scheme used as
//! an independent cross-check.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("maximum number of steps ({0}) exceeded")]
    TooManySteps(usize),
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

/// Right-hand side `dy = f(t, y)`.
pub trait Rhs {
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

impl<F: Fn(f64, &[f64], &mut [f64])> Rhs for F {
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        self(t, y, dy)
    }
}

/// One accepted step as seen by an observer.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    pub t: f64,
    pub h: f64,
    /// Largest component of the embedded error estimate, scaled by `1 + |y_i|`.
    pub local_error: f64,
}

#[derive(Debug, Clone)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
    /// Number of leading state components entering the error norm; `None`
    /// controls all of them. Trailing components are then carried along on
    /// the step sequence chosen for the leading ones, which makes the result
    /// exactly linear in any trailing linear inhomogeneity.
    pub control_dim: Option<usize>,
}

impl Dopri5 {
    pub fn new(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            h_init: 1e-3,
            h_max: f64::INFINITY,
            h_min: 1e-14,
            max_steps: 2_000_000,
            control_dim: None,
        }
    }

    pub fn with_max_step(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }

    pub fn with_control_dim(mut self, dim: usize) -> Self {
        self.control_dim = Some(dim);
        self
    }

    /// Integrate from `t0` to `t1` (either direction), calling `observer`
    /// after every accepted step. Returns the final state.
    pub fn integrate<R, O>(
        &self,
        rhs: &R,
        t0: f64,
        y0: &[f64],
        t1: f64,
        mut observer: O,
    ) -> Result<Vec<f64>, OdeError>
    where
        R: Rhs + ?Sized,
        O: FnMut(StepInfo, &[f64]),
    {
        let dim = y0.len();
        let ctrl = self.control_dim.unwrap_or(dim).clamp(1, dim);
        let dir = if t1 >= t0 { 1.0 } else { -1.0 };
        let span = (t1 - t0).abs();
        let mut y = y0.to_vec();
        if span == 0.0 {
            return Ok(y);
        }
        let mut t = t0;
        let mut h = self.h_init.min(span).min(self.h_max);
        let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; dim]);
        let mut ytmp = vec![0.0; dim];
        let mut ynew = vec![0.0; dim];
        let mut err = vec![0.0; dim];
        rhs.eval(t, &y, &mut k[0]);
        if k[0].iter().any(|v| !v.is_finite()) {
            return Err(OdeError::NonFinite { t });
        }
        let mut steps = 0usize;
        let mut last_rejected = false;

        loop {
            let remaining = (t1 - t) * dir;
            if remaining <= span * 1e-15 {
                break;
            }
            if steps >= self.max_steps {
                return Err(OdeError::TooManySteps(self.max_steps));
            }
            steps += 1;
            if h >= remaining {
                h = remaining;
            }
            let hs = h * dir;

            for i in 0..dim {
                ytmp[i] = y[i] + hs * A21 * k[0][i];
            }
            rhs.eval(t + C2 * hs, &ytmp, &mut k[1]);
            for i in 0..dim {
                ytmp[i] = y[i] + hs * (A31 * k[0][i] + A32 * k[1][i]);
            }
            rhs.eval(t + C3 * hs, &ytmp, &mut k[2]);
            for i in 0..dim {
                ytmp[i] = y[i] + hs * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
            }
            rhs.eval(t + C4 * hs, &ytmp, &mut k[3]);
            for i in 0..dim {
                ytmp[i] = y[i]
                    + hs * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
            }
            rhs.eval(t + C5 * hs, &ytmp, &mut k[4]);
            for i in 0..dim {
                ytmp[i] = y[i]
                    + hs * (A61 * k[0][i]
                        + A62 * k[1][i]
                        + A63 * k[2][i]
                        + A64 * k[3][i]
                        + A65 * k[4][i]);
            }
            rhs.eval(t + hs, &ytmp, &mut k[5]);
            for i in 0..dim {
                ynew[i] = y[i]
                    + hs * (B1 * k[0][i]
                        + B3 * k[2][i]
                        + B4 * k[3][i]
                        + B5 * k[4][i]
                        + B6 * k[5][i]);
            }
            rhs.eval(t + hs, &ynew, &mut k[6]);

            let mut err_norm = 0.0;
            let mut local = 0.0f64;
            let mut finite = true;
            for i in 0..dim {
                err[i] = hs
                    * (E1 * k[0][i]
                        + E3 * k[2][i]
                        + E4 * k[3][i]
                        + E5 * k[4][i]
                        + E6 * k[5][i]
                        + E7 * k[6][i]);
                if !ynew[i].is_finite() || !k[6][i].is_finite() || !err[i].is_finite() {
                    finite = false;
                }
                if i < ctrl {
                    let sc = self.atol + self.rtol * y[i].abs().max(ynew[i].abs());
                    let r = err[i] / sc;
                    err_norm += r * r;
                    local = local.max(err[i].abs() / (1.0 + ynew[i].abs()));
                }
            }
            err_norm = (err_norm / ctrl as f64).sqrt();
            if !finite {
                err_norm = f64::INFINITY;
            }

            if err_norm <= 1.0 {
                t += hs;
                y.copy_from_slice(&ynew);
                k.swap(0, 6);
                observer(StepInfo { t, h, local_error: local }, &y);
                let fac = if err_norm == 0.0 {
                    5.0
                } else {
                    (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
                };
                let fac = if last_rejected { fac.min(1.0) } else { fac };
                h = (h * fac).min(self.h_max);
                last_rejected = false;
            } else {
                let fac = if err_norm.is_finite() {
                    (0.9 * err_norm.powf(-0.2)).clamp(0.1, 0.9)
                } else {
                    0.25
                };
                h *= fac;
                last_rejected = true;
                if h < self.h_min * (1.0 + t.abs()) {
                    if !finite {
                        return Err(OdeError::NonFinite { t });
                    }
                    return Err(OdeError::StepUnderflow { t, h });
                }
            }
        }
        Ok(y)
    }
}

/// Classical fourth-order Runge–Kutta with `steps` equal steps.
pub fn rk4_fixed<R, O>(rhs: &R, t0: f64, y0: &[f64], t1: f64, steps: usize, mut observer: O) -> Vec<f64>
where
    R: Rhs + ?Sized,
    O: FnMut(f64, &[f64]),
{
    let dim = y0.len();
    let h = (t1 - t0) / steps as f64;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];
    for s in 0..steps {
        let t = t0 + h * s as f64;
        rhs.eval(t, &y, &mut k1);
        for i in 0..dim {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        rhs.eval(t + 0.5 * h, &tmp, &mut k2);
        for i in 0..dim {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        rhs.eval(t + 0.5 * h, &tmp, &mut k3);
        for i in 0..dim {
            tmp[i] = y[i] + h * k3[i];
        }
        rhs.eval(t + h, &tmp, &mut k4);
        for i in 0..dim {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        observer(t0 + h * (s + 1) as f64, &y);
    }
    y
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;

const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0];
        let y = Dopri5::new(1e-12).integrate(&rhs, 0.0, &[1.0], 5.0, |_, _| {}).unwrap();
        assert!((y[0] - (-5.0f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn harmonic_oscillator_backwards() {
        let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
        };
        let y = Dopri5::new(1e-12)
            .integrate(&rhs, 3.0, &[3.0f64.sin(), 3.0f64.cos()], 0.0, |_, _| {})
            .unwrap();
        assert!(y[0].abs() < 1e-10);
        assert!((y[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn observer_sees_monotone_times_and_small_errors() {
        let rhs = |t: f64, _y: &[f64], dy: &mut [f64]| dy[0] = t.cos();
        let mut last = 0.0;
        let mut worst = 0.0f64;
        Dopri5::new(1e-10)
            .with_max_step(0.1)
            .integrate(&rhs, 0.0, &[0.0], 10.0, |s, _| {
                assert!(s.t > last);
                assert!(s.h <= 0.1 + 1e-15);
                last = s.t;
                worst = worst.max(s.local_error);
            })
            .unwrap();
        assert!((last - 10.0).abs() < 1e-12);
        assert!(worst < 1e-9);
    }

    #[test]
    fn blowup_reports_failure() {
        let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = y[0] * y[0];
        let res = Dopri5::new(1e-10).integrate(&rhs, 0.0, &[1.0], 2.0, |_, _| {});
        assert!(res.is_err());
    }

    #[test]
    fn rk4_matches_exact() {
        let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = y[0];
        let y = rk4_fixed(&rhs, 0.0, &[1.0], 1.0, 1000, |_, _| {});
        assert!((y[0] - 1f64.exp()).abs() < 1e-12);
    }
}
