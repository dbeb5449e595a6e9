//! Entire radial solutions of `-Δu_i = Σ_j a_ij h_j e^{u_j}` and their
//! invariants.
//!
//! The ODE `u_i'' + u_i'/r + Σ_j a_ij h_j e^{u_j} = 0` is integrated in the
//! logarithmic variable `t = ln r` on the state `(u_i, r·u_i', σ_i(r), L_i(r))`
//! where
//!
//! ```text
//!     σ_i(r) = ∫_0^r h_i e^{u_i} s ds          (= (1/2π)∫_{B_r} h_i e^{u_i})
//!     L_i(r) = ∫_0^r log s · h_i e^{u_i} s ds
//! ```
//!
//! so that energies and the log-moment entering the asymptotic constants are
//! carried by the same adaptive integrator. The weights `h_i` are folded into
//! the energies: `σ_i = (1/2π)∫ h_i e^{u_i}`, `l_i = Σ_j a_ij σ_j`, and the
//! far field is `h_i e^{u_i} ≈ h_i e^{c_i} r^{-l_i}`.

use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

use crate::algebra::{AlgebraError, CouplingMatrix};
use crate::fit::{least_squares, order_fit, FitError, OrderFit};
use crate::ode::{Dopri5, OdeError, Rhs};
use crate::table::CsvTable;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadialError {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("step-size underflow at r = {radius:e}")]
    StepUnderflow { radius: f64 },
    #[error("overflow of e^u at r = {radius:e}")]
    Overflow { radius: f64 },
    #[error("radius {r} outside the computed grid [0, {r_max}]")]
    BeyondGrid { r: f64, r_max: f64 },
    #[error("component {component}: decay exponent {l} too close to 2; R_max too small or data not integrable")]
    NotIntegrable { component: usize, l: f64 },
    #[error("energy self-consistency did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("component {component}: c from the integral formula ({integral}) and the far-field fit ({asymptotic}) disagree")]
    CRouteDisagreement { component: usize, integral: f64, asymptotic: f64 },
    #[error("fit window [{lo}, {hi}] holds only {points} grid points")]
    WindowTooSmall { lo: f64, hi: f64, points: usize },
    #[error("target energies are off the Pohozaev quadric (residual {0:e})")]
    OffQuadric(f64),
    #[error("target energies violate Σ_j a_ij σ_j > 2 in component {0}")]
    TargetNotIntegrable(usize),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("damped Newton failed after {iterations} iterations (energy mismatch {mismatch:e})")]
    NewtonDiverged { iterations: usize, mismatch: f64 },
}

impl RadialError {
    fn from_ode(e: OdeError) -> Self {
        match e {
            OdeError::StepUnderflow { t, .. } => RadialError::StepUnderflow { radius: t.exp() },
            OdeError::NonFinite { t } => RadialError::Overflow { radius: t.exp() },
            OdeError::TooManySteps(_) => RadialError::StepUnderflow { radius: f64::NAN },
        }
    }
}

/// Margin required above 2 for every decay exponent.
pub const DECAY_MARGIN: f64 = 0.05;
/// Agreement required between the two routes to `c_i`.
pub const C_ROUTE_TOL: f64 = 1e-3;
/// Fit-window RMS residual above which [`DecayFit::window_suspect`] is set.
pub const FIT_RMS_FLAG: f64 = 1e-3;
/// Tie tolerance for the minimal decay exponent.
pub const MIN_MASS_TIE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadialOptions {
    pub r_max: f64,
    pub tol: f64,
    /// First radius after the origin; the series launch covers `[0, r_start]`.
    pub r_start: f64,
    /// Largest step in `ln r`.
    pub max_log_step: f64,
}

impl Default for RadialOptions {
    fn default() -> Self {
        Self { r_max: 1e4, tol: 1e-10, r_start: 1e-6, max_log_step: 0.05 }
    }
}

impl RadialOptions {
    pub fn with_r_max(mut self, r_max: f64) -> Self {
        self.r_max = r_max;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    fn validate(&self) -> Result<(), RadialError> {
        if !(self.tol > 0.0) {
            return Err(RadialError::InvalidInput("tol must be positive".into()));
        }
        if !(self.r_start > 0.0 && self.r_max > self.r_start) {
            return Err(RadialError::InvalidInput("need 0 < r_start < R_max".into()));
        }
        if !(self.max_log_step > 0.0) {
            return Err(RadialError::InvalidInput("max_log_step must be positive".into()));
        }
        Ok(())
    }
}

/// Right-hand side of the radial system in `t = ln r`.
///
/// Layout: `[u(n), w(n), σ(n), L(n)]` with `w = r·u'`.
pub(crate) struct RadialRhs {
    n: usize,
    a: Vec<f64>,
    h: Vec<f64>,
}

impl RadialRhs {
    pub(crate) fn new(a: &CouplingMatrix, h: &[f64]) -> Self {
        let n = a.n();
        let mut flat = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                flat.push(a.get(i, j));
            }
        }
        Self { n, a: flat, h: h.to_vec() }
    }

    /// `r² h_j e^{u_j}` for every component.
    #[inline]
    pub(crate) fn weighted_density(&self, t: f64, u: &[f64], out: &mut [f64]) {
        for j in 0..self.n {
            out[j] = self.h[j] * (u[j] + 2.0 * t).exp();
        }
    }
}

impl Rhs for RadialRhs {
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.n;
        let mut dens = [0.0f64; 16];
        let mut heap;
        let dens: &mut [f64] = if n <= 16 {
            &mut dens[..n]
        } else {
            heap = vec![0.0; n];
            &mut heap
        };
        self.weighted_density(t, &y[..n], dens);
        for i in 0..n {
            dy[i] = y[n + i];
            let mut s = 0.0;
            for j in 0..n {
                s += self.a[i * n + j] * dens[j];
            }
            dy[n + i] = -s;
            dy[2 * n + i] = dens[i];
            dy[3 * n + i] = t * dens[i];
        }
    }
}

/// Sampled entire radial solution.
#[derive(Debug, Clone)]
pub struct RadialProfile {
    a: CouplingMatrix,
    weights: Vec<f64>,
    center: Vec<f64>,
    options: RadialOptions,
    /// Radii, `grid[0] = 0`.
    grid: Vec<f64>,
    /// Full integrator state at each node (empty for the origin node).
    states: Vec<Vec<f64>>,
    local_errors: Vec<f64>,
}

/// Series launch at radius `r`:
/// `u_i = u_i(0) + α_i r² + β_i r⁴` with `α_i = -F_i/4`,
/// `F_i = Σ_j a_ij h_j e^{u_j(0)}`, `β_i = -Σ_j a_ij h_j e^{u_j(0)} α_j / 16`.
pub(crate) fn series_state(a: &CouplingMatrix, h: &[f64], u0: &[f64], r: f64) -> Vec<f64> {
    let n = a.n();
    let e: Vec<f64> = (0..n).map(|j| h[j] * u0[j].exp()).collect();
    let alpha: Vec<f64> = (0..n)
        .map(|i| -(0..n).map(|j| a.get(i, j) * e[j]).sum::<f64>() / 4.0)
        .collect();
    let beta: Vec<f64> = (0..n)
        .map(|i| -(0..n).map(|j| a.get(i, j) * e[j] * alpha[j]).sum::<f64>() / 16.0)
        .collect();
    let r2 = r * r;
    let r4 = r2 * r2;
    let lr = r.ln();
    let mut y = vec![0.0; 4 * n];
    for i in 0..n {
        y[i] = u0[i] + alpha[i] * r2 + beta[i] * r4;
        y[n + i] = 2.0 * alpha[i] * r2 + 4.0 * beta[i] * r4;
        y[2 * n + i] = e[i] * (r2 / 2.0 + alpha[i] * r4 / 4.0);
        y[3 * n + i] = e[i] * (r2 / 2.0 * (lr - 0.5) + alpha[i] * r4 / 4.0 * (lr - 0.25));
    }
    y
}

/// Integrate the entire radial solution with center values `u0` out to
/// `options.r_max`.
pub fn integrate_entire(
    a: &CouplingMatrix,
    h0: &[f64],
    u0: &[f64],
    options: RadialOptions,
) -> Result<RadialProfile, RadialError> {
    options.validate()?;
    let n = a.n();
    if h0.len() != n || u0.len() != n {
        return Err(RadialError::InvalidInput(format!(
            "expected {n} weights and center values, got {} and {}",
            h0.len(),
            u0.len()
        )));
    }
    if let Some(i) = h0.iter().position(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(RadialError::InvalidInput(format!("weight h_{} must be positive", i + 1)));
    }
    if u0.iter().any(|u| !u.is_finite()) {
        return Err(RadialError::InvalidInput("center values must be finite".into()));
    }
    for j in 0..n {
        if !(h0[j] * u0[j].exp()).is_finite() || u0[j] + h0[j].ln() > 700.0 {
            return Err(RadialError::Overflow { radius: 0.0 });
        }
    }
    let rhs = RadialRhs::new(a, h0);
    let t0 = options.r_start.ln();
    let t1 = options.r_max.ln();
    let y0 = series_state(a, h0, u0, options.r_start);
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(RadialError::Overflow { radius: options.r_start });
    }

    let mut grid = vec![0.0, options.r_start];
    let mut states = vec![Vec::new(), y0.clone()];
    let mut local_errors = vec![0.0, 0.0];
    let solver = Dopri5::new(options.tol).with_max_step(options.max_log_step);
    solver
        .integrate(&rhs, t0, &y0, t1, |step, y| {
            grid.push(step.t.exp());
            states.push(y.to_vec());
            local_errors.push(step.local_error);
        })
        .map_err(RadialError::from_ode)?;
    // pin the last radius exactly
    if let Some(last) = grid.last_mut() {
        *last = options.r_max;
    }

    Ok(RadialProfile {
        a: a.clone(),
        weights: h0.to_vec(),
        center: u0.to_vec(),
        options,
        grid,
        states,
        local_errors,
    })
}

impl RadialProfile {
    pub fn n(&self) -> usize {
        self.a.n()
    }

    pub fn coupling(&self) -> &CouplingMatrix {
        &self.a
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn options(&self) -> RadialOptions {
        self.options
    }

    pub fn r_max(&self) -> f64 {
        self.options.r_max
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// `u_i(r_k)`.
    pub fn value(&self, i: usize, k: usize) -> f64 {
        if k == 0 {
            self.center[i]
        } else {
            self.states[k][i]
        }
    }

    /// `u_i'(r_k)`; exactly zero at the origin.
    pub fn deriv(&self, i: usize, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.states[k][self.n() + i] / self.grid[k]
        }
    }

    /// `r·u_i'(r_k)`.
    pub fn r_deriv(&self, i: usize, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.states[k][self.n() + i]
        }
    }

    pub fn values(&self, i: usize) -> Vec<f64> {
        (0..self.len()).map(|k| self.value(i, k)).collect()
    }

    pub fn derivs(&self, i: usize) -> Vec<f64> {
        (0..self.len()).map(|k| self.deriv(i, k)).collect()
    }

    /// Energy `σ_i(r_k)` at a node.
    pub fn node_energy(&self, i: usize, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.states[k][2 * self.n() + i]
        }
    }

    fn node_log_moment(&self, i: usize, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.states[k][3 * self.n() + i]
        }
    }

    /// Largest per-step local error estimate recorded by the integrator.
    pub fn max_local_error(&self) -> f64 {
        self.local_errors.iter().copied().fold(0.0, f64::max)
    }

    /// Integrator state `[u, r·u', σ(r), L(r)]` at an arbitrary radius.
    pub fn state_at(&self, r: f64) -> Result<Vec<f64>, RadialError> {
        if !(r >= 0.0) || r > self.r_max() * (1.0 + 1e-14) {
            return Err(RadialError::BeyondGrid { r, r_max: self.r_max() });
        }
        let r = r.min(self.r_max());
        if r <= self.options.r_start {
            return Ok(series_state(&self.a, &self.weights, &self.center, r.max(1e-300)));
        }
        let k = match self.grid.binary_search_by(|g| g.partial_cmp(&r).unwrap()) {
            Ok(k) => return Ok(self.states[k].clone()),
            Err(k) => k - 1,
        };
        let rhs = RadialRhs::new(&self.a, &self.weights);
        let solver = Dopri5::new(self.options.tol * 1e-1).with_max_step(self.options.max_log_step);
        solver
            .integrate(&rhs, self.grid[k].ln(), &self.states[k], r.ln(), |_, _| {})
            .map_err(RadialError::from_ode)
    }

    /// Nodes (indices) whose radius lies in `[lo, hi]`.
    pub fn window(&self, lo: f64, hi: f64) -> Vec<usize> {
        (1..self.len()).filter(|&k| self.grid[k] >= lo && self.grid[k] <= hi).collect()
    }

    /// Profile as CSV with columns `r, u_1..u_n, u'_1..u'_n`.
    pub fn to_csv(&self) -> String {
        let n = self.n();
        let mut header = vec!["r".to_string()];
        header.extend((1..=n).map(|i| format!("u_{i}")));
        header.extend((1..=n).map(|i| format!("du_{i}")));
        let mut t = CsvTable::new(&header);
        let mut row = Vec::with_capacity(2 * n + 1);
        for k in 0..self.len() {
            row.clear();
            row.push(self.grid[k]);
            row.extend((0..n).map(|i| self.value(i, k)));
            row.extend((0..n).map(|i| self.deriv(i, k)));
            t.row(&row);
        }
        t.finish()
    }

    /// Checks `u'(0) = 0`, strict decrease for `r > 0`, and local errors.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n = self.n();
        for k in 1..self.len() {
            for i in 0..n {
                if !(self.r_deriv(i, k) < 0.0) {
                    return Err(format!("u_{}' >= 0 at r = {}", i + 1, self.grid[k]));
                }
            }
        }
        if self.max_local_error() > 10.0 * self.options.tol {
            return Err(format!("local error {:e} above 10·tol", self.max_local_error()));
        }
        Ok(())
    }
}

/// `σ_iR = ∫_0^R h_i e^{u_i} r dr` for every component.
pub fn energy_partial(p: &RadialProfile, r: f64) -> Result<Vec<f64>, RadialError> {
    if !(r > 0.0) {
        return Err(RadialError::BeyondGrid { r, r_max: p.r_max() });
    }
    let y = p.state_at(r)?;
    let n = p.n();
    Ok(y[2 * n..3 * n].to_vec())
}

/// Far-field model `h_i e^{u_i(s)} ≈ h_i e^{c_i} s^{-l_i} (1 − Σ_j a_ij κ_j s^{2−l_j})`,
/// `κ_j = h_j e^{c_j} / (l_j − 2)²`, integrated analytically beyond `R`.
struct Tail<'a> {
    a: &'a CouplingMatrix,
    h: &'a [f64],
    l: &'a [f64],
    c: &'a [f64],
}

impl Tail<'_> {
    fn kappa(&self, j: usize) -> f64 {
        self.h[j] * self.c[j].exp() / (self.l[j] - 2.0).powi(2)
    }

    /// `∫_R^∞ s^{1-p} ds`
    fn pow_int(r: f64, p: f64) -> f64 {
        r.powf(2.0 - p) / (p - 2.0)
    }

    /// `∫_R^∞ s^{1-p} log s ds`
    fn log_int(r: f64, p: f64) -> f64 {
        r.powf(2.0 - p) * (r.ln() / (p - 2.0) + 1.0 / (p - 2.0).powi(2))
    }

    /// `∫_R^∞ (log s − log R) s^{1-p} ds`
    fn rel_log_int(r: f64, p: f64) -> f64 {
        r.powf(2.0 - p) / (p - 2.0).powi(2)
    }

    fn amplitude(&self, i: usize) -> f64 {
        self.h[i] * self.c[i].exp()
    }

    fn with_correction(&self, i: usize, r: f64, f: fn(f64, f64) -> f64) -> f64 {
        let n = self.a.n();
        let mut v = f(r, self.l[i]);
        for j in 0..n {
            let p = self.l[i] + self.l[j] - 2.0;
            v -= self.a.get(i, j) * self.kappa(j) * f(r, p);
        }
        self.amplitude(i) * v
    }

    fn energy(&self, i: usize, r: f64) -> f64 {
        self.with_correction(i, r, Self::pow_int)
    }

    fn log_moment(&self, i: usize, r: f64) -> f64 {
        self.with_correction(i, r, Self::log_int)
    }

    /// `∫_R^∞ (log s − log R) h_i e^{u_i} s ds`
    fn rel_log_moment(&self, i: usize, r: f64) -> f64 {
        self.with_correction(i, r, Self::rel_log_int)
    }
}

/// Self-consistent totals from the profile.
#[derive(Debug, Clone)]
struct Totals {
    sigma: Vec<f64>,
    l: Vec<f64>,
    c: Vec<f64>,
    iterations: usize,
}

fn self_consistent(p: &RadialProfile) -> Result<Totals, RadialError> {
    let n = p.n();
    let a = p.coupling();
    let last = p.len() - 1;
    let r = p.r_max();
    let s_r: Vec<f64> = (0..n).map(|i| p.node_energy(i, last)).collect();
    let l_r: Vec<f64> = (0..n).map(|i| p.node_log_moment(i, last)).collect();

    let mut sigma = s_r.clone();
    let mut l = a.apply(&sigma);
    let mut c: Vec<f64> = (0..n)
        .map(|i| p.center[i] + (0..n).map(|j| a.get(i, j) * l_r[j]).sum::<f64>())
        .collect();
    for iter in 1..=200 {
        for (i, li) in l.iter().enumerate() {
            if !(*li > 2.0 + DECAY_MARGIN) {
                return Err(RadialError::NotIntegrable { component: i, l: *li });
            }
        }
        let tail = Tail { a, h: p.weights(), l: &l, c: &c };
        let new_sigma: Vec<f64> = (0..n).map(|i| s_r[i] + tail.energy(i, r)).collect();
        let lt: Vec<f64> = (0..n).map(|j| l_r[j] + tail.log_moment(j, r)).collect();
        let new_c: Vec<f64> = (0..n)
            .map(|i| p.center[i] + (0..n).map(|j| a.get(i, j) * lt[j]).sum::<f64>())
            .collect();
        let new_l = a.apply(&new_sigma);
        let change = (0..n)
            .map(|i| {
                (new_sigma[i] - sigma[i])
                    .abs()
                    .max((new_c[i] - c[i]).abs())
                    .max((new_l[i] - l[i]).abs())
            })
            .fold(0.0, f64::max);
        sigma = new_sigma;
        c = new_c;
        l = new_l;
        if !change.is_finite() {
            return Err(RadialError::NoConvergence(iter));
        }
        if change < 1e-13 {
            return Ok(Totals { sigma, l, c, iterations: iter });
        }
    }
    Err(RadialError::NoConvergence(200))
}

/// Least-squares decay exponents over the window `[√R_max, R_max]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    /// Slope of `u_i` against `−log r`.
    pub l: Vec<f64>,
    /// `Σ_j a_ij σ_j` from the tail-corrected energies.
    pub l_direct: Vec<f64>,
    pub rms: Vec<f64>,
    pub window: (f64, f64),
    pub points: usize,
    /// Set when some fit residual exceeds [`FIT_RMS_FLAG`].
    pub window_suspect: bool,
}

fn fit_window(p: &RadialProfile) -> Result<(f64, f64, Vec<usize>), RadialError> {
    let hi = p.r_max();
    let lo = hi.sqrt();
    let idx = p.window(lo, hi);
    if idx.len() < 8 {
        return Err(RadialError::WindowTooSmall { lo, hi, points: idx.len() });
    }
    Ok((lo, hi, idx))
}

/// Slopes, per-component rms, fit window and number of points.
type SlopeFit = (Vec<f64>, Vec<f64>, (f64, f64), usize);

fn fit_slopes(p: &RadialProfile) -> Result<SlopeFit, RadialError> {
    let (lo, hi, idx) = fit_window(p)?;
    let xs: Vec<f64> = idx.iter().map(|&k| -p.grid[k].ln()).collect();
    let mut l = Vec::new();
    let mut rms = Vec::new();
    for i in 0..p.n() {
        let ys: Vec<f64> = idx.iter().map(|&k| p.value(i, k)).collect();
        let line = least_squares(&xs, &ys)
            .map_err(|_| RadialError::WindowTooSmall { lo, hi, points: idx.len() })?;
        l.push(line.slope);
        rms.push(line.rms);
    }
    Ok((l, rms, (lo, hi), idx.len()))
}

pub fn decay_fit(p: &RadialProfile) -> Result<DecayFit, RadialError> {
    let totals = self_consistent(p)?;
    let (l, rms, window, points) = fit_slopes(p)?;
    let window_suspect = rms.iter().any(|r| *r > FIT_RMS_FLAG);
    Ok(DecayFit { l, l_direct: totals.l, rms, window, points, window_suspect })
}

/// Both routes to the asymptotic constants `c_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CConstants {
    /// `u_i(0) + Σ_j a_ij ∫_0^∞ log r · h_j e^{u_j} r dr` with the tail beyond
    /// `R_max` integrated from the far-field model.
    pub integral: Vec<f64>,
    /// Window average of `u_i(r) + l_i log r` corrected by the far-field tail.
    pub asymptotic: Vec<f64>,
    pub max_difference: f64,
}

fn asymptotic_c(p: &RadialProfile, totals: &Totals) -> Result<Vec<f64>, RadialError> {
    let (_, _, idx) = fit_window(p)?;
    let n = p.n();
    let a = p.coupling();
    let tail = Tail { a, h: p.weights(), l: &totals.l, c: &totals.c };
    Ok((0..n)
        .map(|i| {
            let sum: f64 = idx
                .iter()
                .map(|&k| {
                    let r = p.grid[k];
                    let corr: f64 = (0..n).map(|j| a.get(i, j) * tail.rel_log_moment(j, r)).sum();
                    p.value(i, k) + totals.l[i] * r.ln() + corr
                })
                .sum();
            sum / idx.len() as f64
        })
        .collect())
}

pub fn c_constants(p: &RadialProfile) -> Result<CConstants, RadialError> {
    let totals = self_consistent(p)?;
    let asymptotic = asymptotic_c(p, &totals)?;
    let mut max_difference = 0.0f64;
    for i in 0..p.n() {
        let d = (totals.c[i] - asymptotic[i]).abs();
        if d > C_ROUTE_TOL {
            return Err(RadialError::CRouteDisagreement {
                component: i,
                integral: totals.c[i],
                asymptotic: asymptotic[i],
            });
        }
        max_difference = max_difference.max(d);
    }
    Ok(CConstants { integral: totals.c, asymptotic, max_difference })
}

/// Energies, masses and asymptotic constants of one profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergySummary {
    pub sigma: Vec<f64>,
    /// `(R, σ_iR)` at every decade up to `R_max`.
    pub sigma_r: Vec<SigmaAt>,
    /// Fitted decay exponents.
    pub l: Vec<f64>,
    /// `Σ_j a_ij σ_j`.
    pub l_direct: Vec<f64>,
    /// Minimum of `l_direct`.
    pub m_min: f64,
    /// Zero-based indices within [`MIN_MASS_TIE`] of the minimum.
    pub min_indices: Vec<usize>,
    /// Integral-route constants.
    pub c: Vec<f64>,
    /// Far-field-route constants.
    pub c_asymptotic: Vec<f64>,
    pub r_max: f64,
    pub pohozaev_residual: f64,
    pub iterations: usize,
    pub fit_rms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaAt {
    pub r: f64,
    pub sigma: Vec<f64>,
}

pub fn energy_total(p: &RadialProfile) -> Result<EnergySummary, RadialError> {
    let totals = self_consistent(p)?;
    let (l_fit, rms, _, _) = fit_slopes(p)?;
    let c_asymptotic = asymptotic_c(p, &totals)?;
    let mut sigma_r = Vec::new();
    let mut r = 1.0;
    while r < p.r_max() {
        sigma_r.push(SigmaAt { r, sigma: energy_partial(p, r)? });
        r *= 10.0;
    }
    sigma_r.push(SigmaAt { r: p.r_max(), sigma: energy_partial(p, p.r_max())? });
    let m_min = totals.l.iter().copied().fold(f64::INFINITY, f64::min);
    let min_indices = (0..p.n()).filter(|&i| totals.l[i] - m_min <= MIN_MASS_TIE).collect();
    Ok(EnergySummary {
        pohozaev_residual: pohozaev_residual(&totals.sigma, p.coupling()),
        sigma: totals.sigma,
        sigma_r,
        l: l_fit,
        l_direct: totals.l,
        m_min,
        min_indices,
        c: totals.c,
        c_asymptotic,
        r_max: p.r_max(),
        iterations: totals.iterations,
        fit_rms: rms,
    })
}

/// `4 Σ_i σ_i − Σ_ij a_ij σ_i σ_j`.
pub fn pohozaev_residual(sigma: &[f64], a: &CouplingMatrix) -> f64 {
    4.0 * sigma.iter().sum::<f64>() - a.quadratic(sigma)
}

/// `4 Σ σ_iR − Σ a_ij σ_iR σ_jR − 2 Σ h_i e^{c_i} R^{2−l_i}`; decays like
/// `R^{2−l−δ}` for an entire solution.
pub fn finite_r_pohozaev_check(
    p: &RadialProfile,
    summary: &EnergySummary,
    r: f64,
) -> Result<f64, RadialError> {
    let s = energy_partial(p, r)?;
    let boundary: f64 = (0..p.n())
        .map(|i| p.weights()[i] * summary.c[i].exp() * r.powf(2.0 - summary.l_direct[i]))
        .sum();
    Ok(pohozaev_residual(&s, p.coupling()) - 2.0 * boundary)
}

/// Damped-Newton shooting on the center values for prescribed energies.
///
/// The gauge is fixed by `u_1(0) = 0`; the unknowns `u_2(0), …, u_n(0)` are
/// adjusted until the energy direction `σ/Σσ` matches the target's. On the
/// Pohozaev quadric the direction determines the point.
pub fn shoot_for_energies(
    a: &CouplingMatrix,
    h0: &[f64],
    target: &[f64],
    tol: f64,
    options: RadialOptions,
) -> Result<RadialProfile, RadialError> {
    let n = a.n();
    if target.len() != n {
        return Err(RadialError::InvalidInput(format!("expected {n} target energies")));
    }
    if !(tol > 0.0) {
        return Err(RadialError::InvalidInput("tol must be positive".into()));
    }
    let quad = pohozaev_residual(target, a);
    if quad.abs() > 10.0 * tol {
        return Err(RadialError::OffQuadric(quad));
    }
    let lt = a.apply(target);
    if let Some(i) = lt.iter().position(|v| !(*v > 2.0)) {
        return Err(RadialError::TargetNotIntegrable(i));
    }
    let total: f64 = target.iter().sum();
    let want: Vec<f64> = target.iter().map(|v| v / total).collect();

    let evaluate = |x: &[f64]| -> Result<(RadialProfile, Vec<f64>), RadialError> {
        let mut u0 = vec![0.0; n];
        u0[1..].copy_from_slice(x);
        let p = integrate_entire(a, h0, &u0, options)?;
        let sigma = self_consistent(&p)?.sigma;
        Ok((p, sigma))
    };
    let mismatch = |s: &[f64]| s.iter().zip(target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let direction_residual = |s: &[f64]| -> Vec<f64> {
        let t: f64 = s.iter().sum();
        (1..n).map(|i| s[i] / t - want[i]).collect()
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();

    let mut x = vec![0.0; n - 1];
    let (mut profile, mut sigma) = evaluate(&x)?;
    if n == 1 {
        let mm = mismatch(&sigma);
        return if mm < tol { Ok(profile) } else { Err(RadialError::OffQuadric(mm)) };
    }
    let mut res = direction_residual(&sigma);
    const MAX_ITER: usize = 50;
    for _iter in 0..MAX_ITER {
        if mismatch(&sigma) < tol {
            return Ok(profile);
        }
        // Jacobian of the direction map by central differences.
        let m = n - 1;
        let step = 1e-5;
        let mut jac = nalgebra::DMatrix::zeros(m, m);
        for k in 0..m {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += step;
            xm[k] -= step;
            let rp = direction_residual(&evaluate(&xp)?.1);
            let rm = direction_residual(&evaluate(&xm)?.1);
            for i in 0..m {
                jac[(i, k)] = (rp[i] - rm[i]) / (2.0 * step);
            }
        }
        let rhs = nalgebra::DVector::from_iterator(m, res.iter().map(|v| -v));
        let dx = match jac.clone().lu().solve(&rhs) {
            Some(d) => d,
            None => jac.svd(true, true).solve(&rhs, 1e-14).map_err(|_| RadialError::NewtonDiverged {
                iterations: _iter,
                mismatch: mismatch(&sigma),
            })?,
        };
        let base = norm(&res);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, b)| a + lambda * b).collect();
            if let Ok((p, s)) = evaluate(&trial) {
                let r = direction_residual(&s);
                if norm(&r) < base {
                    x = trial;
                    profile = p;
                    sigma = s;
                    res = r;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if mismatch(&sigma) < tol {
        Ok(profile)
    } else {
        Err(RadialError::NewtonDiverged { iterations: MAX_ITER, mismatch: mismatch(&sigma) })
    }
}

/// Relative floor (times `Σσ`) below which finite-R residuals are noise.
pub const POHOZAEV_FLOOR: f64 = 1e-9;

/// Decay of the finite-R Pohozaev residual.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PohozaevDecay {
    /// `(R, residual)` with `R` increasing by quarter decades from 10.
    pub series: Vec<(f64, f64)>,
    /// Power of `R` in `residual ≈ C R^exponent`.
    pub exponent: f64,
    pub fit: OrderFit,
    /// `−(m − 2)`, the slowest decay an entire solution allows.
    pub bound: f64,
}

/// Sample [`finite_r_pohozaev_check`] from `R = 10` up to `R_max/10`,
/// stopping once the residual falls to the noise floor, and fit its power.
pub fn pohozaev_decay(p: &RadialProfile, summary: &EnergySummary) -> Result<PohozaevDecay, RadialError> {
    let floor = POHOZAEV_FLOOR * summary.sigma.iter().sum::<f64>().max(1.0);
    let mut series = Vec::new();
    let mut k = 0;
    loop {
        let r = 10f64.powf(1.0 + 0.25 * k as f64);
        if r > p.r_max() / 10.0 * (1.0 + 1e-12) {
            break;
        }
        let v = finite_r_pohozaev_check(p, summary, r)?;
        if v.abs() < floor {
            break;
        }
        series.push((r, v));
        k += 1;
    }
    // order_fit expects a decreasing abscissa
    let reversed: Vec<(f64, f64)> = series.iter().rev().copied().collect();
    let fit = order_fit(&reversed, false)?;
    Ok(PohozaevDecay { series, exponent: fit.exponent, fit, bound: -(summary.m_min - 2.0) })
}

/// `2π σ_i`, the total mass `∫_{ℝ²} h_i e^{u_i}`.
pub fn total_mass(sigma: &[f64]) -> Vec<f64> {
    sigma.iter().map(|s| 2.0 * PI * s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bubble(r: f64) -> f64 {
        -2.0 * (1.0 + r * r / 8.0).ln()
    }

    fn scalar_profile(opts: RadialOptions) -> RadialProfile {
        integrate_entire(&CouplingMatrix::scalar(1.0), &[1.0], &[0.0], opts).unwrap()
    }

    #[test]
    fn closed_form_bubble_pointwise() {
        let p = scalar_profile(RadialOptions::default());
        for k in 0..p.len() {
            let r = p.grid()[k];
            if r > 100.0 {
                break;
            }
            assert!((p.value(0, k) - bubble(r)).abs() < 1e-8, "r = {r}");
            let du = -4.0 * r / (8.0 + r * r);
            assert!((p.deriv(0, k) - du).abs() < 1e-8);
        }
        p.check_invariants().unwrap();
        assert_eq!(p.deriv(0, 0), 0.0);
    }

    #[test]
    fn partial_energy_closed_form() {
        let p = scalar_profile(RadialOptions::default());
        for r in [0.5, 1.0, 3.7, 10.0, 250.0, 1e4] {
            let s = energy_partial(&p, r).unwrap()[0];
            assert!((s - (4.0 - 32.0 / (8.0 + r * r))).abs() < 1e-8, "R = {r}");
        }
        let tiny = energy_partial(&p, 1e-8).unwrap()[0];
        assert!(tiny.abs() < 1e-15);
        assert!(energy_partial(&p, 2e4).is_err());
        assert!(energy_partial(&p, 0.0).is_err());
    }

    #[test]
    fn energy_total_closed_form() {
        let p = scalar_profile(RadialOptions::default());
        let s = energy_total(&p).unwrap();
        assert!((s.sigma[0] - 4.0).abs() < 1e-6);
        assert!((s.l[0] - 4.0).abs() < 1e-3);
        assert!((s.c[0] - 64f64.ln()).abs() < 1e-4);
        assert!(s.pohozaev_residual.abs() < 1e-4);
        assert_eq!(s.min_indices, vec![0]);
        let c = c_constants(&p).unwrap();
        assert!((c.integral[0] - 2.0 * 8f64.ln()).abs() < 1e-4);
        assert!((c.asymptotic[0] - 2.0 * 8f64.ln()).abs() < 1e-4);
    }

    #[test]
    fn symmetric_pair_reduces_to_scalar() {
        let a = CouplingMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let p = integrate_entire(&a, &[1.0, 1.0], &[0.0, 0.0], RadialOptions::default()).unwrap();
        let q = integrate_entire(&CouplingMatrix::scalar(1.5), &[1.0], &[0.0], RadialOptions::default())
            .unwrap();
        for k in 0..p.len() {
            assert_eq!(p.value(0, k), p.value(1, k));
        }
        for r in [0.3, 2.0, 40.0, 900.0] {
            let a0 = p.state_at(r).unwrap()[0];
            let b0 = q.state_at(r).unwrap()[0];
            assert!((a0 - b0).abs() < 1e-9);
            let s = energy_partial(&p, r).unwrap();
            assert_eq!(s[0], s[1]);
        }
        let s = energy_total(&p).unwrap();
        assert!((s.sigma[0] - 8.0 / 3.0).abs() < 1e-5);
        assert_eq!(s.sigma[0], s.sigma[1]);
        assert_eq!(s.c[0], s.c[1]);
        assert_eq!(s.l[0], s.l[1]);
    }

    #[test]
    fn pohozaev_residual_examples() {
        let a = CouplingMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        assert_eq!(pohozaev_residual(&[4.0], &CouplingMatrix::scalar(1.0)), 0.0);
        assert!(pohozaev_residual(&[8.0 / 3.0; 2], &a).abs() < 1e-13);
        assert!((pohozaev_residual(&[1.0, 1.0], &a) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn overflow_is_reported() {
        let e = integrate_entire(&CouplingMatrix::scalar(1.0), &[1.0], &[800.0], RadialOptions::default())
            .unwrap_err();
        assert_eq!(e, RadialError::Overflow { radius: 0.0 });
    }

    #[test]
    fn bad_inputs() {
        let a = CouplingMatrix::scalar(1.0);
        assert!(integrate_entire(&a, &[0.0], &[0.0], RadialOptions::default()).is_err());
        assert!(integrate_entire(&a, &[1.0], &[0.0], RadialOptions::default().with_tol(0.0)).is_err());
        assert!(integrate_entire(&a, &[1.0, 1.0], &[0.0], RadialOptions::default()).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let p = scalar_profile(RadialOptions::default().with_r_max(10.0));
        let csv = p.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "r,u_1,du_1");
        assert_eq!(lines.count(), p.len());
    }
}
