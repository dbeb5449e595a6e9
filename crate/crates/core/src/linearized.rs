//! Fourier-mode linearizations around an entire radial solution.
//!
//! For the `ℓ`-th Fourier mode the linearized system reads
//!
//! ```text
//!     φ_i'' + φ_i'/r − ℓ²φ_i/r² + Σ_j a_ij h_j e^{u_j} φ_j = f_i(r).
//! ```
//!
//! Everything is integrated in `t = ln r` on `(φ, r·φ')` jointly with the
//! underlying profile, so the potential is always evaluated on the same
//! step sequence as the mode columns. Homogeneous regular solutions launch as
//! `φ_i^{(s)} = r^ℓ(δ_is + β_is r²)` with
//! `β_is = −a_is h_s e^{u_s(0)} / (4(ℓ+1))`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::exec;
use crate::fit::{least_squares, order_fit};
use crate::ode::{rk4_fixed, Dopri5, OdeError, Rhs};
use crate::radial::{energy_total, series_state, RadialError, RadialProfile};
use crate::table::CsvTable;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinearizedError {
    #[error(transparent)]
    Radial(#[from] RadialError),
    #[error("mode integration failed: {0}")]
    Ode(#[from] OdeError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("fundamental matrix became singular at r = {0:e}")]
    Singular(f64),
}

/// Growth exponent below which a direction counts as bounded.
pub const BOUNDED_THRESHOLD: f64 = 0.5;
/// Thresholds at which the bounded dimension is additionally reported.
pub const THRESHOLD_SWEEP: [f64; 3] = [0.25, 0.5, 1.0];
/// Extra decay allowed in the radial-correction bound.
pub const BOUND_DELTA: f64 = 0.1;
/// Known-kernel defects are measured on `r ≤ min(R_max, KERNEL_CHECK_RADIUS)`;
/// beyond it the exponentially separated growing mode amplifies round-off.
pub const KERNEL_CHECK_RADIUS: f64 = 1e3;
/// Far-field `r`-coefficients below this (for unit launch slope) are treated
/// as zero when selecting the minimal-growth mode-1 correction.
pub const HOMOGENEOUS_CUTOFF: f64 = 1e-6;
/// Steps used by the fixed-step cross-check solver.
pub const CROSS_CHECK_STEPS: usize = 200_000;

/// The `ℓ`-th mode operator around a profile.
#[derive(Debug, Clone, Copy)]
pub struct ModeSystem<'a> {
    profile: &'a RadialProfile,
    ell: u32,
}

impl<'a> ModeSystem<'a> {
    pub fn new(profile: &'a RadialProfile, ell: u32) -> Self {
        Self { profile, ell }
    }

    pub fn profile(&self) -> &RadialProfile {
        self.profile
    }

    pub fn ell(&self) -> u32 {
        self.ell
    }

    /// Potential matrix `a_ij h_j e^{u_j(r)}`.
    pub fn potential(&self, r: f64) -> Result<DMatrix<f64>, LinearizedError> {
        let p = self.profile;
        let n = p.n();
        let y = p.state_at(r)?;
        Ok(DMatrix::from_fn(n, n, |i, j| p.coupling().get(i, j) * p.weights()[j] * y[j].exp()))
    }
}

/// A sampled solution of one mode system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSolution {
    pub ell: u32,
    pub grid: Vec<f64>,
    /// `values[i][k] = φ_i(grid[k])`.
    pub values: Vec<Vec<f64>>,
    /// `derivs[i][k] = φ_i'(grid[k])`.
    pub derivs: Vec<Vec<f64>>,
    /// Fitted power-law growth per component over `[√R, R]`; `None` when
    /// the component vanishes there.
    pub growth_exponent: Vec<Option<f64>>,
    /// Growth of the Euclidean norm `‖φ(r)‖` over the same window.
    pub norm_exponent: Option<f64>,
}

impl ModeSolution {
    fn new(ell: u32, grid: Vec<f64>, values: Vec<Vec<f64>>, derivs: Vec<Vec<f64>>) -> Self {
        let hi = grid.last().copied().unwrap_or(0.0);
        let lo = hi.sqrt();
        let growth_exponent = values.iter().map(|v| power_fit(&grid, v, lo, hi)).collect();
        let norms: Vec<f64> = (0..grid.len())
            .map(|k| values.iter().map(|v| v[k] * v[k]).sum::<f64>().sqrt())
            .collect();
        let norm_exponent = power_fit(&grid, &norms, lo, hi);
        Self { ell, grid, values, derivs, growth_exponent, norm_exponent }
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Largest absolute value over all components and radii.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let values = self.values.iter().map(|v| v.iter().map(|x| x * factor).collect()).collect();
        let derivs = self.derivs.iter().map(|v| v.iter().map(|x| x * factor).collect()).collect();
        Self::new(self.ell, self.grid.clone(), values, derivs)
    }

    /// CSV with columns `r, phi_1..phi_n, dphi_1..dphi_n`.
    pub fn to_csv(&self) -> String {
        let n = self.n();
        let mut header = vec!["r".to_string()];
        header.extend((1..=n).map(|i| format!("phi_{i}")));
        header.extend((1..=n).map(|i| format!("dphi_{i}")));
        let mut t = CsvTable::new(&header);
        for k in 0..self.grid.len() {
            let mut row = vec![self.grid[k]];
            row.extend(self.values.iter().map(|v| v[k]));
            row.extend(self.derivs.iter().map(|v| v[k]));
            t.row(&row);
        }
        t.finish()
    }
}

/// Least-squares slope of `log|v|` against `log r` over `[lo, hi]`.
fn power_fit(grid: &[f64], v: &[f64], lo: f64, hi: f64) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = grid
        .iter()
        .zip(v)
        .filter(|(r, x)| **r >= lo && **r <= hi && **r > 0.0 && **x != 0.0 && x.is_finite())
        .map(|(r, x)| (r.ln(), x.abs().ln()))
        .unzip();
    if xs.len() < 4 {
        return None;
    }
    least_squares(&xs, &ys).ok().map(|f| f.slope)
}

/// Inhomogeneity `r² f_i = Σ_j a_ij coef_j r^{power+2} e^{u_j}`.
#[derive(Debug, Clone)]
struct Forcing {
    coef: Vec<f64>,
    power: f64,
}

/// Right-hand side for a profile carried together with mode columns.
///
/// Layout: `[u(n), w(n)]`, then `cols` blocks `[φ(n), ψ(n)]` with `ψ = r φ'`.
/// With `forced` the last block carries the inhomogeneity; with `vop` the
/// blocks form a fundamental matrix `Z` (`cols = 2n`) and a trailing `q(2n)`
/// obeys `q' = Z⁻¹ F`.
struct JointRhs {
    n: usize,
    a: Vec<f64>,
    h: Vec<f64>,
    ell2: f64,
    cols: usize,
    forced: Option<Forcing>,
    vop: Option<Forcing>,
}

impl JointRhs {
    fn new(p: &RadialProfile, ell: u32, cols: usize) -> Self {
        let n = p.n();
        let a = (0..n * n).map(|k| p.coupling().get(k / n, k % n)).collect();
        Self {
            n,
            a,
            h: p.weights().to_vec(),
            ell2: (ell as f64).powi(2),
            cols,
            forced: None,
            vop: None,
        }
    }

    fn dim(&self) -> usize {
        2 * self.n * (1 + self.cols) + if self.vop.is_some() { 2 * self.n } else { 0 }
    }

    fn forcing_term(&self, f: &Forcing, t: f64, u: &[f64], i: usize) -> f64 {
        let n = self.n;
        (0..n)
            .map(|j| self.a[i * n + j] * f.coef[j] * (u[j] + (f.power + 2.0) * t).exp())
            .sum()
    }
}

impl Rhs for JointRhs {
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.n;
        let u = &y[..n];
        let dens: Vec<f64> = (0..n).map(|j| self.h[j] * (u[j] + 2.0 * t).exp()).collect();
        for i in 0..n {
            dy[i] = y[n + i];
            dy[n + i] = -(0..n).map(|j| self.a[i * n + j] * dens[j]).sum::<f64>();
        }
        for c in 0..self.cols {
            let b = 2 * n * (c + 1);
            for i in 0..n {
                dy[b + i] = y[b + n + i];
                let mut s = self.ell2 * y[b + i];
                for j in 0..n {
                    s -= self.a[i * n + j] * dens[j] * y[b + j];
                }
                dy[b + n + i] = s;
            }
            if c + 1 == self.cols {
                if let Some(f) = &self.forced {
                    for i in 0..n {
                        dy[b + n + i] += self.forcing_term(f, t, u, i);
                    }
                }
            }
        }
        if let Some(f) = &self.vop {
            let m = 2 * n;
            let zb = 2 * n;
            let z = DMatrix::from_fn(m, m, |r, c| y[zb + c * m + r]);
            let mut rhs = DVector::zeros(m);
            for i in 0..n {
                rhs[n + i] = self.forcing_term(f, t, u, i);
            }
            let qb = zb + m * m;
            match z.lu().solve(&rhs) {
                Some(dq) => dy[qb..qb + m].copy_from_slice(dq.as_slice()),
                None => dy[qb..qb + m].iter_mut().for_each(|v| *v = f64::NAN),
            }
        }
    }
}

/// Profile part `[u, w]` of the state at `r0`.
fn profile_launch(p: &RadialProfile, r0: f64) -> Vec<f64> {
    let n = p.n();
    let s = series_state(p.coupling(), p.weights(), p.center(), r0);
    s[..2 * n].to_vec()
}

/// `β_is` of the regular launch.
fn regular_beta(p: &RadialProfile, ell: u32) -> DMatrix<f64> {
    let n = p.n();
    let denom = 4.0 * (ell as f64 + 1.0);
    DMatrix::from_fn(n, n, |i, s| {
        -p.coupling().get(i, s) * p.weights()[s] * p.center()[s].exp() / denom
    })
}

/// Homogeneous regular column `s` at `r0`, scaled by `scale` (so that
/// `φ = scale·(δ + β r0²)`).
fn regular_column(beta: &DMatrix<f64>, ell: u32, s: usize, r0: f64, scale: f64) -> Vec<f64> {
    let n = beta.nrows();
    let r2 = r0 * r0;
    let mut col = vec![0.0; 2 * n];
    for i in 0..n {
        let d = if i == s { 1.0 } else { 0.0 };
        col[i] = scale * (d + beta[(i, s)] * r2);
        col[n + i] = ell as f64 * col[i] + 2.0 * scale * beta[(i, s)] * r2;
    }
    col
}

/// Leading-order particular solution at `r0` for the forcing.
fn forced_column(p: &RadialProfile, f: &Forcing, ell: u32, r0: f64) -> Vec<f64> {
    let n = p.n();
    let pw = f.power + 2.0;
    let denom = pw * pw - (ell as f64).powi(2);
    let mut col = vec![0.0; 2 * n];
    for i in 0..n {
        let f0: f64 = (0..n)
            .map(|j| p.coupling().get(i, j) * f.coef[j] * p.center()[j].exp())
            .sum();
        col[i] = f0 * r0.powf(pw) / denom;
        col[n + i] = pw * col[i];
    }
    col
}

/// Stored integration nodes `(t, state)`, including the launch point.
struct Track {
    t: Vec<f64>,
    y: Vec<Vec<f64>>,
}

impl Track {
    fn start(t0: f64, y0: &[f64]) -> Self {
        Self { t: vec![t0], y: vec![y0.to_vec()] }
    }

    fn run(&mut self, solver: &Dopri5, rhs: &JointRhs, t1: f64) -> Result<(), OdeError> {
        let t0 = *self.t.last().unwrap();
        let y0 = self.y.last().unwrap().clone();
        let (ts, ys) = (&mut self.t, &mut self.y);
        solver.integrate(rhs, t0, &y0, t1, |s, y| {
            ts.push(s.t);
            ys.push(y.to_vec());
        })?;
        if let Some(last) = self.t.last_mut() {
            *last = t1;
        }
        Ok(())
    }

    fn radii(&self) -> Vec<f64> {
        self.t.iter().map(|t| t.exp()).collect()
    }
}

fn solver_for(p: &RadialProfile, control_dim: usize) -> Dopri5 {
    let o = p.options();
    Dopri5::new(o.tol).with_max_step(o.max_log_step).with_control_dim(control_dim)
}

/// Known kernel element together with its operator defect.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KnownKernel {
    pub solution: ModeSolution,
    /// Largest deviation, on `r ≤ min(R_max, 10³)`, between the kernel
    /// function and the mode-`ℓ` solution launched from the same data.
    pub residual: f64,
    pub check_radius: f64,
    /// `φ_i(R_max)`.
    pub endpoint: Vec<f64>,
}

fn kernel_defect(
    p: &RadialProfile,
    ell: u32,
    kernel: impl Fn(f64, &[f64], &JointRhs) -> Vec<f64>,
) -> Result<(f64, f64), LinearizedError> {
    let n = p.n();
    let o = p.options();
    let r_end = p.r_max().min(KERNEL_CHECK_RADIUS);
    let rhs = JointRhs::new(p, ell, 1);
    let t0 = o.r_start.ln();
    let mut y0 = profile_launch(p, o.r_start);
    let k0 = kernel(t0, &y0, &rhs);
    y0.extend(k0);
    let mut track = Track::start(t0, &y0);
    track.run(&solver_for(p, rhs.dim()), &rhs, r_end.ln())?;
    let mut defect = 0.0f64;
    for (t, y) in track.t.iter().zip(&track.y) {
        let k = kernel(*t, y, &rhs);
        for i in 0..n {
            defect = defect.max((y[2 * n + i] - k[i]).abs()).max((y[3 * n + i] - k[n + i]).abs());
        }
    }
    Ok((defect, r_end))
}

/// `d w_i / dt = −Σ_j a_ij h_j e^{u_j} r²` from a profile-part state.
fn dw_dt(rhs: &JointRhs, t: f64, y: &[f64]) -> Vec<f64> {
    let n = rhs.n;
    (0..n)
        .map(|i| -(0..n).map(|j| rhs.a[i * n + j] * rhs.h[j] * (y[j] + 2.0 * t).exp()).sum::<f64>())
        .collect()
}

/// The translation kernel `φ_i = u_i'` of the `ℓ = 1` mode.
pub fn known_kernel_mode1(p: &RadialProfile) -> Result<KnownKernel, LinearizedError> {
    let n = p.n();
    let (residual, check_radius) = kernel_defect(p, 1, |t, y, rhs| {
        let r = t.exp();
        let dw = dw_dt(rhs, t, y);
        let mut k = vec![0.0; 2 * n];
        for i in 0..n {
            k[i] = y[n + i] / r;
            k[n + i] = dw[i] / r - y[n + i] / r;
        }
        k
    })?;
    let grid = p.grid().to_vec();
    let values: Vec<Vec<f64>> = (0..n).map(|i| p.derivs(i)).collect();
    let derivs = second_derivatives(p);
    let endpoint = values.iter().map(|v| *v.last().unwrap()).collect();
    Ok(KnownKernel { solution: ModeSolution::new(1, grid, values, derivs), residual, check_radius, endpoint })
}

/// `u_i''` on the profile grid.
fn second_derivatives(p: &RadialProfile) -> Vec<Vec<f64>> {
    let n = p.n();
    (0..n)
        .map(|i| {
            (0..p.len())
                .map(|k| {
                    let r = p.grid()[k];
                    let src: f64 = (0..n)
                        .map(|j| p.coupling().get(i, j) * p.weights()[j] * p.value(j, k).exp())
                        .sum();
                    if k == 0 {
                        -src / 2.0
                    } else {
                        // u'' = −u'/r − Σ a h e^u
                        -p.deriv(i, k) / r - src
                    }
                })
                .collect()
        })
        .collect()
}

/// The scaling kernel `φ_i = r u_i' + 2` of the `ℓ = 0` mode.
pub fn known_kernel_mode0(p: &RadialProfile) -> Result<KnownKernel, LinearizedError> {
    let n = p.n();
    let (residual, check_radius) = kernel_defect(p, 0, |t, y, rhs| {
        let dw = dw_dt(rhs, t, y);
        let mut k = vec![0.0; 2 * n];
        for i in 0..n {
            k[i] = y[n + i] + 2.0;
            k[n + i] = dw[i];
        }
        k
    })?;
    let grid = p.grid().to_vec();
    let values: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..p.len()).map(|k| p.r_deriv(i, k) + 2.0).collect())
        .collect();
    let derivs: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..p.len())
                .map(|k| {
                    let r = p.grid()[k];
                    let src: f64 = (0..n)
                        .map(|j| p.coupling().get(i, j) * p.weights()[j] * p.value(j, k).exp())
                        .sum();
                    -src * r
                })
                .collect()
        })
        .collect();
    let endpoint = values.iter().map(|v| *v.last().unwrap()).collect();
    Ok(KnownKernel { solution: ModeSolution::new(0, grid, values, derivs), residual, check_radius, endpoint })
}

/// The regular solution space of one mode, split into growth directions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularBasis {
    pub ell: u32,
    pub r_max: f64,
    pub window: (f64, f64),
    /// Directions ordered by increasing endpoint singular value; values are
    /// normalized (common positive factor dropped).
    pub directions: Vec<ModeSolution>,
    /// Norm-growth exponent of each direction over the window.
    pub exponents: Vec<f64>,
    pub singular_values: Vec<f64>,
    /// Largest basis condition number met at a re-orthonormalization.
    pub max_condition: f64,
    pub reorthonormalizations: usize,
}

/// Integrate the `n`-dimensional space of regular solutions out to `r_max`.
///
/// The basis is QR re-orthonormalized at every decade before the fit window
/// `[√r_max, r_max]`; inside the window only a common rescaling is applied
/// (so that relative growth between directions stays measurable).
pub fn regular_basis(ms: &ModeSystem, r_max: f64) -> Result<RegularBasis, LinearizedError> {
    let p = ms.profile();
    let ell = ms.ell();
    let n = p.n();
    let o = p.options();
    if !(r_max > 100.0 * o.r_start) || !r_max.is_finite() {
        return Err(LinearizedError::InvalidInput(format!("R_max = {r_max} too small")));
    }
    let rhs = JointRhs::new(p, ell, n);
    let t0 = o.r_start.ln();
    let t_end = r_max.ln();
    let t_win = 0.5 * t_end;
    let beta = regular_beta(p, ell);
    let mut y0 = profile_launch(p, o.r_start);
    for s in 0..n {
        y0.extend(regular_column(&beta, ell, s, o.r_start, 1.0));
    }

    let decade = std::f64::consts::LN_10;
    let mut breaks = Vec::new();
    let mut k = (t0 / decade).floor() + 1.0;
    while k * decade < t_end - 1e-12 {
        breaks.push(k * decade);
        k += 1.0;
    }
    if !breaks.iter().any(|b| (b - t_win).abs() < 1e-12) && t_win > t0 {
        breaks.push(t_win);
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    breaks.push(t_end);

    let solver = solver_for(p, rhs.dim());
    let mut track = Track::start(t0, &y0);
    // segment index and accumulated log-scale of every stored node
    let mut seg_of = vec![0usize];
    let mut log_scale = vec![0.0f64];
    let mut r_factors: Vec<DMatrix<f64>> = Vec::new();
    let mut current_scale = 0.0;
    let mut max_condition = 1.0f64;
    for &tb in &breaks {
        let before = track.t.len();
        track.run(&solver, &rhs, tb)?;
        seg_of.extend(std::iter::repeat_n(r_factors.len(), track.t.len() - before));
        log_scale.extend(std::iter::repeat_n(current_scale, track.t.len() - before));
        if tb >= t_end {
            break;
        }
        let y = track.y.last_mut().unwrap();
        let b = DMatrix::from_fn(2 * n, n, |r, c| y[2 * n * (c + 1) + r]);
        if tb < t_win - 1e-12 {
            let qr = b.qr();
            let rf = qr.r();
            let diag: Vec<f64> = (0..n).map(|i| rf[(i, i)].abs()).collect();
            let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(l, h), d| (l.min(*d), h.max(*d)));
            max_condition = max_condition.max(hi / lo);
            let q = qr.q();
            for c in 0..n {
                for r in 0..2 * n {
                    y[2 * n * (c + 1) + r] = q[(r, c)];
                }
            }
            r_factors.push(rf);
            // the node at the break is re-expressed in the new basis
            *seg_of.last_mut().unwrap() = r_factors.len();
        } else {
            let big = b.amax();
            if big > 1e100 {
                for v in &mut y[2 * n..] {
                    *v /= big;
                }
                current_scale += big.ln();
                *log_scale.last_mut().unwrap() = current_scale;
            }
        }
    }
    let reorthonormalizations = r_factors.len();

    // coefficient transforms from final coordinates to each segment's
    let mut transforms = vec![DMatrix::identity(n, n); reorthonormalizations + 1];
    for s in (0..reorthonormalizations).rev() {
        let rinv = r_factors[s]
            .clone()
            .try_inverse()
            .ok_or(LinearizedError::Singular(breaks[s].exp()))?;
        transforms[s] = rinv * &transforms[s + 1];
    }

    let last = track.y.last().unwrap();
    let endpoint = DMatrix::from_fn(2 * n, n, |r, c| last[2 * n * (c + 1) + r]);
    let svd = endpoint.svd(false, true);
    let v_t = svd.v_t.ok_or(LinearizedError::Singular(r_max))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| svd.singular_values[*a].partial_cmp(&svd.singular_values[*b]).unwrap());

    let grid = track.radii();
    let window = (r_max.sqrt(), r_max);
    let mut directions = Vec::with_capacity(n);
    let mut exponents = Vec::with_capacity(n);
    let mut singular_values = Vec::with_capacity(n);
    for &d in &order {
        let v = DVector::from_iterator(n, v_t.row(d).iter().copied());
        let mut values = vec![Vec::with_capacity(grid.len()); n];
        let mut derivs = vec![Vec::with_capacity(grid.len()); n];
        let mut log_norms = Vec::new();
        for (k, y) in track.y.iter().enumerate() {
            let coeff = &transforms[seg_of[k]] * &v;
            let scale = (log_scale[k] - current_scale).exp();
            let mut norm2 = 0.0;
            for i in 0..n {
                let mut phi = 0.0;
                let mut psi = 0.0;
                for c in 0..n {
                    phi += y[2 * n * (c + 1) + i] * coeff[c];
                    psi += y[2 * n * (c + 1) + n + i] * coeff[c];
                }
                norm2 += phi * phi;
                values[i].push(phi * scale);
                derivs[i].push(psi * scale / grid[k]);
            }
            if grid[k] >= window.0 && grid[k] <= window.1 && norm2 > 0.0 {
                log_norms.push((grid[k].ln(), 0.5 * norm2.ln() + log_scale[k]));
            }
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = log_norms.into_iter().unzip();
        let exponent = least_squares(&xs, &ys)
            .map_err(|_| LinearizedError::InvalidInput("fit window holds too few nodes".into()))?
            .slope;
        let mut sol = ModeSolution::new(ell, grid.clone(), values, derivs);
        sol.norm_exponent = Some(exponent);
        directions.push(sol);
        exponents.push(exponent);
        singular_values.push(svd.singular_values[d]);
    }
    Ok(RegularBasis {
        ell,
        r_max,
        window,
        directions,
        exponents,
        singular_values,
        max_condition,
        reorthonormalizations,
    })
}

/// Bounded-subspace report for one mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub ell: u32,
    pub r_max: f64,
    pub exponents: Vec<f64>,
    pub min_exponent: f64,
    /// Directions with growth exponent below [`BOUNDED_THRESHOLD`].
    pub bounded_dimension: usize,
    /// Bounded dimension at each threshold of [`THRESHOLD_SWEEP`].
    pub sensitivity: BTreeMap<String, usize>,
    pub max_condition: f64,
}

pub fn uniqueness_probe(ms: &ModeSystem, r_max: f64) -> Result<UniquenessReport, LinearizedError> {
    let basis = regular_basis(ms, r_max)?;
    let count = |th: f64| basis.exponents.iter().filter(|e| **e < th).count();
    let sensitivity = THRESHOLD_SWEEP.iter().map(|th| (format!("{th}"), count(*th))).collect();
    Ok(UniquenessReport {
        ell: ms.ell(),
        r_max,
        min_exponent: basis.exponents.iter().copied().fold(f64::INFINITY, f64::min),
        bounded_dimension: count(BOUNDED_THRESHOLD),
        exponents: basis.exponents,
        sensitivity,
        max_condition: basis.max_condition,
    })
}

/// Decay `|φ_i(r)| ~ r^{−q_i}` of a bounded mode-1 solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mode1Decay {
    pub q: Vec<f64>,
    pub window: (f64, f64),
}

pub fn decay_check_mode1(sol: &ModeSolution) -> Result<Mode1Decay, LinearizedError> {
    let hi = sol.grid.last().copied().unwrap_or(0.0);
    let lo = hi.sqrt();
    let q = sol
        .values
        .iter()
        .map(|v| {
            power_fit(&sol.grid, v, lo, hi)
                .map(|s| -s)
                .ok_or_else(|| LinearizedError::InvalidInput("solution vanishes on the fit window".into()))
        })
        .collect::<Result<_, _>>()?;
    Ok(Mode1Decay { q, window: (lo, hi) })
}

/// How the radial-correction bound was normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundForm {
    /// `ε²(1+r)^{4−m+δ}`
    Power,
    /// `ε² log(2+r)²`, used when `m = 4`.
    LogSquared,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialCorrection {
    pub solution: ModeSolution,
    pub m: f64,
    pub delta: f64,
    pub bound_form: BoundForm,
    /// `sup_r max_i |g_i(r)| / bound(r)`.
    pub bound_constant: f64,
    /// Relative endpoint difference to the fixed-step solver.
    pub cross_check: f64,
    /// Power-law growth of `sup|g|` over far-field dyadic windows (see [`dyadic_growth`]).
    pub dyadic_growth: Option<f64>,
}

/// Radial (`ℓ = 0`) correction with `g(0) = g'(0) = 0` and forcing
/// `−(ε²/4) Σ_j a_ij ΔH_j r² e^{u_j}`, solved by variation of parameters
/// against the full fundamental system.
pub fn radial_correction(
    p: &RadialProfile,
    laplacian_h: &[f64],
    eps: f64,
) -> Result<RadialCorrection, LinearizedError> {
    let n = p.n();
    if laplacian_h.len() != n {
        return Err(LinearizedError::InvalidInput(format!("expected {n} Laplacian values")));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(LinearizedError::InvalidInput("eps must be positive".into()));
    }
    let m = energy_total(p)?.m_min;
    let forcing = Forcing { coef: laplacian_h.iter().map(|d| -eps * eps / 4.0 * d).collect(), power: 2.0 };
    let o = p.options();
    let t0 = o.r_start.ln();
    let t1 = p.r_max().ln();

    // fundamental system Z (2n × 2n) with Z(t0) = I, and q(t0) = particular launch
    let mut rhs = JointRhs::new(p, 0, 2 * n);
    let mut y0 = profile_launch(p, o.r_start);
    for c in 0..2 * n {
        let mut col = vec![0.0; 2 * n];
        col[c] = 1.0;
        y0.extend(col);
    }
    let control = rhs.dim();
    y0.extend(forced_column(p, &forcing, 0, o.r_start));
    rhs.vop = Some(forcing.clone());
    let mut track = Track::start(t0, &y0);
    track.run(&solver_for(p, control), &rhs, t1)?;

    let grid = track.radii();
    let mut values = vec![Vec::with_capacity(grid.len()); n];
    let mut derivs = vec![Vec::with_capacity(grid.len()); n];
    let m2 = 2 * n;
    for (k, y) in track.y.iter().enumerate() {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(LinearizedError::Singular(grid[k]));
        }
        let q = &y[2 * n + m2 * m2..];
        for i in 0..n {
            let mut g = 0.0;
            let mut psi = 0.0;
            for c in 0..m2 {
                g += y[2 * n + c * m2 + i] * q[c];
                psi += y[2 * n + c * m2 + n + i] * q[c];
            }
            values[i].push(g);
            derivs[i].push(psi / grid[k]);
        }
    }

    // independent fixed-step solve of the forced system
    let mut direct = JointRhs::new(p, 0, 1);
    direct.forced = Some(forcing.clone());
    let mut yd = profile_launch(p, o.r_start);
    yd.extend(forced_column(p, &forcing, 0, o.r_start));
    let end = rk4_fixed(&direct, t0, &yd, t1, CROSS_CHECK_STEPS, |_, _| {});
    let scale = (0..n).map(|i| end[2 * n + i].abs()).fold(0.0, f64::max);
    let diff = (0..n)
        .map(|i| (end[2 * n + i] - values[i].last().unwrap()).abs())
        .fold(0.0, f64::max);
    let cross_check = if scale > 0.0 { diff / scale } else { diff };

    let bound_form = if (m - 4.0).abs() <= 1e-6 { BoundForm::LogSquared } else { BoundForm::Power };
    let mut bound_constant = 0.0f64;
    for k in 0..grid.len() {
        let r = grid[k];
        let b = match bound_form {
            BoundForm::Power => eps * eps * (1.0 + r).powf(4.0 - m + BOUND_DELTA),
            BoundForm::LogSquared => eps * eps * (2.0 + r).ln().powi(2),
        };
        for v in &values {
            bound_constant = bound_constant.max(v[k].abs() / b);
        }
    }
    let solution = ModeSolution::new(0, grid, values, derivs);
    let dyadic_growth = dyadic_growth(&solution);
    Ok(RadialCorrection {
        solution,
        m,
        delta: BOUND_DELTA,
        bound_form,
        bound_constant,
        cross_check,
        dyadic_growth,
    })
}

/// Power-law growth of `sup|φ|` over the dyadic windows `[2^k, 2^{k+1}]`
/// that lie in the far field `[√R, R]` of the solution's grid.
pub fn dyadic_growth(sol: &ModeSolution) -> Option<f64> {
    let r_max = *sol.grid.last()?;
    let mut series = Vec::new();
    let mut lo = 2f64.powf(r_max.sqrt().log2().ceil());
    while 2.0 * lo <= r_max * (1.0 + 1e-12) {
        let hi = 2.0 * lo;
        let sup = sol
            .grid
            .iter()
            .enumerate()
            .filter(|(_, r)| **r >= lo && **r <= hi)
            .flat_map(|(k, _)| sol.values.iter().map(move |v| v[k].abs()))
            .fold(0.0f64, f64::max);
        if sup > 0.0 {
            series.push((1.0 / hi, sup));
        }
        lo = hi;
    }
    order_fit(&series, false).ok().map(|f| -f.exponent)
}

/// One gradient direction of the mode-1 correction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mode1Component {
    /// Gradient direction (1 or 2).
    pub direction: usize,
    pub solution: ModeSolution,
    /// `sup_r max_i |G_i(r)| / (r (1+r)^{2−m})`.
    pub bound_constant: f64,
    /// Norm of the far-field `r`-coefficient left after the best
    /// homogeneous correction; nonzero means `G` necessarily grows like `r`.
    pub obstruction: f64,
    /// Multiples of the regular homogeneous basis added to the particular
    /// solution.
    pub homogeneous_coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mode1Correction {
    pub m: f64,
    pub components: Vec<Mode1Component>,
}

/// Mode-1 corrections `G_{t,·}` (`t = 1, 2`) with `G(0) = 0` and forcing
/// `−Σ_j a_ij ∂_t H_j r e^{u_j}`; `grad_h[j] = (∂_1 H_j, ∂_2 H_j)`.
///
/// Among all regular solutions the one with the smallest far-field
/// `r`-coefficient is selected.
pub fn mode1_correction(p: &RadialProfile, grad_h: &[[f64; 2]]) -> Result<Mode1Correction, LinearizedError> {
    let n = p.n();
    if grad_h.len() != n {
        return Err(LinearizedError::InvalidInput(format!("expected {n} gradient pairs")));
    }
    if grad_h.iter().flatten().any(|v| !v.is_finite()) {
        return Err(LinearizedError::InvalidInput("gradient entries must be finite".into()));
    }
    let m = energy_total(p)?.m_min;
    let solved = exec::map_range(2, |t| mode1_direction(p, grad_h, t, m));
    let components = solved.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(Mode1Correction { m, components })
}

fn mode1_direction(
    p: &RadialProfile,
    grad_h: &[[f64; 2]],
    t: usize,
    m: f64,
) -> Result<Mode1Component, LinearizedError> {
    let n = p.n();
    let o = p.options();
    let forcing = Forcing { coef: grad_h.iter().map(|g| -g[t]).collect(), power: 1.0 };
    let mut rhs = JointRhs::new(p, 1, n + 1);
    let beta = regular_beta(p, 1);
    let mut y0 = profile_launch(p, o.r_start);
    for s in 0..n {
        y0.extend(regular_column(&beta, 1, s, o.r_start, o.r_start));
    }
    let control = 2 * n * (1 + n);
    y0.extend(forced_column(p, &forcing, 1, o.r_start));
    rhs.forced = Some(forcing);
    let t0 = o.r_start.ln();
    let mut track = Track::start(t0, &y0);
    track.run(&solver_for(p, control), &rhs, p.r_max().ln())?;

    // far-field r-coefficients α = (φ + rφ')/(2R)
    let big_r = p.r_max();
    let last = track.y.last().unwrap();
    let alpha = |c: usize, i: usize| (last[2 * n * (c + 1) + i] + last[2 * n * (c + 1) + n + i]) / (2.0 * big_r);
    let a_h = DMatrix::from_fn(n, n, |i, c| alpha(c, i));
    let a_f = DVector::from_fn(n, |i, _| alpha(n, i));
    // Columns start as φ ≈ r, so r-coefficients are O(1) for growing
    // directions and at round-off level for the bounded one.
    let svd = a_h.clone().svd(true, true);
    let x = if svd.singular_values.max() > HOMOGENEOUS_CUTOFF {
        svd.solve(&(-&a_f), HOMOGENEOUS_CUTOFF).map_err(|_| LinearizedError::Singular(big_r))?
    } else {
        DVector::zeros(n)
    };
    let obstruction = (&a_f + &a_h * &x).norm();

    let grid = track.radii();
    let mut values = vec![Vec::with_capacity(grid.len()); n];
    let mut derivs = vec![Vec::with_capacity(grid.len()); n];
    let mut bound_constant = 0.0f64;
    for (k, y) in track.y.iter().enumerate() {
        let r = grid[k];
        for i in 0..n {
            let mut g = y[2 * n * (n + 1) + i];
            let mut psi = y[2 * n * (n + 1) + n + i];
            for c in 0..n {
                g += x[c] * y[2 * n * (c + 1) + i];
                psi += x[c] * y[2 * n * (c + 1) + n + i];
            }
            bound_constant = bound_constant.max(g.abs() / (r * (1.0 + r).powf(2.0 - m)));
            values[i].push(g);
            derivs[i].push(psi / r);
        }
    }
    Ok(Mode1Component {
        direction: t + 1,
        solution: ModeSolution::new(1, grid, values, derivs),
        bound_constant,
        obstruction,
        homogeneous_coefficients: x.iter().copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::CouplingMatrix;
    use crate::radial::{integrate_entire, RadialOptions};

    fn bubble(r_max: f64) -> RadialProfile {
        integrate_entire(
            &CouplingMatrix::scalar(1.0),
            &[1.0],
            &[0.0],
            RadialOptions::default().with_r_max(r_max),
        )
        .unwrap()
    }

    #[test]
    fn mode1_kernel_closed_form() {
        let p = bubble(1e4);
        let k = known_kernel_mode1(&p).unwrap();
        assert!(k.residual < 1e-7, "residual {}", k.residual);
        for (r, v) in k.solution.grid.iter().zip(&k.solution.values[0]) {
            assert!((v + 4.0 * r / (8.0 + r * r)).abs() < 1e-8);
        }
        let tail = k.endpoint[0] * p.r_max();
        assert!((tail + 4.0).abs() < 1e-2);
        let d = decay_check_mode1(&k.solution).unwrap();
        assert!((d.q[0] - 1.0).abs() < 0.05);
        let d2 = decay_check_mode1(&k.solution.scaled(2.0)).unwrap();
        assert!((d2.q[0] - d.q[0]).abs() < 1e-12);
    }

    #[test]
    fn mode0_kernel_closed_form() {
        let p = bubble(1e4);
        let k = known_kernel_mode0(&p).unwrap();
        assert!(k.residual < 1e-7, "residual {}", k.residual);
        assert_eq!(k.solution.values[0][0], 2.0);
        for (r, v) in k.solution.grid.iter().zip(&k.solution.values[0]) {
            assert!((v - (16.0 - 2.0 * r * r) / (8.0 + r * r)).abs() < 1e-8);
        }
        assert!((k.endpoint[0] + 2.0).abs() < 1e-2);
    }

    #[test]
    fn bounded_dimensions_on_bubble() {
        let p = bubble(1e4);
        let expect = [(1u32, 1usize), (2, 0), (3, 0)];
        for (ell, dim) in expect {
            let rep = uniqueness_probe(&ModeSystem::new(&p, ell), 1e3).unwrap();
            assert_eq!(rep.bounded_dimension, dim, "ell = {ell}: {:?}", rep.exponents);
        }
        let b = regular_basis(&ModeSystem::new(&p, 1), 1e3).unwrap();
        assert!((b.exponents[0] + 1.0).abs() < 0.05, "{:?}", b.exponents);
        let b2 = regular_basis(&ModeSystem::new(&p, 2), 1e3).unwrap();
        assert!((b2.exponents[0] - 2.0).abs() < 0.05);
        let b5 = regular_basis(&ModeSystem::new(&p, 5), 1e3).unwrap();
        assert!(b5.exponents.iter().all(|e| *e >= 4.9));
    }

    #[test]
    fn radial_correction_zero_forcing() {
        let p = bubble(1e3);
        let g = radial_correction(&p, &[0.0], 1e-2).unwrap();
        assert_eq!(g.solution.sup_norm(), 0.0);
    }

    #[test]
    fn radial_correction_cross_check() {
        let p = bubble(1e4);
        let g = radial_correction(&p, &[1.0], 1e-2).unwrap();
        assert!(g.cross_check < 1e-6, "cross check {}", g.cross_check);
        assert_eq!(g.bound_form, BoundForm::LogSquared);
        assert!(g.bound_constant.is_finite() && g.bound_constant > 0.0);
        let g2 = radial_correction(&p, &[2.0], 1e-2).unwrap();
        let s1 = g.solution.values[0].last().unwrap();
        let s2 = g2.solution.values[0].last().unwrap();
        assert!((s2 - 2.0 * s1).abs() <= 1e-10 * s2.abs());
    }

    #[test]
    fn mode1_zero_forcing_and_swap() {
        let p = bubble(1e3);
        let z = mode1_correction(&p, &[[0.0, 0.0]]).unwrap();
        assert!(z.components.iter().all(|c| c.solution.sup_norm() == 0.0));
        let a = mode1_correction(&p, &[[1.0, 0.5]]).unwrap();
        let b = mode1_correction(&p, &[[0.5, 1.0]]).unwrap();
        assert_eq!(a.components[0].solution.values, b.components[1].solution.values);
        assert_eq!(a.components[1].solution.values, b.components[0].solution.values);
    }
}
