//! Leading-order bubbling predictions near the single-bubble critical set.
//!
//! For a parameter vector `ρ` on `Γ₁` (`Λ_I(ρ) = 0`, every proper-subset
//! `Λ_J(ρ) > 0`) with masses `m_i = (1/2π) Σ_j a_ij ρ_j` and `m = min m_i`,
//! blowup sequences with height scale `ε = e^{−M/2}` satisfy
//!
//! ```text
//!   m < 4 (subcritical):  Λ_I(ρ^k) ≈  8π² Σ_{i∈I₁} e^{c_i} D_i · ε^{m−2}
//!   m = 4 (critical):     Λ_I(ρ^k) ≈ −16π² Σ_i b_i e^{c_i} · ε² log(1/ε)
//! ```
//!
//! where `I₁` collects the indices attaining the minimal mass, `c_i` are the
//! asymptotic constants of the entire radial profile with energies
//! `σ_i = ρ_i/2π`, `D_i` are the tail coefficients of the torus geometry and
//!
//! ```text
//!   b_i = ¼ (Δ log h_i(p) − 2K(p) + 8π + |∇ log h_i(p) + 8π ∇₁γ(p, p)|²).
//! ```
//!
//! The blowup point is a zero of the field
//! `Σ_i (∇ log h_i(p) + 2π m̃ ∇₁γ(p, p)) ρ_i` with `m̃ = m` (subcritical) or 4
//! (critical). Only leading orders are evaluated; every report says so.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use serde::Serialize;
use thiserror::Error;

use crate::algebra::{self, AlgebraError, CouplingMatrix, Gamma1Report, RhoVector};
use crate::exec::{self, Schedule};
use crate::fit::{order_fit, FitError, OrderFit};
use crate::radial::{self, EnergySummary, RadialError, RadialOptions, RadialProfile};
use crate::torus_green::{
    tail_coefficient_with, TailCoefficientInput, TailCoefficientReport, TorusError, TorusFunction, TorusGreen,
};

type P2 = [f64; 2];

/// Tolerance on masses when classifying the regime and selecting `I₁`.
pub const MASS_TOL: f64 = 1e-6;
/// Largest admissible Pohozaev residual of `σ = ρ/2π`.
pub const POHOZAEV_TOL: f64 = 1e-6;
/// Largest admissible `ε`.
pub const EPS_MAX: f64 = 0.1;
/// Residual norm at which [`location_solve`] stops.
pub const LOCATION_TOL: f64 = 1e-10;
/// Singular values below this (relative to the largest, or absolutely) are
/// treated as zero in the location Newton step.
pub const JACOBIAN_CUTOFF: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BubblingError {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Radial(#[from] RadialError),
    #[error(transparent)]
    Torus(#[from] TorusError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("ρ is not on Γ₁: Λ_I = {lambda_i:e}, proper subsets positive: {subsets_positive}")]
    NotOnGamma1 { lambda_i: f64, subsets_positive: bool },
    #[error("σ = ρ/2π is off the Pohozaev quadric (residual {0:e})")]
    OffQuadric(f64),
    #[error("masses {0:?} are neither subcritical (min < 4) nor critical (all = 4)")]
    RegimeUndetermined(Vec<f64>),
    #[error("operation requires the {expected:?} regime, scenario is {found:?}")]
    RegimeMismatch { expected: Regime, found: Regime },
    #[error("invalid eps list: {0}")]
    InvalidEps(String),
    #[error("ρ^k − ρ changes sign along the sequence (component {component}, entry {entry})")]
    MixedSign { component: usize, entry: usize },
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("expected {expected} coefficients, got {got}")]
    Length { expected: usize, got: usize },
    #[error("location Newton stalled after {iterations} iterations at |F| = {residual:e}")]
    LocationDiverged { iterations: usize, residual: f64 },
    #[error("location Jacobian is singular at a non-root (|F| = {0:e})")]
    SingularJacobian(f64),
}

/// Which leading-order law applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `m < 4`: power law `ε^{m−2}` with tail coefficients.
    Subcritical,
    /// All masses equal 4: `ε² log(1/ε)` with the `b_i` coefficients.
    Critical,
}

/// Classify from masses alone.
pub fn classify(masses: &[f64]) -> Result<Regime, BubblingError> {
    let min = masses.iter().copied().fold(f64::INFINITY, f64::min);
    if masses.iter().all(|m| (m - 4.0).abs() <= MASS_TOL) {
        Ok(Regime::Critical)
    } else if min < 4.0 - MASS_TOL {
        Ok(Regime::Subcritical)
    } else {
        Err(BubblingError::RegimeUndetermined(masses.to_vec()))
    }
}

/// Zero-based indices whose mass lies within [`MASS_TOL`] of the minimum.
pub fn minimal_indices(masses: &[f64]) -> Vec<usize> {
    let min = masses.iter().copied().fold(f64::INFINITY, f64::min);
    (0..masses.len()).filter(|&i| masses[i] - min <= MASS_TOL).collect()
}

/// Flat torus with one weight function per component and a blowup point.
#[derive(Debug, Clone)]
pub struct TorusGeometry {
    pub torus: TorusGreen,
    pub h: Vec<TorusFunction>,
    pub p: P2,
    /// Gaussian curvature at `p`; zero for a flat torus.
    pub curvature: f64,
}

impl TorusGeometry {
    pub fn new(torus: TorusGreen, h: Vec<TorusFunction>, p: P2) -> Self {
        Self { torus, h, p, curvature: 0.0 }
    }

    /// Unit square with `h_i ≡ 1` for `n` components.
    pub fn flat(n: usize, p: P2) -> Self {
        Self::new(TorusGreen::unit_square(), vec![TorusFunction::one(); n], p)
    }

    pub fn with_curvature(mut self, k: f64) -> Self {
        self.curvature = k;
        self
    }

    fn validate(&self, n: usize) -> Result<(), BubblingError> {
        if self.h.len() != n {
            return Err(BubblingError::Geometry(format!("{} weight functions for {n} components", self.h.len())));
        }
        if self.p.iter().any(|v| !v.is_finite()) || !self.curvature.is_finite() {
            return Err(BubblingError::Geometry("blowup point and curvature must be finite".into()));
        }
        for h in &self.h {
            h.check_positive(&self.torus, 32)?;
        }
        Ok(())
    }
}

/// Numerical settings of a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioOptions {
    pub radial: RadialOptions,
    /// Energy tolerance of the profile shooting.
    pub shoot_tol: f64,
    pub schedule: Schedule,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self { radial: RadialOptions::default(), shoot_tol: 1e-7, schedule: Schedule::default() }
    }
}

/// Everything the leading-term formulas need, validated on construction.
#[derive(Debug, Clone)]
pub struct BubbleScenario {
    a: CouplingMatrix,
    rho: RhoVector,
    regime: Regime,
    masses: Vec<f64>,
    m: f64,
    i1: Vec<usize>,
    gamma1: Gamma1Report,
    profile: RadialProfile,
    summary: EnergySummary,
    geometry: TorusGeometry,
    eps_list: Vec<f64>,
    options: ScenarioOptions,
}

impl BubbleScenario {
    /// Validate `ρ ∈ Γ₁`, classify the regime and compute the limit profile
    /// (gauge `u_1(0) = 0`, weights `h_i(p)`).
    pub fn new(
        a: CouplingMatrix,
        rho: RhoVector,
        geometry: TorusGeometry,
        eps_list: Vec<f64>,
        options: ScenarioOptions,
    ) -> Result<Self, BubblingError> {
        let n = a.n();
        if rho.len() != n {
            return Err(AlgebraError::DimensionMismatch { expected: n, got: rho.len() }.into());
        }
        geometry.validate(n)?;
        validate_eps(&eps_list)?;

        let gamma1 = algebra::gamma1_report(&a, &rho, algebra::default_gamma1_tolerance(&rho))?;
        if !gamma1.is_member {
            return Err(BubblingError::NotOnGamma1 {
                lambda_i: gamma1.lambda_i,
                subsets_positive: gamma1.lambda_subsets.values().all(|v| *v > 0.0),
            });
        }
        let sigma: Vec<f64> = rho.values().iter().map(|r| r / (2.0 * PI)).collect();
        let quad = radial::pohozaev_residual(&sigma, &a);
        if quad.abs() > POHOZAEV_TOL {
            return Err(BubblingError::OffQuadric(quad));
        }
        let masses = algebra::masses(&a, &rho)?;
        let regime = classify(&masses.m)?;
        let i1 = minimal_indices(&masses.m);

        let h0: Vec<f64> = geometry.h.iter().map(|h| h.value(&geometry.torus, geometry.p)).collect();
        let profile = radial::shoot_for_energies(&a, &h0, &sigma, options.shoot_tol, options.radial)?;
        let summary = radial::energy_total(&profile)?;
        Ok(Self {
            a,
            rho,
            regime,
            m: masses.min,
            masses: masses.m,
            i1,
            gamma1,
            profile,
            summary,
            geometry,
            eps_list,
            options,
        })
    }

    /// Attach an approaching sequence `ρ^k`; rejected unless every component
    /// of `ρ^k − ρ` keeps one sign along the sequence.
    pub fn check_rho_sequence(&self, sequence: &[Vec<f64>]) -> Result<(), BubblingError> {
        validate_rho_sequence(self.rho.values(), sequence)
    }

    pub fn coupling(&self) -> &CouplingMatrix {
        &self.a
    }

    pub fn rho(&self) -> &RhoVector {
        &self.rho
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Minimal mass `m`.
    pub fn m(&self) -> f64 {
        self.m
    }

    /// Zero-based indices attaining the minimal mass.
    pub fn minimal_set(&self) -> &[usize] {
        &self.i1
    }

    pub fn gamma1(&self) -> &Gamma1Report {
        &self.gamma1
    }

    pub fn profile(&self) -> &RadialProfile {
        &self.profile
    }

    pub fn summary(&self) -> &EnergySummary {
        &self.summary
    }

    /// Asymptotic constants `c_i` of the limit profile.
    pub fn c(&self) -> &[f64] {
        &self.summary.c
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    pub fn eps_list(&self) -> &[f64] {
        &self.eps_list
    }

    pub fn options(&self) -> ScenarioOptions {
        self.options
    }

    /// `m̃` in the location field.
    fn location_mass(&self) -> f64 {
        match self.regime {
            Regime::Subcritical => self.m,
            Regime::Critical => 4.0,
        }
    }

    fn require(&self, expected: Regime) -> Result<(), BubblingError> {
        if self.regime == expected {
            Ok(())
        } else {
            Err(BubblingError::RegimeMismatch { expected, found: self.regime })
        }
    }
}

fn validate_eps(eps: &[f64]) -> Result<(), BubblingError> {
    if eps.is_empty() {
        return Err(BubblingError::InvalidEps("empty".into()));
    }
    if let Some(e) = eps.iter().find(|e| !(**e > 0.0 && **e <= EPS_MAX)) {
        return Err(BubblingError::InvalidEps(format!("{e} outside (0, {EPS_MAX}]")));
    }
    if eps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(BubblingError::InvalidEps("not strictly decreasing".into()));
    }
    Ok(())
}

/// Every component of `ρ^k − ρ` must keep a single sign (zeros allowed).
pub fn validate_rho_sequence(limit: &[f64], sequence: &[Vec<f64>]) -> Result<(), BubblingError> {
    for (component, &target) in limit.iter().enumerate() {
        let mut sign = 0.0;
        for (entry, rk) in sequence.iter().enumerate() {
            if rk.len() != limit.len() {
                return Err(BubblingError::Length { expected: limit.len(), got: rk.len() });
            }
            let d = rk[component] - target;
            if d == 0.0 {
                continue;
            }
            if sign == 0.0 {
                sign = d.signum();
            } else if d.signum() != sign {
                return Err(BubblingError::MixedSign { component, entry });
            }
        }
    }
    Ok(())
}

/// `ε = e^{−M/2}`.
pub fn eps_from_height(height: f64) -> f64 {
    (-0.5 * height).exp()
}

/// `b_i` for every component at `p`.
pub fn b_coefficients(geometry: &TorusGeometry, p: P2) -> Vec<f64> {
    let tg = &geometry.torus;
    let g1 = tg.grad1_gamma(p);
    geometry
        .h
        .iter()
        .map(|h| {
            let lg = h.log_gradient(tg, p);
            let v = [lg[0] + 8.0 * PI * g1[0], lg[1] + 8.0 * PI * g1[1]];
            0.25 * (h.log_laplacian(tg, p) - 2.0 * geometry.curvature + 8.0 * PI + v[0] * v[0] + v[1] * v[1])
        })
        .collect()
}

/// `8π² Σ_{i∈I₁} e^{c_i} D_i ε^{m−2}`; `d` is aligned with
/// [`BubbleScenario::minimal_set`].
pub fn lambda_leading_subcritical(sc: &BubbleScenario, d: &[f64], eps: f64) -> Result<f64, BubblingError> {
    sc.require(Regime::Subcritical)?;
    if d.len() != sc.i1.len() {
        return Err(BubblingError::Length { expected: sc.i1.len(), got: d.len() });
    }
    let sum: f64 = sc.i1.iter().zip(d).map(|(&i, di)| sc.c()[i].exp() * di).sum();
    Ok(8.0 * PI * PI * sum * eps.powf(sc.m - 2.0))
}

/// `−16π² Σ_i b_i e^{c_i} ε² log(1/ε)`.
pub fn lambda_leading_critical(sc: &BubbleScenario, b: &[f64], eps: f64) -> Result<f64, BubblingError> {
    sc.require(Regime::Critical)?;
    if b.len() != sc.a.n() {
        return Err(BubblingError::Length { expected: sc.a.n(), got: b.len() });
    }
    let sum: f64 = b.iter().zip(sc.c()).map(|(bi, ci)| bi * ci.exp()).sum();
    Ok(-16.0 * PI * PI * sum * eps * eps * (1.0 / eps).ln())
}

/// `Σ_i (∇ log h_i(p) + 2π m̃ ∇₁γ(p, p)) ρ_i`.
pub fn location_residual(sc: &BubbleScenario, p: P2) -> P2 {
    location_field(&sc.geometry, sc.rho.values(), sc.location_mass(), p)
}

/// The location field for explicit data.
pub fn location_field(geometry: &TorusGeometry, rho: &[f64], mass: f64, p: P2) -> P2 {
    let tg = &geometry.torus;
    let g1 = tg.grad1_gamma(p);
    let mut f = [0.0, 0.0];
    for (h, r) in geometry.h.iter().zip(rho) {
        let lg = h.log_gradient(tg, p);
        f[0] += (lg[0] + 2.0 * PI * mass * g1[0]) * r;
        f[1] += (lg[1] + 2.0 * PI * mass * g1[1]) * r;
    }
    f
}

/// Outcome of [`location_solve`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocationSolution {
    pub point: P2,
    /// `point` reduced to lattice coordinates in `[0, 1)²`.
    pub cell_coordinates: P2,
    pub residual: P2,
    pub residual_norm: f64,
    pub iterations: usize,
    /// Numerical rank of the Jacobian at the root.
    pub jacobian_rank: usize,
    /// Set when the Jacobian is rank deficient (a curve or region of roots).
    pub degenerate: bool,
}

const LOCATION_MAX_ITER: usize = 100;
const FD_STEP: f64 = 1e-6;

/// Damped Gauss–Newton on the location field from `seed`, with a
/// pseudo-inverse step so that rank-deficient fields still converge.
pub fn location_solve(sc: &BubbleScenario, seed: P2) -> Result<LocationSolution, BubblingError> {
    let field = |p: P2| location_residual(sc, p);
    let norm = |v: P2| (v[0] * v[0] + v[1] * v[1]).sqrt();
    let jacobian = |p: P2| -> Matrix2<f64> {
        let mut j = Matrix2::zeros();
        for k in 0..2 {
            let mut pp = p;
            let mut pm = p;
            pp[k] += FD_STEP;
            pm[k] -= FD_STEP;
            let (fp, fm) = (field(pp), field(pm));
            j[(0, k)] = (fp[0] - fm[0]) / (2.0 * FD_STEP);
            j[(1, k)] = (fp[1] - fm[1]) / (2.0 * FD_STEP);
        }
        j
    };
    let rank = |j: &Matrix2<f64>| -> usize {
        let sv = j.singular_values();
        let top = sv.max();
        sv.iter().filter(|s| **s > JACOBIAN_CUTOFF * top.max(1.0)).count()
    };

    let mut p = seed;
    let mut f = field(p);
    let mut iterations = 0;
    while norm(f) >= LOCATION_TOL {
        if iterations == LOCATION_MAX_ITER {
            return Err(BubblingError::LocationDiverged { iterations, residual: norm(f) });
        }
        iterations += 1;
        let j = jacobian(p);
        if rank(&j) == 0 {
            return Err(BubblingError::SingularJacobian(norm(f)));
        }
        let svd = j.svd(true, true);
        let cutoff = JACOBIAN_CUTOFF * svd.singular_values.max().max(1.0);
        let step = svd
            .solve(&Vector2::new(-f[0], -f[1]), cutoff)
            .map_err(|_| BubblingError::SingularJacobian(norm(f)))?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = [p[0] + lambda * step[0], p[1] + lambda * step[1]];
            let ft = field(trial);
            if norm(ft) < norm(f) {
                p = trial;
                f = ft;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(BubblingError::LocationDiverged { iterations, residual: norm(f) });
        }
    }
    let jacobian_rank = rank(&jacobian(p));
    let (b1, b2) = sc.geometry.torus.dual();
    let coord = |b: P2| {
        let t = p[0] * b[0] + p[1] * b[1];
        t - t.floor()
    };
    Ok(LocationSolution {
        point: p,
        cell_coordinates: [coord(b1), coord(b2)],
        residual: f,
        residual_norm: norm(f),
        iterations,
        jacobian_rank,
        degenerate: jacobian_rank < 2,
    })
}

/// One component's share of the leading coefficient.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Contribution {
    /// Zero-based component index.
    pub index: usize,
    pub c: f64,
    /// `D_i` (subcritical) or `b_i` (critical).
    pub factor: f64,
    /// `e^{c_i}·factor`.
    pub product: f64,
}

/// One point of the prediction series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prediction {
    pub eps: f64,
    pub lambda: f64,
}

/// The leading-order prediction of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeadingTermReport {
    pub regime: Regime,
    /// Always true: the `o(1)` corrections are not modelled.
    pub leading_order_only: bool,
    pub masses: Vec<f64>,
    pub m: f64,
    /// Zero-based indices attaining the minimal mass.
    pub minimal_set: Vec<usize>,
    pub gamma1: Gamma1Report,
    pub sigma: Vec<f64>,
    pub c: Vec<f64>,
    pub contributions: Vec<Contribution>,
    /// Both routes to each `D_i` (subcritical only).
    pub tail_coefficients: Vec<TailCoefficientReport>,
    pub predicted: Vec<Prediction>,
    /// Power-law fit of the prediction series.
    pub fit: OrderFit,
    /// `ε² log(1/ε)` fit (critical only).
    pub log_corrected_fit: Option<OrderFit>,
    /// Exponent of `fit`; `m − 2` in the subcritical regime.
    pub fitted_exponent: f64,
    pub blowup_point: P2,
    pub location_residual: P2,
}

impl LeadingTermReport {
    /// The series as CSV: `eps,lambda`.
    pub fn series_csv(&self) -> String {
        let mut t = crate::table::CsvTable::new(&["eps", "lambda"]);
        for p in &self.predicted {
            t.row(&[p.eps, p.lambda]);
        }
        t.finish()
    }
}

/// Assemble the coefficients, evaluate the prediction over the scenario's
/// eps list, fit it, and evaluate the location field at the scenario's point.
pub fn scenario_report(sc: &BubbleScenario) -> Result<LeadingTermReport, BubblingError> {
    let geometry = &sc.geometry;
    let p = geometry.p;
    let c = sc.c().to_vec();
    let (contributions, tail_coefficients) = match sc.regime {
        Regime::Subcritical => {
            let reports = exec::map_with(sc.options.schedule, &sc.i1, |&i| {
                let input = TailCoefficientInput::new(sc.m, p, geometry.h[i].clone());
                tail_coefficient_with(&input, &geometry.torus, sc.options.schedule)
            })
            .into_iter()
            .collect::<Result<Vec<TailCoefficientReport>, TorusError>>()?;
            let contributions: Vec<Contribution> = sc
                .i1
                .iter()
                .zip(&reports)
                .map(|(&i, r)| Contribution { index: i, c: c[i], factor: r.value(), product: c[i].exp() * r.value() })
                .collect();
            (contributions, reports)
        }
        Regime::Critical => {
            let b = b_coefficients(geometry, p);
            let contributions = b
                .iter()
                .enumerate()
                .map(|(i, &bi)| Contribution { index: i, c: c[i], factor: bi, product: c[i].exp() * bi })
                .collect();
            (contributions, Vec::new())
        }
    };
    let factors: Vec<f64> = contributions.iter().map(|k| k.factor).collect();
    let predicted = sc
        .eps_list
        .iter()
        .map(|&eps| {
            let lambda = match sc.regime {
                Regime::Subcritical => lambda_leading_subcritical(sc, &factors, eps)?,
                Regime::Critical => lambda_leading_critical(sc, &factors, eps)?,
            };
            Ok(Prediction { eps, lambda })
        })
        .collect::<Result<Vec<_>, BubblingError>>()?;
    let series: Vec<(f64, f64)> = predicted.iter().map(|p| (p.eps, p.lambda)).collect();
    let fit = order_fit(&series, false)?;
    let log_corrected_fit = match sc.regime {
        Regime::Critical => Some(order_fit(&series, true)?),
        Regime::Subcritical => None,
    };
    Ok(LeadingTermReport {
        regime: sc.regime,
        leading_order_only: true,
        masses: sc.masses.clone(),
        m: sc.m,
        minimal_set: sc.i1.clone(),
        gamma1: sc.gamma1.clone(),
        sigma: sc.summary.sigma.clone(),
        c,
        contributions,
        tail_coefficients,
        predicted,
        fitted_exponent: fit.exponent,
        fit,
        log_corrected_fit,
        blowup_point: p,
        location_residual: location_residual(sc, p),
    })
}
