//! Green's function of a unit-area flat torus and the tail coefficient `D`.
//!
//! With lattice `Λ = ℤa₁ + ℤa₂` (cell area 1) and reciprocal vectors
//! `K = 2π(k₁b₁ + k₂b₂)`, `aᵢ·bⱼ = δᵢⱼ`, the mean-zero Green's function
//! `−ΔG = δ − 1` is evaluated by Ewald splitting with parameter `α`:
//!
//! ```text
//!   G(d) = (1/4π) Σ_L E1(α|d+L|²) + Σ_{K≠0} e^{−K²/4α} cos(K·d)/K² − 1/(4α).
//! ```
//!
//! The regular part `γ(x, y) = G(x, y) + (1/2π) log|x − y|` uses the entire
//! function `Ein` for the image nearest to the origin, which removes the
//! logarithm analytically and keeps `γ` smooth through the diagonal.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, Schedule};
use crate::fit::richardson;
use crate::quadrature::GaussLegendre;
use crate::special::{e1, ein, EULER_GAMMA};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TorusError {
    #[error("cell area is {0}, expected 1")]
    AreaNotUnit(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("points coincide modulo the lattice")]
    Coincident,
    #[error("m = {0} outside the admissible range (2, 3.99)")]
    MOutOfRange(f64),
    #[error("h is not positive: h({x:?}) = {value}")]
    NonPositive { x: [f64; 2], value: f64 },
    #[error("tail-coefficient routes disagree: A = {route_a}, B = {route_b} (relative {relative:e})")]
    RouteDisagreement { route_a: f64, route_b: f64, relative: f64 },
}

/// Area tolerance for the fundamental cell.
pub const AREA_TOL: f64 = 1e-12;
/// Default Ewald splitting parameter.
pub const DEFAULT_ALPHA: f64 = PI;
/// Terms smaller than this are dropped from both lattice sums.
pub const TERM_CUTOFF: f64 = 1e-14;
/// Largest admissible `m` for the tail coefficient.
pub const M_UPPER: f64 = 3.99;
/// Relative agreement required between the two tail-coefficient routes.
pub const ROUTE_TOL: f64 = 1e-3;
/// Excision radii used by the direct route.
pub const DELTAS: [f64; 3] = [0.02, 0.01, 0.005];
/// Separation below which two points are treated as coincident.
pub const COINCIDENT_TOL: f64 = 1e-12;
/// Radius below which the symmetrized route uses its Taylor model.
pub const INNER_RADIUS: f64 = 1e-4;

type P2 = [f64; 2];

fn dot(a: P2, b: P2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn norm2(a: P2) -> f64 {
    dot(a, a)
}

fn sub(a: P2, b: P2) -> P2 {
    [a[0] - b[0], a[1] - b[1]]
}

fn add(a: P2, b: P2) -> P2 {
    [a[0] + b[0], a[1] + b[1]]
}

fn scale(a: P2, s: f64) -> P2 {
    [a[0] * s, a[1] * s]
}

/// Flat-torus Green's function evaluator.
#[derive(Debug, Clone)]
pub struct TorusGreen {
    a1: P2,
    a2: P2,
    b1: P2,
    b2: P2,
    alpha: f64,
    /// Real-space images (the origin excluded), nearest first.
    images: Vec<P2>,
    /// Half of the reciprocal lattice: `(k₁, k₂, K, e^{−K²/4α}/K²)`.
    recip: Vec<(i64, i64, P2, f64)>,
    /// Index ranges of `recip` (`0..=m1`, `−m2..=m2`).
    m1: i64,
    m2: i64,
}

/// `(cos, sin)` of one lattice phase.
type Phase = (f64, f64);

impl TorusGreen {
    pub fn new(a1: P2, a2: P2) -> Result<Self, TorusError> {
        Self::with_alpha(a1, a2, DEFAULT_ALPHA)
    }

    /// The unit square torus.
    pub fn unit_square() -> Self {
        Self::new([1.0, 0.0], [0.0, 1.0]).expect("unit square has unit area")
    }

    pub fn with_alpha(a1: P2, a2: P2, alpha: f64) -> Result<Self, TorusError> {
        if a1.iter().chain(&a2).any(|v| !v.is_finite()) {
            return Err(TorusError::InvalidInput("lattice vectors must be finite".into()));
        }
        let det = a1[0] * a2[1] - a1[1] * a2[0];
        if (det.abs() - 1.0).abs() > AREA_TOL {
            return Err(TorusError::AreaNotUnit(det.abs()));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(TorusError::InvalidInput("Ewald parameter must be positive".into()));
        }
        let b1 = [a2[1] / det, -a2[0] / det];
        let b2 = [-a1[1] / det, a1[0] / det];

        // real space: E1(αρ²)/(4π) < TERM_CUTOFF once αρ² > 30; cell points
        // lie within half the longer diagonal of the origin
        let diag = norm2(add(a1, a2)).max(norm2(sub(a1, a2))).sqrt();
        let rho = (30.0 / alpha).sqrt() + diag;
        let mut images = Vec::new();
        let n1 = (rho * norm2(b1).sqrt()).ceil() as i64 + 1;
        let n2 = (rho * norm2(b2).sqrt()).ceil() as i64 + 1;
        for i in -n1..=n1 {
            for j in -n2..=n2 {
                if i == 0 && j == 0 {
                    continue;
                }
                let l = add(scale(a1, i as f64), scale(a2, j as f64));
                if norm2(l) <= rho * rho {
                    images.push(l);
                }
            }
        }
        images.sort_by(|a, b| norm2(*a).partial_cmp(&norm2(*b)).unwrap().then(a.partial_cmp(b).unwrap()));

        // reciprocal space: keep e^{−K²/4α}/K² ≥ TERM_CUTOFF·1e-2
        let kmax2 = 4.0 * alpha * (1e16f64).ln();
        let kmax = kmax2.sqrt();
        let m1 = (kmax / (2.0 * PI) * norm2(a1).sqrt()).ceil() as i64 + 1;
        let m2 = (kmax / (2.0 * PI) * norm2(a2).sqrt()).ceil() as i64 + 1;
        let mut recip = Vec::new();
        for i in -m1..=m1 {
            for j in -m2..=m2 {
                // half plane: (i > 0) or (i == 0 and j > 0)
                if i < 0 || (i == 0 && j <= 0) {
                    continue;
                }
                let k = scale(add(scale(b1, i as f64), scale(b2, j as f64)), 2.0 * PI);
                let k2 = norm2(k);
                let c = (-k2 / (4.0 * alpha)).exp() / k2;
                if c >= TERM_CUTOFF * 1e-2 {
                    recip.push((i, j, k, c));
                }
            }
        }
        Ok(Self { a1, a2, b1, b2, alpha, images, recip, m1, m2 })
    }

    pub fn lattice(&self) -> (P2, P2) {
        (self.a1, self.a2)
    }

    pub fn dual(&self) -> (P2, P2) {
        (self.b1, self.b2)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Wave vector `2π(k₁b₁ + k₂b₂)`.
    pub fn wave_vector(&self, k: [i32; 2]) -> P2 {
        scale(add(scale(self.b1, k[0] as f64), scale(self.b2, k[1] as f64)), 2.0 * PI)
    }

    /// The image of `d` nearest to the origin, and the lattice vector removed.
    pub fn reduce(&self, d: P2) -> (P2, P2) {
        let c1 = dot(d, self.b1).round();
        let c2 = dot(d, self.b2).round();
        let mut best = (f64::INFINITY, d, [0.0, 0.0]);
        for i in -1..=1 {
            for j in -1..=1 {
                let l = add(scale(self.a1, c1 + i as f64), scale(self.a2, c2 + j as f64));
                let r = sub(d, l);
                let n = norm2(r);
                if n < best.0 - 1e-15 {
                    best = (n, r, l);
                }
            }
        }
        (best.1, best.2)
    }

    /// `e^{i k₁θ₁}` for `k₁ ∈ 0..=m1` and `e^{i k₂θ₂}` for `k₂ ∈ −m2..=m2`,
    /// where `K·d = k₁θ₁ + k₂θ₂`.
    fn phases(&self, d: P2) -> (Vec<Phase>, Vec<Phase>) {
        let t1 = 2.0 * PI * dot(self.b1, d);
        let t2 = 2.0 * PI * dot(self.b2, d);
        let powers = |theta: f64, lo: i64, hi: i64| -> Vec<(f64, f64)> {
            (lo..=hi).map(|k| ((k as f64) * theta).sin_cos()).map(|(s, c)| (c, s)).collect()
        };
        (powers(t1, 0, self.m1), powers(t2, -self.m2, self.m2))
    }

    fn reciprocal_sum(&self, d: P2) -> f64 {
        let (p1, p2) = self.phases(d);
        let mut s = 0.0;
        for &(i, j, _, c) in &self.recip {
            let (c1, s1) = p1[i as usize];
            let (c2, s2) = p2[(j + self.m2) as usize];
            s += c * (c1 * c2 - s1 * s2);
        }
        2.0 * s
    }

    fn reciprocal_grad(&self, d: P2) -> P2 {
        let (p1, p2) = self.phases(d);
        let mut g = [0.0, 0.0];
        for &(i, j, k, c) in &self.recip {
            let (c1, s1) = p1[i as usize];
            let (c2, s2) = p2[(j + self.m2) as usize];
            let s = -2.0 * c * (s1 * c2 + c1 * s2);
            g[0] += s * k[0];
            g[1] += s * k[1];
        }
        g
    }

    fn image_sum(&self, d: P2) -> f64 {
        let mut s = 0.0;
        for l in &self.images {
            let z = self.alpha * norm2(add(d, *l));
            if z < 36.0 {
                s += e1(z);
            }
        }
        s / (4.0 * PI)
    }

    fn image_grad(&self, d: P2) -> P2 {
        let mut g = [0.0, 0.0];
        for l in &self.images {
            let x = add(d, *l);
            let r2 = norm2(x);
            let z = self.alpha * r2;
            if z < 36.0 {
                let f = -(-z).exp() / (2.0 * PI * r2);
                g[0] += f * x[0];
                g[1] += f * x[1];
            }
        }
        g
    }

    /// `γ̂(d)`: Green's function with `−(1/2π) log|d|` removed, for `d` in
    /// the Voronoi cell of the origin.
    fn gamma_central(&self, d: P2) -> f64 {
        let z = self.alpha * norm2(d);
        (ein(z) - EULER_GAMMA - self.alpha.ln()) / (4.0 * PI) + self.image_sum(d) + self.reciprocal_sum(d)
            - 1.0 / (4.0 * self.alpha)
    }

    fn gamma_central_grad(&self, d: P2) -> P2 {
        let r2 = norm2(d);
        let z = self.alpha * r2;
        // d/dd [Ein(α|d|²)/(4π)] = (1 − e^{−z})/(2π r²)·d, → α d/(2π) as d → 0
        let f = if z < 1e-8 { self.alpha * (1.0 - 0.5 * z) / (2.0 * PI) } else { -(-z).exp_m1() / (2.0 * PI * r2) };
        let gi = self.image_grad(d);
        let gk = self.reciprocal_grad(d);
        [f * d[0] + gi[0] + gk[0], f * d[1] + gi[1] + gk[1]]
    }

    /// `G(x, y)`; rejects points that coincide modulo the lattice.
    pub fn green(&self, x: P2, y: P2) -> Result<f64, TorusError> {
        let (d, _) = self.reduce(sub(x, y));
        let r2 = norm2(d);
        if r2 < COINCIDENT_TOL * COINCIDENT_TOL {
            return Err(TorusError::Coincident);
        }
        Ok(self.green_reduced(d))
    }

    fn green_reduced(&self, d: P2) -> f64 {
        let z = self.alpha * norm2(d);
        e1(z) / (4.0 * PI) + self.image_sum(d) + self.reciprocal_sum(d) - 1.0 / (4.0 * self.alpha)
    }

    /// `∇ₓG(x, y)`.
    pub fn green_gradient(&self, x: P2, y: P2) -> Result<P2, TorusError> {
        let (d, _) = self.reduce(sub(x, y));
        let r2 = norm2(d);
        if r2 < COINCIDENT_TOL * COINCIDENT_TOL {
            return Err(TorusError::Coincident);
        }
        let g = self.gamma_central_grad(d);
        Ok([g[0] - d[0] / (2.0 * PI * r2), g[1] - d[1] / (2.0 * PI * r2)])
    }

    /// Regular part `γ(x, y) = G(x, y) + (1/2π) log|x − y|`, continuous at
    /// `x = y`. When `x − y` is not the nearest image the literal Euclidean
    /// distance is used in the logarithm.
    pub fn gamma_reg(&self, x: P2, y: P2) -> f64 {
        let d = sub(x, y);
        let (dr, l) = self.reduce(d);
        let base = self.gamma_central(dr);
        if l == [0.0, 0.0] || norm2(dr) == 0.0 {
            base
        } else {
            base + (norm2(d).ln() - norm2(dr).ln()) / (4.0 * PI)
        }
    }

    /// `∇ₓγ(x, y)` for `x − y` in the nearest-image cell.
    pub fn grad_gamma(&self, x: P2, y: P2) -> P2 {
        let d = sub(x, y);
        let (dr, l) = self.reduce(d);
        let g = self.gamma_central_grad(dr);
        if l == [0.0, 0.0] || norm2(dr) == 0.0 {
            g
        } else {
            let (a, b) = (norm2(d), norm2(dr));
            [g[0] + (d[0] / a - dr[0] / b) / (2.0 * PI), g[1] + (d[1] / a - dr[1] / b) / (2.0 * PI)]
        }
    }

    /// `∇₁γ(p, p)`: derivative in the first argument on the diagonal.
    pub fn grad1_gamma(&self, _p: P2) -> P2 {
        self.gamma_central_grad([0.0, 0.0])
    }

    /// `γ(p, p)`; the same for every `p`.
    pub fn gamma_diagonal(&self) -> f64 {
        self.gamma_central([0.0, 0.0])
    }

    /// `∫_Ω G(x, y) dx` over the cell centered at `y`.
    pub fn mean_value(&self, y: P2) -> f64 {
        let cell = CellPolar::new(self, y);
        cell.integrate(0.0, 2.0 * PI, 1e-10, Schedule::default(), |r, dir| {
            let d = scale(dir, r);
            (self.gamma_central(d) - r.ln() / (2.0 * PI)) * r
        })
    }

    /// Numerical Fourier coefficients `∫_Ω G(d) cos(K·d) dd` next to the
    /// exact value `1/|K|²`.
    pub fn spectral_coefficients(&self, ks: &[[i32; 2]]) -> Vec<SpectralCoefficient> {
        let cell = CellPolar::new(self, [0.0, 0.0]);
        ks.iter()
            .map(|&k| {
                let kv = self.wave_vector(k);
                let computed = cell.integrate(0.0, 2.0 * PI, 1e-10, Schedule::default(), |r, dir| {
                    let d = scale(dir, r);
                    (self.gamma_central(d) - r.ln() / (2.0 * PI)) * dot(kv, d).cos() * r
                });
                let k2 = norm2(kv);
                let expected = if k2 == 0.0 { 0.0 } else { 1.0 / k2 };
                SpectralCoefficient { k, computed, expected, laplacian_coefficient: computed * k2 }
            })
            .collect()
    }
}

/// One Fourier coefficient of `G`; `laplacian_coefficient` should be 1 for
/// every nonzero wave vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralCoefficient {
    pub k: [i32; 2],
    pub computed: f64,
    pub expected: f64,
    pub laplacian_coefficient: f64,
}

/// Polar quadrature over the fundamental parallelogram centered at a point.
///
/// Angular panels are split at the vertex directions so that the boundary
/// distance `R(θ)` is smooth on each; radial panels are geometric (ratio 2)
/// from the inner radius outward.
struct CellPolar {
    center: P2,
    /// `(unit normal, distance)` of the four edges.
    edges: [(P2, f64); 4],
    vertex_angles: Vec<f64>,
    angular: GaussLegendre,
    radial: GaussLegendre,
}

const ANGULAR_SUBPANELS: usize = 6;

impl CellPolar {
    fn new(tg: &TorusGreen, center: P2) -> Self {
        let (a1, a2) = (tg.a1, tg.a2);
        let mut edges = [([0.0, 0.0], 0.0); 4];
        for (e, (v, w)) in [(a1, a2), (a2, a1)].into_iter().enumerate() {
            // edges ±w/2 + s·v: normal ⟂ v
            let nv = norm2(v).sqrt();
            let mut nrm = [-v[1] / nv, v[0] / nv];
            if dot(nrm, w) < 0.0 {
                nrm = scale(nrm, -1.0);
            }
            let dist = 0.5 * dot(nrm, w);
            edges[2 * e] = (nrm, dist);
            edges[2 * e + 1] = (scale(nrm, -1.0), dist);
        }
        let mut vertex_angles: Vec<f64> = [
            add(scale(a1, 0.5), scale(a2, 0.5)),
            add(scale(a1, 0.5), scale(a2, -0.5)),
            add(scale(a1, -0.5), scale(a2, 0.5)),
            add(scale(a1, -0.5), scale(a2, -0.5)),
        ]
        .iter()
        .map(|v| v[1].atan2(v[0]).rem_euclid(2.0 * PI))
        .collect();
        vertex_angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Self {
            center,
            edges,
            vertex_angles,
            angular: GaussLegendre::new(16),
            radial: GaussLegendre::new(16),
        }
    }

    /// Distance from the center to the boundary along `dir`.
    fn boundary(&self, dir: P2) -> f64 {
        self.edges
            .iter()
            .filter_map(|(nrm, dist)| {
                let c = dot(*nrm, dir);
                (c > 1e-15).then(|| dist / c)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Angular nodes `(θ, weight)` on `[lo, hi]`, split at vertex angles.
    fn angular_nodes(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let mut cuts = vec![lo];
        for &v in &self.vertex_angles {
            for shift in [-2.0 * PI, 0.0, 2.0 * PI] {
                let a = v + shift;
                if a > lo + 1e-14 && a < hi - 1e-14 {
                    cuts.push(a);
                }
            }
        }
        cuts.push(hi);
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut nodes = Vec::new();
        for w in cuts.windows(2) {
            let step = (w[1] - w[0]) / ANGULAR_SUBPANELS as f64;
            for s in 0..ANGULAR_SUBPANELS {
                let a = w[0] + step * s as f64;
                nodes.extend(self.angular.mapped(a, a + step));
            }
        }
        nodes
    }

    /// Geometric radial panels from `r_lo` (or a tiny floor when 0) to `r_hi`.
    fn radial_panels(r_lo: f64, r_hi: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut hi = r_hi;
        let floor = r_lo.max(1e-14 * r_hi);
        while hi > floor {
            let lo = (0.5 * hi).max(floor);
            let lo = if lo < floor * 1.5 { floor } else { lo };
            out.push((lo, hi));
            hi = lo;
        }
        out.reverse();
        out
    }

    /// `∫_{θ∈[lo,hi]} ∫_{r_lo}^{R(θ)} f(r, e_θ) dr dθ` (the caller includes
    /// the Jacobian `r` in `f`). When `r_lo = 0` the radial range starts at
    /// `r_floor·R(θ)`.
    fn integrate<F>(&self, lo: f64, hi: f64, r_floor: f64, schedule: Schedule, f: F) -> f64
    where
        F: Fn(f64, P2) -> f64 + Sync,
    {
        let nodes = self.angular_nodes(lo, hi);
        let per_angle = exec::map_with(schedule, &nodes, |&(theta, w)| {
            let dir = [theta.cos(), theta.sin()];
            let rb = self.boundary(dir);
            let r_lo = if r_floor > 0.0 && r_floor < 1.0 { r_floor * rb } else { 0.0 };
            let mut s = 0.0;
            for (a, b) in Self::radial_panels(r_lo, rb) {
                for (r, wr) in self.radial.mapped(a, b) {
                    s += wr * f(r, dir);
                }
            }
            w * s
        });
        exec::ordered_sum(&per_angle)
    }

    /// Like [`Self::integrate`] with an absolute inner radius `r_in`.
    fn integrate_from<F>(&self, lo: f64, hi: f64, r_in: f64, schedule: Schedule, f: F) -> f64
    where
        F: Fn(f64, P2) -> f64 + Sync,
    {
        let nodes = self.angular_nodes(lo, hi);
        let per_angle = exec::map_with(schedule, &nodes, |&(theta, w)| {
            let dir = [theta.cos(), theta.sin()];
            let rb = self.boundary(dir);
            let mut s = 0.0;
            for (a, b) in Self::radial_panels(r_in, rb) {
                for (r, wr) in self.radial.mapped(a, b) {
                    s += wr * f(r, dir);
                }
            }
            w * s
        });
        exec::ordered_sum(&per_angle)
    }

    fn point(&self, r: f64, dir: P2) -> P2 {
        add(self.center, scale(dir, r))
    }
}

/// One term `c·cos(K·x) + s·sin(K·x)` of a Fourier series on the torus,
/// with `K = 2π(k₁b₁ + k₂b₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierTerm {
    pub k: [i32; 2],
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// Smooth periodic function given as a finite Fourier series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusFunction {
    pub constant: f64,
    #[serde(default)]
    pub terms: Vec<FourierTerm>,
}

impl TorusFunction {
    pub fn constant(c: f64) -> Self {
        Self { constant: c, terms: Vec::new() }
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn with_term(mut self, k: [i32; 2], cos: f64, sin: f64) -> Self {
        self.terms.push(FourierTerm { k, cos, sin });
        self
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.cos == 0.0 && t.sin == 0.0)
    }

    pub fn value(&self, tg: &TorusGreen, x: P2) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|t| {
                    let ph = dot(tg.wave_vector(t.k), x);
                    t.cos * ph.cos() + t.sin * ph.sin()
                })
                .sum::<f64>()
    }

    pub fn gradient(&self, tg: &TorusGreen, x: P2) -> P2 {
        let mut g = [0.0, 0.0];
        for t in &self.terms {
            let k = tg.wave_vector(t.k);
            let ph = dot(k, x);
            let s = -t.cos * ph.sin() + t.sin * ph.cos();
            g[0] += s * k[0];
            g[1] += s * k[1];
        }
        g
    }

    pub fn laplacian(&self, tg: &TorusGreen, x: P2) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let k = tg.wave_vector(t.k);
                let ph = dot(k, x);
                -norm2(k) * (t.cos * ph.cos() + t.sin * ph.sin())
            })
            .sum()
    }

    /// `∇ log h`.
    pub fn log_gradient(&self, tg: &TorusGreen, x: P2) -> P2 {
        let h = self.value(tg, x);
        scale(self.gradient(tg, x), 1.0 / h)
    }

    /// `Δ log h = Δh/h − |∇h|²/h²`.
    pub fn log_laplacian(&self, tg: &TorusGreen, x: P2) -> f64 {
        let h = self.value(tg, x);
        let g = self.gradient(tg, x);
        self.laplacian(tg, x) / h - norm2(g) / (h * h)
    }

    /// Samples `h` on a `samples × samples` grid of the cell; returns the
    /// minimum or an error at the first nonpositive value.
    pub fn check_positive(&self, tg: &TorusGreen, samples: usize) -> Result<f64, TorusError> {
        let mut min = f64::INFINITY;
        let s = samples.max(1);
        for i in 0..s {
            for j in 0..s {
                let x = add(scale(tg.a1, i as f64 / s as f64), scale(tg.a2, j as f64 / s as f64));
                let v = self.value(tg, x);
                if !(v > 0.0) {
                    return Err(TorusError::NonPositive { x, value: v });
                }
                min = min.min(v);
            }
        }
        Ok(min)
    }
}

/// Data for one tail coefficient.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCoefficientInput {
    pub m: f64,
    pub p: P2,
    pub h: TorusFunction,
}

impl TailCoefficientInput {
    pub fn new(m: f64, p: P2, h: TorusFunction) -> Self {
        Self { m, p, h }
    }
}

/// `H(x, p) = h(x)/h(p)·e^{2πm(γ(x,p) − γ(p,p))} − 1`.
pub fn h_factor(inp: &TailCoefficientInput, tg: &TorusGreen, x: P2) -> f64 {
    let hp = inp.h.value(tg, inp.p);
    let ratio = inp.h.value(tg, x) / hp;
    let expo = 2.0 * PI * inp.m * (tg.gamma_reg(x, inp.p) - tg.gamma_diagonal());
    (expo + ratio.ln()).exp_m1()
}

/// One row of the excision-radius table of the direct route.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaRow {
    pub delta: f64,
    pub raw: f64,
    /// Two-point extrapolation with the previous (coarser) row.
    pub extrapolated: Option<f64>,
}

/// Both routes to `D`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCoefficientReport {
    pub m: f64,
    pub p: P2,
    /// Excision route, extrapolated in the excision radius.
    pub route_a: f64,
    /// Exterior-compensation route.
    pub route_b: f64,
    pub relative_difference: f64,
    pub table: Vec<DeltaRow>,
    /// Spread of the extrapolated values in the table.
    pub plateau_spread: f64,
}

impl TailCoefficientReport {
    pub fn value(&self) -> f64 {
        self.route_b
    }
}

/// `D` by both routes; errors when they disagree beyond [`ROUTE_TOL`].
pub fn tail_coefficient(inp: &TailCoefficientInput, tg: &TorusGreen) -> Result<TailCoefficientReport, TorusError> {
    tail_coefficient_with(inp, tg, Schedule::default())
}

pub fn tail_coefficient_with(
    inp: &TailCoefficientInput,
    tg: &TorusGreen,
    schedule: Schedule,
) -> Result<TailCoefficientReport, TorusError> {
    let m = inp.m;
    if !(m > 2.0 && m < M_UPPER) {
        return Err(TorusError::MOutOfRange(m));
    }
    if inp.p.iter().any(|v| !v.is_finite()) {
        return Err(TorusError::InvalidInput("p must be finite".into()));
    }
    inp.h.check_positive(tg, 32)?;
    let cell = CellPolar::new(tg, inp.p);
    let hp = inp.h.value(tg, inp.p);
    let g0 = tg.gamma_diagonal();
    let k = (m - 2.0) / (2.0 * PI);

    // log of h(x)/h(p)·e^{2πm(γ̂(d) − γ̂(0))} along a ray
    let log_weight = |r: f64, dir: P2| -> f64 {
        let d = scale(dir, r);
        let x = cell.point(r, dir);
        (inp.h.value(tg, x) / hp).ln() + 2.0 * PI * m * (tg.gamma_central(d) - g0)
    };

    // route A
    let mut table: Vec<DeltaRow> = Vec::with_capacity(DELTAS.len());
    for (idx, &delta) in DELTAS.iter().enumerate() {
        let integral = cell.integrate_from(0.0, 2.0 * PI, delta, schedule, |r, dir| {
            log_weight(r, dir).exp() * r.powf(1.0 - m)
        });
        let raw = delta.powf(2.0 - m) - k * integral;
        let extrapolated = (idx > 0).then(|| richardson(table[idx - 1].raw, raw, 2.0, 4.0 - m));
        table.push(DeltaRow { delta, raw, extrapolated });
    }
    let extrapolated: Vec<f64> = table.iter().filter_map(|r| r.extrapolated).collect();
    let route_a = *extrapolated.last().unwrap();
    let plateau_spread = extrapolated.iter().fold(0.0f64, |s, v| s.max((v - route_a).abs()));

    // route B: symmetrized H over opposite rays, Taylor model inside INNER_RADIUS
    let sym = |r: f64, dir: P2| -> f64 {
        log_weight(r, dir).exp_m1() + log_weight(r, scale(dir, -1.0)).exp_m1()
    };
    let exterior = cell.integrate_angular(0.0, 2.0 * PI, schedule, |rb| rb.powf(2.0 - m) / (m - 2.0));
    let rc = INNER_RADIUS;
    let inner = cell.integrate_angular_dir(0.0, PI, schedule, |dir| {
        let q = sym(rc, dir) / (rc * rc);
        q * rc.powf(4.0 - m) / (4.0 - m)
    });
    let outer = cell.integrate_from(0.0, PI, rc, schedule, |r, dir| sym(r, dir) * r.powf(1.0 - m));
    let route_b = k * (exterior - inner - outer);

    let relative_difference = (route_a - route_b).abs() / route_b.abs().max(f64::MIN_POSITIVE);
    if !(relative_difference <= ROUTE_TOL) {
        return Err(TorusError::RouteDisagreement { route_a, route_b, relative: relative_difference });
    }
    Ok(TailCoefficientReport {
        m,
        p: inp.p,
        route_a,
        route_b,
        relative_difference,
        table,
        plateau_spread,
    })
}

impl CellPolar {
    /// `∫ g(R(θ)) dθ`.
    fn integrate_angular<F>(&self, lo: f64, hi: f64, schedule: Schedule, g: F) -> f64
    where
        F: Fn(f64) -> f64 + Sync,
    {
        let nodes = self.angular_nodes(lo, hi);
        let vals = exec::map_with(schedule, &nodes, |&(theta, w)| w * g(self.boundary([theta.cos(), theta.sin()])));
        exec::ordered_sum(&vals)
    }

    /// `∫ g(e_θ) dθ`.
    fn integrate_angular_dir<F>(&self, lo: f64, hi: f64, schedule: Schedule, g: F) -> f64
    where
        F: Fn(P2) -> f64 + Sync,
    {
        let nodes = self.angular_nodes(lo, hi);
        let vals = exec::map_with(schedule, &nodes, |&(theta, w)| w * g([theta.cos(), theta.sin()]));
        exec::ordered_sum(&vals)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_unit_area() {
        assert_eq!(TorusGreen::new([2.0, 0.0], [0.0, 1.0]).unwrap_err(), TorusError::AreaNotUnit(2.0));
        assert!(TorusGreen::new([1.0, 0.0], [0.5, 1.0]).is_ok());
    }

    #[test]
    fn symmetric_and_periodic() {
        let tg = TorusGreen::unit_square();
        let x = [0.13, 0.71];
        let y = [0.52, 0.08];
        let g = tg.green(x, y).unwrap();
        assert!((g - tg.green(y, x).unwrap()).abs() < 1e-12);
        assert!((g - tg.green([x[0] + 1.0, x[1]], y).unwrap()).abs() < 1e-12);
        assert!((g - tg.green([x[0], x[1] - 3.0], y).unwrap()).abs() < 1e-12);
        assert_eq!(tg.green(x, [x[0] + 1.0, x[1]]), Err(TorusError::Coincident));
    }

    #[test]
    fn ewald_independence() {
        let a = TorusGreen::unit_square();
        let b = TorusGreen::with_alpha([1.0, 0.0], [0.0, 1.0], 2.0 * PI).unwrap();
        let c = TorusGreen::with_alpha([1.0, 0.0], [0.0, 1.0], 0.5 * PI).unwrap();
        for x in [[0.1, 0.2], [0.5, 0.5], [0.01, -0.003], [0.33, 0.9]] {
            let g = a.green(x, [0.0, 0.0]).unwrap();
            assert!((g - b.green(x, [0.0, 0.0]).unwrap()).abs() < 1e-10);
            assert!((g - c.green(x, [0.0, 0.0]).unwrap()).abs() < 1e-10);
        }
        assert!((a.gamma_diagonal() - b.gamma_diagonal()).abs() < 1e-10);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let tg = TorusGreen::with_alpha([1.0, 0.0], [0.3, 1.0], 2.0).unwrap();
        let y = [0.2, 0.4];
        for x in [[0.25, 0.41], [0.6, 0.1], [0.9, 0.95]] {
            let g = tg.grad_gamma(x, y);
            let h = 1e-5;
            let fx = (tg.gamma_reg([x[0] + h, x[1]], y) - tg.gamma_reg([x[0] - h, x[1]], y)) / (2.0 * h);
            let fy = (tg.gamma_reg([x[0], x[1] + h], y) - tg.gamma_reg([x[0], x[1] - h], y)) / (2.0 * h);
            assert!((g[0] - fx).abs() < 1e-6 && (g[1] - fy).abs() < 1e-6);
        }
        let d = tg.grad1_gamma([0.4, 0.7]);
        assert!(d[0].abs() < 1e-10 && d[1].abs() < 1e-10);
    }

    #[test]
    fn h_factor_basics() {
        let tg = TorusGreen::unit_square();
        let inp = TailCoefficientInput::new(3.0, [0.5, 0.5], TorusFunction::one().with_term([1, 0], 0.2, 0.0));
        assert_eq!(h_factor(&inp, &tg, [0.5, 0.5]), 0.0);
        assert!(h_factor(&inp, &tg, [0.1, 0.9]) > -1.0);
    }

    #[test]
    fn fourier_derivatives() {
        let tg = TorusGreen::with_alpha([1.0, 0.0], [0.3, 1.0], 2.0).unwrap();
        let h = TorusFunction::one().with_term([1, 0], 0.2, 0.1).with_term([1, -2], 0.0, 0.05);
        let x = [0.31, 0.77];
        let e = 1e-5;
        let g = h.gradient(&tg, x);
        let fx = (h.value(&tg, [x[0] + e, x[1]]) - h.value(&tg, [x[0] - e, x[1]])) / (2.0 * e);
        assert!((g[0] - fx).abs() < 1e-8);
        let e = 1e-4;
        let lap = (h.value(&tg, [x[0] + e, x[1]])
            + h.value(&tg, [x[0] - e, x[1]])
            + h.value(&tg, [x[0], x[1] + e])
            + h.value(&tg, [x[0], x[1] - e])
            - 4.0 * h.value(&tg, x))
            / (e * e);
        assert!((h.laplacian(&tg, x) - lap).abs() < 1e-5);
        assert!(h.check_positive(&tg, 16).unwrap() > 0.0);
        assert!(TorusFunction::constant(-1.0).check_positive(&tg, 4).is_err());
    }
}
