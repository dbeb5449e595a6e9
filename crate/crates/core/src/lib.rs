//! Numerical toolkit for the Liouville system
//!
//! ```text
//!     -Δu_i = Σ_j a_ij h_j e^{u_j}   in ℝ²,   i = 1..n
//! ```
//!
//! The crate computes entire radial solutions and their invariants (energies,
//! masses, decay exponents, asymptotic constants), checks the Pohozaev
//! identities they satisfy, classifies bounded kernels of the Fourier-mode
//! linearized systems, evaluates the flat-torus Green's function with its
//! regular part, and assembles the leading-order bubbling predictions for
//! parameters approaching the single-bubble critical hypersurface.
//!
//! Inner loops that are embarrassingly parallel (quadrature rays, parameter
//! sweeps, independent mode solves) go through [`exec`], which uses rayon when
//! the `parallel` feature is enabled and a plain iterator otherwise. Results
//! are bit-identical either way.

// Validation is written as `!(x > 0.0)` throughout so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the component formulas they implement.
#![allow(clippy::needless_range_loop)]

pub mod algebra;
pub mod bubbling;
pub mod exec;
pub mod fit;
pub mod linearized;
pub mod ode;
pub mod quadrature;
pub mod radial;
pub mod special;
pub mod table;
pub mod torus_green;

pub use algebra::{CouplingMatrix, Gamma1Report, H1Report, H2Report, RhoVector};
pub use bubbling::{BubbleScenario, LeadingTermReport, Regime};
pub use linearized::{ModeSolution, ModeSystem};
pub use radial::{EnergySummary, RadialOptions, RadialProfile};
pub use torus_green::{TailCoefficientInput, TorusFunction, TorusGreen};

/// Version tag carried by every JSON document the toolkit emits.
pub const SCHEMA: &str = "liouville-lab/1";
