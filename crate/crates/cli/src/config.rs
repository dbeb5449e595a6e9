//! TOML run configurations. Every command accepts `--config FILE`; fields
//! left out take the documented defaults, and command-line flags override
//! the file. The resolved configuration is echoed into the JSON output.

use std::f64::consts::PI;
use std::path::Path;

use liouville_core::torus_green::TorusFunction;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub type P2 = [f64; 2];

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {v}")))
    }
}

/// Parameter vector given directly or in units of π.
fn resolve_rho(rho: &Option<Vec<f64>>, rho_over_pi: &Option<Vec<f64>>) -> Result<Option<Vec<f64>>, CliError> {
    match (rho, rho_over_pi) {
        (Some(_), Some(_)) => Err(CliError::Config("give either rho or rho_over_pi, not both".into())),
        (Some(r), None) => Ok(Some(r.clone())),
        (None, Some(r)) => Ok(Some(r.iter().map(|v| v * PI).collect())),
        (None, None) => Ok(None),
    }
}

/// `check-matrix`.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    pub matrix: Vec<Vec<f64>>,
    pub rho: Option<Vec<f64>>,
    pub rho_over_pi: Option<Vec<f64>>,
}

impl MatrixConfig {
    pub fn resolve(mut self) -> Result<Self, CliError> {
        if self.matrix.is_empty() {
            return Err(CliError::Config("matrix is required".into()));
        }
        self.rho = resolve_rho(&self.rho, &self.rho_over_pi)?;
        self.rho_over_pi = None;
        Ok(self)
    }
}

/// `solve-entire`, `pohozaev-check` and `kernel`.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    /// Defaults to the scalar equation `a = 1`.
    pub matrix: Option<Vec<Vec<f64>>>,
    /// Weights `h_i(0)`; default all ones.
    pub h: Option<Vec<f64>>,
    /// Center values `u_i(0)`; default all zeros.
    pub u0: Option<Vec<f64>>,
    /// Prescribed energies; switches to shooting in the gauge `u_1(0) = 0`.
    pub target_sigma: Option<Vec<f64>>,
    pub r_max: Option<f64>,
    pub tol: Option<f64>,
    /// Energy tolerance of the shooting.
    pub shoot_tol: Option<f64>,
    /// Largest Fourier mode probed by `kernel`.
    pub max_mode: Option<u32>,
}

/// Command-line overrides shared by the profile commands.
#[derive(Debug, Clone, Default)]
pub struct ProfileOverrides {
    pub r_max: Option<f64>,
    pub tol: Option<f64>,
    pub target_sigma: Option<Vec<f64>>,
    pub max_mode: Option<u32>,
}

impl ProfileConfig {
    pub fn resolve(mut self, o: ProfileOverrides) -> Result<Self, CliError> {
        let matrix = self.matrix.take().unwrap_or_else(|| vec![vec![1.0]]);
        let n = matrix.len();
        self.h = Some(self.h.take().unwrap_or_else(|| vec![1.0; n]));
        self.u0 = Some(self.u0.take().unwrap_or_else(|| vec![0.0; n]));
        self.matrix = Some(matrix);
        self.r_max = Some(positive("r_max", o.r_max.or(self.r_max).unwrap_or(1e4))?);
        self.tol = Some(positive("tol", o.tol.or(self.tol).unwrap_or(1e-10))?);
        self.shoot_tol = Some(positive("shoot_tol", self.shoot_tol.unwrap_or(1e-8))?);
        if o.target_sigma.is_some() {
            self.target_sigma = o.target_sigma;
        }
        self.max_mode = Some(o.max_mode.or(self.max_mode).unwrap_or(3));
        Ok(self)
    }
}

/// Tail-coefficient request inside `green-torus`.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TailConfig {
    pub m: Vec<f64>,
    #[serde(default)]
    pub p: P2,
    pub h: Option<TorusFunction>,
}

/// `green-torus`.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TorusConfig {
    /// Lattice vectors; default the unit square.
    pub lattice: Option<[P2; 2]>,
    pub alpha: Option<f64>,
    /// Point pairs `[x, y]` at which to evaluate `G` and `γ`.
    #[serde(default)]
    pub pairs: Vec<[P2; 2]>,
    pub tail: Option<TailConfig>,
}

impl TorusConfig {
    pub fn resolve(mut self) -> Result<Self, CliError> {
        self.lattice = Some(self.lattice.unwrap_or([[1.0, 0.0], [0.0, 1.0]]));
        self.alpha = Some(positive("alpha", self.alpha.unwrap_or(PI))?);
        if self.pairs.is_empty() {
            self.pairs = vec![[[0.13, 0.71], [0.52, 0.08]], [[0.3, 0.6], [0.3, 0.6]]];
        }
        if let Some(t) = self.tail.as_mut() {
            t.h = Some(t.h.take().unwrap_or_else(TorusFunction::one));
        }
        Ok(self)
    }
}

/// `leading-term`.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Output file stem.
    pub name: Option<String>,
    pub matrix: Vec<Vec<f64>>,
    pub rho: Option<Vec<f64>>,
    pub rho_over_pi: Option<Vec<f64>>,
    /// One weight function per component; default all ones.
    pub h: Option<Vec<TorusFunction>>,
    /// Blowup point.
    #[serde(default)]
    pub p: P2,
    pub lattice: Option<[P2; 2]>,
    pub alpha: Option<f64>,
    pub curvature: Option<f64>,
    pub eps_list: Option<Vec<f64>>,
    /// Optional approaching sequence, checked for one-signed differences.
    pub rho_sequence: Option<Vec<Vec<f64>>>,
    /// Seed for the blowup-location Newton solve.
    pub seed: Option<P2>,
    pub r_max: Option<f64>,
    pub tol: Option<f64>,
    pub shoot_tol: Option<f64>,
}

/// `10^{−2}` to `10^{−4}` in quarter decades.
pub fn default_eps_list() -> Vec<f64> {
    (0..9).map(|k| 10f64.powf(-2.0 - 0.25 * k as f64)).collect()
}

impl ScenarioConfig {
    pub fn resolve(mut self, eps: Option<Vec<f64>>, r_max: Option<f64>) -> Result<Self, CliError> {
        if self.matrix.is_empty() {
            return Err(CliError::Config("matrix is required".into()));
        }
        let n = self.matrix.len();
        self.name = Some(self.name.take().unwrap_or_else(|| "leading-term".into()));
        self.rho = resolve_rho(&self.rho, &self.rho_over_pi)?;
        self.rho_over_pi = None;
        if self.rho.is_none() {
            return Err(CliError::Config("rho (or rho_over_pi) is required".into()));
        }
        self.h = Some(self.h.take().unwrap_or_else(|| vec![TorusFunction::one(); n]));
        self.lattice = Some(self.lattice.unwrap_or([[1.0, 0.0], [0.0, 1.0]]));
        self.alpha = Some(positive("alpha", self.alpha.unwrap_or(PI))?);
        self.curvature = Some(self.curvature.unwrap_or(0.0));
        self.eps_list = Some(eps.or(self.eps_list.take()).unwrap_or_else(default_eps_list));
        self.r_max = Some(positive("r_max", r_max.or(self.r_max).unwrap_or(1e4))?);
        self.tol = Some(positive("tol", self.tol.unwrap_or(1e-10))?);
        self.shoot_tol = Some(positive("shoot_tol", self.shoot_tol.unwrap_or(1e-7))?);
        Ok(self)
    }
}

/// `order-fit` (when the series is not read from CSV).
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesConfig {
    /// `[eps, value]` pairs with eps decreasing.
    #[serde(default)]
    pub series: Vec<P2>,
    #[serde(default)]
    pub log_correction: bool,
}
