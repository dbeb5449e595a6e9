use std::process::ExitCode;

use liouville_core::bubbling::BubblingError;
use liouville_core::fit::FitError;
use liouville_core::linearized::LinearizedError;
use liouville_core::radial::RadialError;
use liouville_core::torus_green::TorusError;
use liouville_core::algebra::AlgebraError;
use thiserror::Error;

/// Every failure the front end reports, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Exit 1: inputs parsed but a hypothesis or validation check failed.
    #[error("validation failure: {0}")]
    Validation(String),
    /// Exit 2: unreadable or malformed configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// Exit 3: a numerical method failed.
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Validation(_) => 1,
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Numeric(_) => 3,
        })
    }
}

impl From<AlgebraError> for CliError {
    fn from(e: AlgebraError) -> Self {
        match e {
            AlgebraError::Singular(_) | AlgebraError::QNotPositive(_) | AlgebraError::QNotInGamma1 { .. } => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<RadialError> for CliError {
    fn from(e: RadialError) -> Self {
        match e {
            RadialError::Algebra(a) => a.into(),
            RadialError::InvalidInput(_) => CliError::Config(e.to_string()),
            RadialError::OffQuadric(_) | RadialError::TargetNotIntegrable(_) => CliError::Validation(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<LinearizedError> for CliError {
    fn from(e: LinearizedError) -> Self {
        match e {
            LinearizedError::Radial(r) => r.into(),
            LinearizedError::InvalidInput(_) => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<TorusError> for CliError {
    fn from(e: TorusError) -> Self {
        match e {
            TorusError::RouteDisagreement { .. } => CliError::Validation(e.to_string()),
            TorusError::Coincident => CliError::Numeric(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::Degenerate => CliError::Numeric(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<BubblingError> for CliError {
    fn from(e: BubblingError) -> Self {
        match e {
            BubblingError::Algebra(a) => a.into(),
            BubblingError::Radial(r) => r.into(),
            BubblingError::Torus(t) => t.into(),
            BubblingError::Fit(f) => f.into(),
            BubblingError::NotOnGamma1 { .. }
            | BubblingError::OffQuadric(_)
            | BubblingError::RegimeUndetermined(_)
            | BubblingError::RegimeMismatch { .. }
            | BubblingError::MixedSign { .. } => CliError::Validation(e.to_string()),
            BubblingError::InvalidEps(_) | BubblingError::Geometry(_) | BubblingError::Length { .. } => {
                CliError::Config(e.to_string())
            }
            BubblingError::LocationDiverged { .. } | BubblingError::SingularJacobian(_) => {
                CliError::Numeric(e.to_string())
            }
        }
    }
}
