use std::path::PathBuf;

use cascade_core::params::SystemParams;
use thiserror::Error;

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;
pub const EXIT_INPUT: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{source}{}", context.as_ref().map(|c| format!(" (parameters: {c})")).unwrap_or_default())]
    Core { source: cascade_core::Error, context: Option<String> },
    #[error("{0} validation check(s) failed")]
    Validation(usize),
}

impl From<cascade_core::Error> for CliError {
    fn from(source: cascade_core::Error) -> Self {
        CliError::Core { source, context: None }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use cascade_core::Error as E;
        match self {
            CliError::Input(_) | CliError::Io { .. } => EXIT_INPUT,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Core { source, .. } => match source {
                E::InvalidParams(_)
                | E::DivergentCooperativity
                | E::MissingCavity
                | E::BelowThreshold { .. }
                | E::UnknownObservable(_)
                | E::Layout(_) => EXIT_INPUT,
                E::Truncation { .. }
                | E::SingularSolve(_)
                | E::StiffnessFailure { .. }
                | E::UnconvergedTail { .. }
                | E::InsufficientWindow { .. }
                | E::NoSwitchesDetected => EXIT_NUMERIC,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Attaches the offending parameter set to a core error.
pub trait WithParams<T> {
    fn with_params(self, p: &SystemParams) -> Result<T>;
}

impl<T> WithParams<T> for cascade_core::Result<T> {
    fn with_params(self, p: &SystemParams) -> Result<T> {
        self.map_err(|source| CliError::Core { source, context: Some(serde_json::to_string(p).unwrap_or_default()) })
    }
}
