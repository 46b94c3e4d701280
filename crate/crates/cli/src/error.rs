use std::process::ExitCode;

use funobs::observability::ObservabilityError;
use funobs::sim::SimError;
use funobs::synthesis::SynthesisError;
use funobs::system::SystemError;
use thiserror::Error;

/// Operational failures. Analysis verdicts are never errors.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable or malformed files, failed representation check.
    #[error("{0}")]
    Input(String),
    /// Non-Hurwitz poles without the override.
    #[error("{0}")]
    Unstable(String),
    /// The simulation stopped early; the truncated trace was written.
    #[error("simulation stopped early: {0}")]
    Diverged(String),
    /// Numerical or I/O failure not attributable to the input.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Input(_) => 2,
            CliError::Unstable(_) => 3,
            CliError::Diverged(_) => 4,
            CliError::Failed(_) => 1,
        })
    }

    pub fn input(msg: impl Into<String>) -> CliError {
        CliError::Input(msg.into())
    }
}

impl From<SystemError> for CliError {
    fn from(e: SystemError) -> Self {
        CliError::Input(format!("system: {e}"))
    }
}

impl From<SynthesisError> for CliError {
    fn from(e: SynthesisError) -> Self {
        use SynthesisError::*;
        match e {
            Unstable { .. } => CliError::Unstable(e.to_string()),
            NoPoles | NotConjugateClosed(_) | BadPole(_) | OrderMismatch { .. } | Dimension(_) | Parse(_) | Schema(_) => {
                CliError::Input(e.to_string())
            }
            Observability(inner) => inner.into(),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

impl From<ObservabilityError> for CliError {
    fn from(e: ObservabilityError) -> Self {
        use ObservabilityError::*;
        match e {
            Psi(_) | PsiParse { .. } | UnboundW { .. } | Schema(_) => CliError::Input(format!("representation: {e}")),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        use SimError::*;
        match e {
            BadStep(_) | BadHorizon { .. } | Dimension(_) | UnknownSymbol(_) => CliError::Input(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}
