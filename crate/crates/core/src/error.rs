use crate::fem::FemError;
use crate::linalg::{DenseVector, LinalgError};
use crate::neural::NeuralError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("training diverged at epoch {epoch}: mean loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("iterative refinement stopped after {iterations} iterations at relative residual {relative_residual:e}")]
    NonConvergence {
        iterations: usize,
        relative_residual: f64,
        best: DenseVector,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown problem family '{0}' (expected convdiff, truss23, building_beam or rotor_bearing)")]
    UnknownFamily(String),
    #[error("invalid distribution: {0}")]
    Distribution(String),
    #[error("need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("ensemble has zero spread; skewness and kurtosis are undefined")]
    DegenerateEnsemble,
    #[error("sample {index}: {source}")]
    Sample { index: usize, source: Box<Error> },
}

impl Error {
    /// Divergence, singular systems and failed refinement, as opposed to
    /// configuration or usage errors.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Divergence { .. } | Error::NonConvergence { .. } | Error::DegenerateEnsemble => true,
            Error::Linalg(LinalgError::Singular { .. } | LinalgError::NotPositiveDefinite { .. }) => true,
            Error::Fem(FemError::Mechanism(_) | FemError::Linalg(LinalgError::Singular { .. })) => true,
            Error::Sample { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
