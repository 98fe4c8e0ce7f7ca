use std::io;

/// Errors produced by the reduced-order modeling pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("malformed snapshot file: {0}")]
    Format(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("reduced operator is not diagonalizable (eigenvector condition number {cond:.3e})")]
    DefectiveOperator { cond: f64 },

    #[error("invalid window size {0}, need at least 2 snapshots per window")]
    InvalidWindow(usize),

    #[error("window {index}: {source}")]
    Window {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("density has near-zero mass ({mass:.3e})")]
    DegenerateDensity { mass: f64 },

    #[error("moving grid axis {axis} is not strictly increasing")]
    MeshTangled { axis: usize },

    #[error("unstable time stepping at step {step}: {reason}")]
    Stability { step: usize, reason: String },

    #[error("pressure solve did not converge after {iterations} iterations (residual {residual:.3e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("appended column lies in the range of the existing columns (residual norm² {residual:.3e})")]
    RankCollapse { residual: f64 },

    #[error("non-finite coefficient sample at t = {t}")]
    InvalidCoefficient { t: f64 },

    #[error("reference solution has zero norm")]
    DegenerateReference,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn in_window(self, index: usize) -> Self {
        Error::Window {
            index,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping window and stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Window { source, .. } | Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
