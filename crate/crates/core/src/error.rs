use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite value in {context} at coordinate {coordinate}")]
    Evaluation {
        context: &'static str,
        coordinate: usize,
    },

    #[error("flow diverged at step {step} (t = {time:.6} s)")]
    Divergence { step: usize, time: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),

    #[error("QP solver failure: {0}")]
    Solver(String),

    #[error("value iteration blew up at step {step}: {detail}")]
    Cfl { step: usize, detail: String },

    #[error("grid geometry mismatch: {0}")]
    Geometry(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("simulation aborted at step {step}: {source}")]
    Simulation {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Whether the failure comes from bad input rather than from the numerics.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Dimension { .. }
            | Error::InvalidParameter(_)
            | Error::UnknownBenchmark(_)
            | Error::Geometry(_)
            | Error::Parse { .. }
            | Error::Io { .. }
            | Error::Json { .. } => true,
            Error::Simulation { source, .. } => source.is_validation(),
            _ => false,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Returns the first non-finite coordinate of `values`, if any.
pub(crate) fn check_finite(values: &[f64], context: &'static str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(coordinate) => Err(Error::Evaluation {
            context,
            coordinate,
        }),
        None => Ok(()),
    }
}
