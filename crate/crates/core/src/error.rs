use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parse error at byte {position} near `{token}`: {message}")]
    Parse {
        token: String,
        position: usize,
        message: String,
    },

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("no admissible point of the level-restricted set was found ({0})")]
    SetEmpty(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error("window error: {0}")]
    Window(String),

    #[error("slope paradox at grid m={grid_m}: no step h >= {h_min:e} decreased the path functional (best margin {best_margin:e})")]
    SlopeParadox {
        grid_m: usize,
        h_min: f64,
        best_margin: f64,
    },

    #[error("no certificate after {rounds} deformation rounds")]
    NoCertificate { rounds: usize },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, with stage labels stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
