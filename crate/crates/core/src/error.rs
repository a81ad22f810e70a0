use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The KKT matrix or the stacked task Jacobian lost rank. `q` is the
    /// configuration in radians.
    #[error("kinematic singularity at q = {q:?}: {reason}")]
    Singular { q: Vec<f64>, reason: String },

    /// Tool tip sits on the fulcrum, the insertion ratio is undefined.
    #[error("degenerate insertion: lambda = {lambda:e} m")]
    DegenerateInsertion { lambda: f64 },

    #[error("no feasible start configuration after {iterations} iterations: {diagnostics}")]
    SearchFailed {
        iterations: usize,
        diagnostics: String,
    },

    /// A step of the closed loop failed; wraps the underlying cause.
    #[error("simulation aborted at step {step} (q = {q:?}): {source}")]
    Simulation {
        step: usize,
        q: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by the robot state rather than by the inputs.
    pub fn is_runtime(&self) -> bool {
        match self {
            Error::Singular { .. }
            | Error::DegenerateInsertion { .. }
            | Error::SearchFailed { .. } => true,
            Error::Simulation { source, .. } => source.is_runtime(),
            _ => false,
        }
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(e.to_string())
    }
}
