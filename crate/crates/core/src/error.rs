use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("under-resolved oscillation: eps/h = {ratio:.3} < {required}")]
    UnderResolved { ratio: f64, required: f64 },

    #[error("eps = {eps} is not aligned with the mesh: {reason}")]
    Misaligned { eps: f64, reason: String },

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("ellipticity violated: {0}")]
    Ellipticity(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("step search failed at iteration {iteration}")]
    StepSearch { iteration: usize },

    #[error("optimizer hit the iteration cap ({iterations}) with KKT residual {kkt:.3e}")]
    IterationCap { iterations: usize, kkt: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the CLI: 2 for bad input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonConvergence { .. }
            | Error::Singular(_)
            | Error::StepSearch { .. }
            | Error::IterationCap { .. } => 3,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
