use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Field point lies on (or within epsilon of) a conductor.
    #[error("field point lies {distance_um:.3e} um from segment {segment} of path '{path}' (epsilon {epsilon_um} um)")]
    Singularity {
        path: String,
        segment: usize,
        distance_um: f64,
        epsilon_um: f64,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{what} did not converge after {iterations} iterations (best residual {best_residual:.3e})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        best_residual: f64,
        /// Best parameter vector reached before giving up.
        best: Vec<f64>,
    },

    #[error("degenerate fit: Jacobian has rank {rank} for {params} parameters")]
    DegenerateFit { rank: usize, params: usize },

    #[error("no feasible design found in {evaluations} evaluations (best violation {violation:.3e})")]
    Infeasible {
        evaluations: usize,
        violation: f64,
        best: Vec<f64>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
