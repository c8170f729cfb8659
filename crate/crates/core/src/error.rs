use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("{what} exceeds the size guard ({value} > {limit})")]
    Size {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("codeword index {index} out of range for D = {decimation}")]
    Index { index: u64, decimation: usize },

    #[error("codebook has colliding entries (min gap {min_gap:e} <= tolerance {tolerance:e})")]
    DegenerateCodebook { min_gap: f64, tolerance: f64 },

    #[error("block {block}: value {value} matches no codebook entry")]
    NotInCodebook { block: usize, value: f64 },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("block {block}: value {value} is outside the feasible range [0, {max}]")]
    Infeasible { block: usize, value: f64, max: f64 },

    #[error(
        "solver did not converge after {iterations} iterations \
         (feasibility {feasibility:e}, relative gap {gap:e})"
    )]
    Convergence {
        iterations: usize,
        feasibility: f64,
        gap: f64,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("amplitude estimation failed: {0}")]
    EstimationFailed(String),

    #[error("pivot {pivot} has value {value}, below the noise floor {floor}")]
    Pivot {
        pivot: usize,
        value: f64,
        floor: f64,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that stem from numerics rather than from the caller's input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Convergence { .. }
                | Error::DegenerateCodebook { .. }
                | Error::NotInCodebook { .. }
                | Error::EstimationFailed(_)
                | Error::Infeasible { .. }
                | Error::Pivot { .. }
        )
    }
}
