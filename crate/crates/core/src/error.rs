use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FscError {
    #[error(
        "basis is rank deficient: smallest singular value {smallest:e} <= tolerance {tolerance:e}"
    )]
    RankDeficient { smallest: f64, tolerance: f64 },

    #[error("{}", insufficient_message(*.column, *.observed, *.required))]
    InsufficientObservations {
        column: Option<usize>,
        observed: usize,
        required: usize,
    },

    #[error("ambient dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("objective evaluated to a non-finite value at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },

    #[error("similarity row {row} sums to zero (isolated point)")]
    DegenerateDegree { row: usize },

    #[error("cluster {0} has no members")]
    EmptyCluster(usize),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("label vectors differ in length: {pred} vs {truth}")]
    LengthMismatch { pred: usize, truth: usize },

    #[error("no entries in the selected scope")]
    EmptyScope,

    #[error("every lambda-path entry failed")]
    AllEntriesFailed,

    #[error("{} column(s) failed; first: column {} ({})", .0.len(), .0[0].0 + 1, .0[0].1)]
    ColumnFailures(Vec<(usize, FscError)>),
}

fn insufficient_message(column: Option<usize>, observed: usize, required: usize) -> String {
    match column {
        Some(c) => format!(
            "column {} has {} observed entries, fewer than the required {} (rank r)",
            c + 1,
            observed,
            required
        ),
        None => format!(
            "{} observed entries, fewer than the required {}",
            observed, required
        ),
    }
}

impl FscError {
    /// Attaches a column index to an [`FscError::InsufficientObservations`].
    pub fn at_column(self, column: usize) -> Self {
        match self {
            FscError::InsufficientObservations {
                observed, required, ..
            } => FscError::InsufficientObservations {
                column: Some(column),
                observed,
                required,
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, FscError>;
