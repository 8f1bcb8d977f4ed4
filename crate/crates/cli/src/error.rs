use std::path::Path;

use fsc::FscError;

/// Exit status 1 for bad input or parameters, 2 for numerical failures.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] FscError),
}

impl CliError {
    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if is_numerical(e) => 2,
            _ => 1,
        }
    }
}

fn is_numerical(e: &FscError) -> bool {
    match e {
        FscError::RankDeficient { .. }
        | FscError::NonFiniteObjective { .. }
        | FscError::DegenerateDegree { .. }
        | FscError::EmptyCluster(_)
        | FscError::AllEntriesFailed => true,
        FscError::ColumnFailures(list) => list.iter().any(|(_, e)| is_numerical(e)),
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let data = CliError::Core(FscError::InsufficientObservations {
            column: Some(2),
            observed: 1,
            required: 3,
        });
        assert_eq!(data.exit_code(), 1);
        assert_eq!(
            CliError::Core(FscError::NonFiniteObjective { iteration: 4 }).exit_code(),
            2
        );
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
    }
}
