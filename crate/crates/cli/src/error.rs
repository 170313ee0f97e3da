use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {message}")]
    BadValue { key: String, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", .path.display())]
    Artifact { path: PathBuf, source: funclearn::Error },
    #[error("plot: {0}")]
    Plot(String),
    #[error(transparent)]
    Core(#[from] funclearn::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            return CliError::MissingArtifact(path.to_path_buf());
        }
        CliError::Io { path: path.to_path_buf(), source }
    }

    /// 0 success, 2 configuration, 3 missing artifact, 4 numerical failure,
    /// 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use funclearn::Error as E;
        match self {
            CliError::UnknownKey(_) | CliError::BadValue { .. } | CliError::Config(_) => 2,
            CliError::MissingArtifact(_) => 3,
            CliError::Core(e) | CliError::Artifact { source: e, .. } => match e {
                E::JitterExhausted { .. }
                | E::DegenerateCurve
                | E::SingularSystem
                | E::ConstantInput
                | E::AtStep { .. } => 4,
                E::Invalid(_) => 2,
                _ => 1,
            },
            CliError::Io { .. } | CliError::Plot(_) => 1,
        }
    }
}
