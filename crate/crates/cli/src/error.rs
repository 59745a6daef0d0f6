use std::io::ErrorKind;

use serde_json::json;
use thiserror::Error;

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MISSING_FILE: i32 = 3;
pub const EXIT_SCHEMA: i32 = 4;
pub const EXIT_DATA: i32 = 5;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config file, unknown key, or an invalid flag combination.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] mvp_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<std::path::PathBuf>, source: std::io::Error) -> Self {
        CliError::Core(mvp_core::Error::Io {
            path: path.into(),
            source,
        })
    }

    /// Short machine-readable category, paired with [`CliError::exit_code`].
    pub fn kind(&self) -> &'static str {
        use mvp_core::Error as E;
        match self {
            CliError::Config(_) => "config",
            CliError::Core(e) => match e {
                E::InvalidArgument(_) => "config",
                E::Io { source, .. } if source.kind() == ErrorKind::NotFound => "missing_file",
                E::Io { .. } => "io",
                E::SchemaMismatch(_) => "schema_mismatch",
                E::Row { .. }
                | E::DuplicateId { .. }
                | E::Format(_)
                | E::Truncated { .. }
                | E::Data(_)
                | E::MissingEmbedding { .. }
                | E::MapeUndefined
                | E::Json(_)
                | E::Csv(_) => "data",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "config" => EXIT_CONFIG,
            "missing_file" => EXIT_MISSING_FILE,
            "schema_mismatch" => EXIT_SCHEMA,
            "data" => EXIT_DATA,
            _ => EXIT_OTHER,
        }
    }

    /// The single-line JSON record written to stderr on failure.
    pub fn record(&self) -> serde_json::Value {
        json!({
            "error": {
                "kind": self.kind(),
                "exit_code": self.exit_code(),
                "message": self.to_string(),
            }
        })
    }
}
