use thiserror::Error;

/// Exit status for bad input, unreadable files or invalid configuration.
pub const EXIT_INPUT: i32 = 2;
/// Exit status for numerical failures (rank deficiency, singular systems).
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("{context}: {source}")]
    Input {
        context: String,
        #[source]
        source: sppa_core::Error,
    },

    #[error(transparent)]
    Core(#[from] sppa_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("png: {0}")]
    Image(#[from] image::ImageError),
}

impl CliError {
    pub fn input(context: impl Into<String>, source: sppa_core::Error) -> Self {
        CliError::Input {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        let core = match self {
            CliError::Core(e) => e,
            CliError::Input { source, .. } => source,
            _ => return EXIT_INPUT,
        };
        match core {
            sppa_core::Error::Numerical(_) | sppa_core::Error::RankDeficient { .. } => EXIT_NUMERICAL,
            _ => EXIT_INPUT,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
