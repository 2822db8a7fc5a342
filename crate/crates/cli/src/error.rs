use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] tevae::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("config syntax: {0}")]
    TomlDe(#[from] toml::de::Error),

    #[error("config serialisation: {0}")]
    TomlSer(#[from] toml::ser::Error),

    #[error("missing {what}: {path} (run `{hint}` first)")]
    Missing {
        what: &'static str,
        path: PathBuf,
        hint: &'static str,
    },

    #[error("plot: {0}")]
    Plot(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;
