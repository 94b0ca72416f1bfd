//! Command-line toolkit for uncertainty-aware remaining-time prediction on
//! business-process event logs: CSV ingestion, chronological splits, model
//! training, Monte-Carlo dropout inference, empirical interval calibration,
//! a transition-system baseline and the evaluation reports — all the IO and
//! file-format wiring around [`uncertime_core`].

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod csvio;
pub mod manifest;
pub mod plot;
pub mod rundir;

pub use cli::run;

/// Top-level error; everything maps to process exit code 1 (usage errors
/// exit 2 via the argument parser before reaching this type).
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{module}: {source}")]
    Module {
        module: &'static str,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("io: {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn module<E>(module: &'static str) -> impl FnOnce(E) -> CliError
    where
        E: std::error::Error + Send + Sync + 'static,
    {
        move |source| CliError::Module {
            module,
            source: Box::new(source),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.as_ref().display().to_string();
        move |source| CliError::Io { path, source }
    }

    pub fn exit_code(&self) -> i32 {
        1
    }
}
