use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration: {0}")]
    Config(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("unparseable output: {0}")]
    UnparseableOutput(String),

    #[error("template: {0}")]
    Template(String),

    /// Transport or service failure talking to a generator backend.
    #[error("backend: {message} (status {status:?}, after {attempts} attempt(s))")]
    Backend {
        message: String,
        status: Option<u16>,
        attempts: u32,
    },

    #[error("generation: {0}")]
    Generation(String),

    /// Failure of the executor itself, as opposed to a failing candidate.
    #[error("infrastructure: {0}")]
    Infrastructure(String),

    #[error("selection: {0}")]
    Selection(String),

    #[error("initialization: {0}")]
    Initialization(String),

    #[error("seeding: {0}")]
    Seeding(String),

    #[error("budget exhausted: {0}")]
    BudgetExhausted(String),

    #[error("persistence: {message}{}", offset.map(|o| format!(" at byte {o}")).unwrap_or_default())]
    Persistence {
        message: String,
        path: Option<PathBuf>,
        offset: Option<u64>,
    },

    #[error("unsupported state version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },

    #[error("phase: {0}")]
    Phase(String),

    #[error("interrupted")]
    Interrupted,
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn persistence(msg: impl Into<String>, path: Option<PathBuf>) -> Self {
        Error::Persistence {
            message: msg.into(),
            path,
            offset: None,
        }
    }

    /// Process exit code for the command-line surface.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Template(_) | Error::Phase(_) => 1,
            Error::Backend { .. } => 2,
            Error::BudgetExhausted(_) => 3,
            Error::Persistence { .. } | Error::Version { .. } => 4,
            Error::Interrupted => 130,
            // Search-level failures surface as budget problems: the run
            // could not produce the feasible programs it was asked for.
            Error::Initialization(_)
            | Error::Seeding(_)
            | Error::Selection(_)
            | Error::Generation(_)
            | Error::UndefinedMetric(_)
            | Error::UnparseableOutput(_) => 3,
            Error::Infrastructure(_) => 4,
        }
    }

    /// Short machine-parseable reason tag.
    pub fn reason(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::UndefinedMetric(_) => "undefined-metric",
            Error::UnparseableOutput(_) => "unparseable-output",
            Error::Template(_) => "template",
            Error::Backend { .. } => "backend",
            Error::Generation(_) => "generation",
            Error::Infrastructure(_) => "infrastructure",
            Error::Selection(_) => "selection",
            Error::Initialization(_) => "initialization",
            Error::Seeding(_) => "seeding",
            Error::BudgetExhausted(_) => "budget",
            Error::Persistence { .. } => "persistence",
            Error::Version { .. } => "version",
            Error::Phase(_) => "phase",
            Error::Interrupted => "interrupted",
        }
    }
}
