use thiserror::Error;

use cyberrisk_core::apt::AptError;
use cyberrisk_core::edgar::IndexError;
use cyberrisk_core::embed::EmbedError;
use cyberrisk_core::portfolio::PortfolioError;
use cyberrisk_core::scoring::ScoreError;
use cyberrisk_core::textprep::TextError;

/// Failure of a pipeline stage, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing upstream output {0}; run the `{1}` stage first")]
    MissingUpstream(String, &'static str),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::MissingUpstream(..) | CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<IndexError> for CliError {
    fn from(e: IndexError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TextError> for CliError {
    fn from(e: TextError) -> Self {
        match e {
            TextError::ZeroTarget | TextError::ZeroCutoff => CliError::Config(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::InvalidParams(_) => CliError::Config(e.to_string()),
            EmbedError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ScoreError> for CliError {
    fn from(e: ScoreError) -> Self {
        match e {
            ScoreError::ZeroVector | ScoreError::NonFiniteReference(_) => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<PortfolioError> for CliError {
    fn from(e: PortfolioError) -> Self {
        match e {
            PortfolioError::Config(_) => CliError::Config(e.to_string()),
            PortfolioError::ZeroVolatility => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<AptError> for CliError {
    fn from(e: AptError) -> Self {
        match e {
            AptError::DateMismatch
            | AptError::UnknownFactor(_)
            | AptError::InsufficientHistory { .. }
            | AptError::InsufficientCrossSection { .. }
            | AptError::TooShortSample { .. } => CliError::Data(e.to_string()),
            AptError::Invalid(_) => CliError::Config(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}
