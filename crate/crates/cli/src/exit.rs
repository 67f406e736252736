//! Exit codes and the machine-readable error record.

use moments_core::localizer::LocalizeError;
use moments_core::ssim::SsimError;
use moments_core::synth::SynthError;
use serde::Serialize;

/// Invalid or inconsistent configuration, including missing input paths.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Input content that cannot be used.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct DataError(pub String);

pub fn data_error(msg: impl Into<String>) -> anyhow::Error {
    DataError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExitKind {
    Config,
    Data,
    Internal,
}

impl ExitKind {
    pub fn code(self) -> i32 {
        match self {
            ExitKind::Config => 2,
            ExitKind::Data => 3,
            ExitKind::Internal => 4,
        }
    }
}

/// Walks the error chain and returns the first recognized category.
pub fn classify(err: &anyhow::Error) -> ExitKind {
    for cause in err.chain() {
        if cause.is::<ConfigError>() || cause.is::<toml::de::Error>() {
            return ExitKind::Config;
        }
        if let Some(e) = cause.downcast_ref::<LocalizeError>() {
            return match e {
                LocalizeError::InvalidConfig(_) => ExitKind::Config,
                LocalizeError::Ssim(SsimError::InvalidParams(_)) => ExitKind::Config,
                _ => ExitKind::Data,
            };
        }
        if let Some(e) = cause.downcast_ref::<SsimError>() {
            return match e {
                SsimError::InvalidParams(_) => ExitKind::Config,
                _ => ExitKind::Data,
            };
        }
        if let Some(e) = cause.downcast_ref::<SynthError>() {
            return match e {
                SynthError::InvalidSpec(_) => ExitKind::Config,
                _ => ExitKind::Data,
            };
        }
        if cause.is::<DataError>()
            || cause.is::<moments_core::Error>()
            || cause.is::<moments_core::media::MediaError>()
            || cause.is::<moments_core::sampler::SamplerError>()
            || cause.is::<moments_core::extractor::ExtractError>()
            || cause.is::<moments_core::analysis::AnalysisError>()
            || cause.is::<moments_core::baselines::BaselineError>()
            || cause.is::<std::io::Error>()
            || cause.is::<serde_json::Error>()
            || cause.is::<csv::Error>()
        {
            return ExitKind::Data;
        }
    }
    ExitKind::Internal
}

#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub kind: ExitKind,
    pub code: i32,
    pub message: String,
    /// Outermost context first.
    pub chain: Vec<String>,
}

impl ErrorRecord {
    pub fn new(err: &anyhow::Error) -> Self {
        let kind = classify(err);
        ErrorRecord {
            kind,
            code: kind.code(),
            message: err.to_string(),
            chain: err.chain().map(|c| c.to_string()).collect(),
        }
    }

    pub fn internal(message: String) -> Self {
        ErrorRecord { kind: ExitKind::Internal, code: 4, message: message.clone(), chain: vec![message] }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}
