use std::fmt;

use nelec_core::corpus::CorpusError;
use nelec_core::eval::EvalError;
use nelec_core::features::FeatureError;
use nelec_core::lexicons::LexiconError;
use nelec_core::model::ModelError;
use nelec_core::pipeline::PipelineError;
use nelec_core::preprocess::ResourceError;
use nelec_core::providers::ProviderError;

/// Failure categories, each mapped to a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    Internal,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Usage => 1,
            Kind::Data => 2,
            Kind::Internal => 3,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Kind::Usage => "usage",
            Kind::Data => "data",
            Kind::Internal => "internal",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: Kind::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            kind: Kind::Data,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self {
            kind: Kind::Internal,
            message: message.into(),
        }
    }

    /// Prefix the message with where it happened (usually a path).
    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }

    /// The single-line machine-readable form written to stderr.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "error": self.kind.as_str(),
            "exit_code": self.kind.exit_code(),
            "message": self.message,
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind.as_str(), self.message)
    }
}

macro_rules! data_errors {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::data(e.to_string())
            }
        })*
    };
}

data_errors!(CorpusError, LexiconError, ResourceError, ProviderError, FeatureError, EvalError);

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidParams(_) => CliError::usage(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Model(m) => m.into(),
            other => CliError::data(other.to_string()),
        }
    }
}
