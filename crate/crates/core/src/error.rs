use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit reports.
///
/// Each variant maps to a stable machine-readable code (see [`Error::code`]) so
/// the CLI and the HTTP service can emit `{"error": {"code", "message", "index"}}`.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed syntax: {0}")]
    MalformedSyntax(String),

    #[error("invariant violated: {invariant}{}", fmt_index(.index))]
    InvariantViolation { invariant: String, index: Option<usize> },

    #[error("unsupported format version {0}")]
    VersionUnsupported(i64),

    #[error("need at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("repeated consecutive positions at point {index}")]
    DegenerateGeometry { index: usize },

    #[error("cannot fit a normalizer on fewer than 2 samples")]
    EmptyFit,

    #[error("empty input")]
    EmptyInput,

    #[error("need at least {needed} distinct tracks for {needed} folds, got {got}")]
    TooFewGroups { needed: usize, got: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("missing {0} input")]
    MissingInput(&'static str),

    #[error("empty point sequence")]
    EmptySequence,

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("training diverged at iteration {iteration}")]
    DivergenceDetected { iteration: usize },

    #[error("malformed model: {0}")]
    MalformedModel(String),

    #[error("track generation failed after {attempts} attempts: {reason}")]
    GenerationFailed { attempts: usize, reason: String },

    #[error("infeasible generator config: {0}")]
    ConfigInfeasible(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn fmt_index(index: &Option<usize>) -> String {
    match index {
        Some(i) => format!(" at point {i}"),
        None => String::new(),
    }
}

impl Error {
    pub fn invariant(invariant: impl Into<String>, index: Option<usize>) -> Self {
        Error::InvariantViolation {
            invariant: invariant.into(),
            index,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Error::MalformedSyntax(_) => "MalformedSyntax",
            Error::InvariantViolation { .. } => "InvariantViolation",
            Error::VersionUnsupported(_) => "VersionUnsupported",
            Error::TooShort { .. } => "TooShort",
            Error::DegenerateGeometry { .. } => "DegenerateGeometry",
            Error::EmptyFit => "EmptyFit",
            Error::EmptyInput => "EmptyInput",
            Error::TooFewGroups { .. } => "TooFewGroups",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::MissingInput(_) => "MissingInput",
            Error::EmptySequence => "EmptySequence",
            Error::EmptyTrainingSet => "EmptyTrainingSet",
            Error::DivergenceDetected { .. } => "DivergenceDetected",
            Error::MalformedModel(_) => "MalformedModel",
            Error::GenerationFailed { .. } => "GenerationFailed",
            Error::ConfigInfeasible(_) => "ConfigInfeasible",
            Error::Io { .. } => "Io",
        }
    }

    /// Point index the error refers to, when there is one.
    pub fn index(&self) -> Option<usize> {
        match self {
            Error::InvariantViolation { index, .. } => *index,
            Error::DegenerateGeometry { index } => Some(*index),
            _ => None,
        }
    }

    /// The `{"error": {...}}` body shared by the CLI and the service.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "error": {
                "code": self.code(),
                "message": self.to_string(),
                "index": self.index(),
            }
        })
    }
}
