use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("cohort too small to split: {0} patients")]
    CohortTooSmall(usize),

    #[error("invalid record {patient_id}: {reason}")]
    InvalidRecord { patient_id: String, reason: String },

    #[error("duplicate patient id {0}")]
    DuplicatePatient(String),

    #[error("unknown feature {0}")]
    UnknownFeature(String),

    #[error("template corrupt: {0}")]
    Template(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("feature set mismatch: model expects {expected:?}, got {got:?}")]
    FeatureMismatch { expected: Vec<String>, got: Vec<String> },

    #[error("no events in training data")]
    NoEvents,

    #[error("Newton-Raphson did not converge after {iterations} iterations (trace: {trace:?})")]
    NonConvergence { iterations: usize, trace: Vec<f64> },

    #[error("training diverged at epoch {epoch} (loss trace: {trace:?})")]
    Divergence { epoch: usize, trace: Vec<f64> },

    #[error("no comparable pairs")]
    NoComparablePairs,

    #[error("bootstrap statistic failed on {failed} of {attempted} resamples")]
    Bootstrap { failed: usize, attempted: usize },

    #[error("censoring target {0} unreachable")]
    CensoringTarget(f64),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("artifact {path}: expected format {expected} v{expected_version}, found {found} v{found_version}")]
    FormatVersion {
        path: String,
        expected: String,
        expected_version: u32,
        found: String,
        found_version: u32,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("transport: {0}")]
    Transport(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Short machine-readable tag used in structured error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DegenerateInput(_) => "degenerate_input",
            Error::CohortTooSmall(_) => "cohort_too_small",
            Error::InvalidRecord { .. } => "invalid_record",
            Error::DuplicatePatient(_) => "duplicate_patient",
            Error::UnknownFeature(_) => "unknown_feature",
            Error::Template(_) => "template",
            Error::Dimension(_) => "dimension",
            Error::FeatureMismatch { .. } => "feature_mismatch",
            Error::NoEvents => "no_events",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Divergence { .. } => "divergence",
            Error::NoComparablePairs => "no_comparable_pairs",
            Error::Bootstrap { .. } => "bootstrap",
            Error::CensoringTarget(_) => "censoring_target",
            Error::Config(_) => "config",
            Error::FormatVersion { .. } => "format_version",
            Error::Parse { .. } => "parse",
            Error::Transport(_) => "transport",
            Error::Empty(_) => "empty",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
