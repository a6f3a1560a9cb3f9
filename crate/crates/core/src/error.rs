use std::path::PathBuf;

use thiserror::Error;

/// Every domain failure in the crate. `code()` yields a module-qualified
/// identifier used by the CLI when reporting.
#[derive(Debug, Error)]
pub enum Error {
    // schema
    #[error("{path}:{line}: malformed manifest record: {reason}")]
    ManifestParse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("split counts {requested} exceed the {available} categories of attribute `{attribute}`")]
    CountOverflow {
        attribute: String,
        requested: usize,
        available: usize,
    },
    #[error("attribute `{attribute}` has {available} eligible categories, episode needs {needed}")]
    InsufficientCategories {
        attribute: String,
        available: usize,
        needed: usize,
    },
    #[error("category `{category}` of `{attribute}` has {available} samples, episode needs {needed}")]
    InsufficientSamples {
        attribute: String,
        category: String,
        available: usize,
        needed: usize,
    },

    // encoder
    #[error("source unavailable for sample `{0}`")]
    SourceUnavailable(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unknown category `{category}` for attribute `{attribute}`")]
    UnknownCategory { attribute: String, category: String },
    #[error("cache entry for `{0}` failed its content hash check")]
    HashMismatch(String),
    #[error("could not build a basis with |cos| < {bound} after {attempts} draws")]
    BasisConstruction { bound: f64, attempts: usize },

    // tcm
    #[error("text features span several attributes: `{0}` and `{1}`")]
    MixedAttributes(String, String),
    #[error("width mismatch: expected {expected}, found {found}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("non-finite gradient in parameter block `{0}`")]
    NonFiniteGradient(String),
    #[error("invalid model configuration: {0}")]
    InvalidModel(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    // align
    #[error("frame {0} has zero norm")]
    ZeroVector(usize),
    #[error("soft-DTW gradient requires gamma > 0")]
    ZeroGamma,
    #[error("empty cost matrix")]
    EmptyCost,

    // fewshot
    #[error("support categories carry unequal shot counts")]
    RaggedSupport,
    #[error("loss became non-finite at episode {0}")]
    DivergedLoss(usize),

    // aam
    #[error("sample `{0}` has no annotation")]
    MissingAnnotation(String),
    #[error("count mismatch: {0}")]
    CountMismatch(String),
    #[error("invalid overlay spec: {0}")]
    InvalidSpec(String),
    #[error("could not decode frame: {0}")]
    DecodeFailure(String),

    // bench / config
    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),
    #[error("nothing to report")]
    EmptyResults,
    #[error("{} configuration error(s):\n  {}", .0.len(), .0.join("\n  "))]
    Config(Vec<String>),

    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::ManifestParse { .. } => "schema.ManifestParse",
            Error::SchemaViolation(_) => "schema.SchemaViolation",
            Error::CountOverflow { .. } => "schema.CountOverflow",
            Error::InsufficientCategories { .. } => "schema.InsufficientCategories",
            Error::InsufficientSamples { .. } => "schema.InsufficientSamples",
            Error::SourceUnavailable(_) => "encoder.SourceUnavailable",
            Error::DimensionMismatch { .. } => "encoder.DimensionMismatch",
            Error::UnknownCategory { .. } => "encoder.UnknownCategory",
            Error::HashMismatch(_) => "encoder.HashMismatch",
            Error::BasisConstruction { .. } => "encoder.BasisConstruction",
            Error::MixedAttributes(..) => "tcm.MixedAttributes",
            Error::WidthMismatch { .. } => "tcm.WidthMismatch",
            Error::NonFiniteGradient(_) => "tcm.NonFiniteGradient",
            Error::InvalidModel(_) => "tcm.InvalidModel",
            Error::Checkpoint(_) => "tcm.Checkpoint",
            Error::ZeroVector(_) => "align.ZeroVector",
            Error::ZeroGamma => "align.ZeroGamma",
            Error::EmptyCost => "align.EmptyCost",
            Error::RaggedSupport => "fewshot.RaggedSupport",
            Error::DivergedLoss(_) => "fewshot.DivergedLoss",
            Error::MissingAnnotation(_) => "aam.MissingAnnotation",
            Error::CountMismatch(_) => "aam.CountMismatch",
            Error::InvalidSpec(_) => "aam.InvalidSpec",
            Error::DecodeFailure(_) => "aam.DecodeFailure",
            Error::InvalidExperiment(_) => "bench.InvalidExperiment",
            Error::EmptyResults => "bench.EmptyResults",
            Error::Config(_) => "cli.Config",
            Error::Io { .. } => "io.IoFailure",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
