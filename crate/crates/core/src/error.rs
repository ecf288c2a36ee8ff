use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("filter design rejected: {0}")]
    Filter(String),

    #[error("flat segment")]
    FlatSegment,

    #[error("too few R-peaks detected ({found}, need at least 3)")]
    TooFewPeaks { found: usize },

    #[error("no heart cycle fits inside the segment")]
    NoCycles,

    #[error("no usable segment: {0}")]
    NoUsableSegment(String),

    #[error("degenerate Poincare geometry (SD2 = 0)")]
    DegeneratePoincare,

    #[error("constant numeric feature `{0}`")]
    ConstantFeature(String),

    #[error("missing features: {0}")]
    MissingFeatures(String),

    #[error("duplicate record id `{0}`")]
    DuplicateId(String),

    #[error("invalid label for `{id}`: {reason}")]
    InvalidLabel { id: String, reason: String },

    #[error("no events in labels")]
    NoEvents,

    #[error("singular information matrix")]
    Singular,

    #[error("did not converge after {0} iterations")]
    NotConverged(usize),

    #[error("no comparable pairs")]
    NoComparablePairs,

    #[error("no cases or no controls at horizon {0}")]
    NoCasesOrControls(f64),

    #[error("metric undefined on {undefined} of {total} bootstrap resamples")]
    DegenerateBootstrap { undefined: usize, total: usize },

    #[error("fold {0} has no events")]
    EmptyFold(usize),

    #[error("model file: {0}")]
    Schema(String),

    #[error("train with cover tracking")]
    MissingCovers,

    #[error("too many features for exact enumeration ({0} > 14)")]
    TooManyFeatures(usize),
}
