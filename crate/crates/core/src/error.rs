use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("label space needs at least two classes, got {0}")]
    TooFewClasses(usize),
    #[error("partial label is empty")]
    EmptyPartialLabel,
    #[error("PLF `{plf}`: label {label} out of range for {k} classes")]
    LabelOutOfRange { plf: String, label: usize, k: usize },
    #[error("PLF `{plf}`: codomain is empty")]
    EmptyCodomain { plf: String },
    #[error("PLF `{plf}`: codomain element {index} is the full label set (abstain)")]
    FullSetInCodomain { plf: String, index: usize },
    #[error("PLF `{plf}`: codomain element {index} duplicates an earlier element")]
    DuplicatePartialLabel { plf: String, index: usize },
    #[error("PLF `{plf}`: class {class} appears in no codomain element")]
    ClassMissingFromCodomain { plf: String, class: usize },
    #[error("PLF `{plf}`: class {class} appears in every codomain element")]
    ClassInEverySet { plf: String, class: usize },
    #[error("PLF `{plf}`: consistency counts do not match the codomain")]
    InconsistentCounts { plf: String },
    #[error("vote {vote} is not in the codomain of PLF `{plf}`")]
    VoteNotInCodomain { plf: String, vote: String },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no examples left after coverage filtering")]
    EmptyDataset,
    #[error("non-finite value during training: {0}")]
    NonFinite(String),
    #[error("need at least three PLFs for a tripartition, got {0}")]
    TooFewPlfs(usize),
    #[error("grouped codomain has {size} entries, cap is {cap}")]
    ProductTooLarge { size: u128, cap: u128 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable, machine-greppable identifier for the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::TooFewClasses(_)
            | Error::EmptyPartialLabel
            | Error::LabelOutOfRange { .. }
            | Error::EmptyCodomain { .. }
            | Error::FullSetInCodomain { .. }
            | Error::DuplicatePartialLabel { .. }
            | Error::ClassMissingFromCodomain { .. }
            | Error::ClassInEverySet { .. }
            | Error::InconsistentCounts { .. } => "E_INVALID_SPEC",
            Error::VoteNotInCodomain { .. } => "E_INVALID_VOTE",
            Error::ShapeMismatch(_) => "E_SHAPE_MISMATCH",
            Error::InvalidParams(_) => "E_INVALID_PARAMS",
            Error::InvalidConfig(_) => "E_INVALID_CONFIG",
            Error::EmptyDataset => "E_EMPTY_DATASET",
            Error::NonFinite(_) => "E_NON_FINITE",
            Error::TooFewPlfs(_) => "E_TOO_FEW_PLFS",
            Error::ProductTooLarge { .. } => "E_PRODUCT_TOO_LARGE",
            Error::Parse(_) => "E_PARSE",
            Error::Io(e) if e.kind() == std::io::ErrorKind::NotFound => "E_FILE_NOT_FOUND",
            Error::Io(_) => "E_IO",
        }
    }
}
