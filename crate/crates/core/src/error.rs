use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure mode of the toolkit. Format-level problems get their own
/// variants so callers can tell a bad magic from a truncated payload.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch on {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: String,
        expected: String,
        got: String,
    },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("layer {layer}: pruning plan incongruent with network: {msg}")]
    PlanMismatch { layer: usize, msg: String },

    #[error("layer {layer}: {source}")]
    AtLayer {
        layer: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(
        "exhaustive search over {cases} mask combinations exceeds the guard of {limit}; \
         use l1_scores + select_filters instead"
    )]
    CombinatorialGuard { cases: u128, limit: u64 },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("cost reports come from different lineages: {0}")]
    LineageMismatch(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    // --- NPY format ---
    #[error("not an NPY file (bad magic)")]
    NpyBadMagic,
    #[error("unsupported NPY version {major}.{minor} (only 1.0 is supported)")]
    NpyVersion { major: u8, minor: u8 },
    #[error("unsupported NPY dtype {0:?} (only '<f4' and '<f8' are supported)")]
    NpyDtype(String),
    #[error("NPY file is Fortran-ordered; only C order is supported")]
    NpyFortranOrder,
    #[error("NPY payload truncated: expected {expected} bytes, got {got}")]
    NpyTruncated { expected: usize, got: usize },
    #[error("malformed NPY header: {0}")]
    NpyHeader(String),

    // --- checkpoint format ---
    #[error("not a checkpoint file (bad magic)")]
    CheckpointBadMagic,
    #[error("unsupported checkpoint version {0}")]
    CheckpointVersion(u16),
    #[error("checkpoint checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("checkpoint manifest disagrees with payload: {0}")]
    ManifestMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(context: impl Into<String>, expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
