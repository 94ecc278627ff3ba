use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("shape mismatch: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    ShapeMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("volume dims {dims:?} are not divisible by patch size {patch}")]
    NotDivisible { dims: [usize; 3], patch: usize },
    #[error("cutmix requires a partner volume of identical dims")]
    MissingPartner,
    #[error("rotation about {0} needs equal in-plane dims")]
    NonSquareRotation(&'static str),
    #[error("id {0:?} is not present")]
    MissingId(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("k = {k} exceeds the {len} available results")]
    KExceedsResults { k: usize, len: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },
}
