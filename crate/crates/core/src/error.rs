use thiserror::Error;

/// Errors produced by the simulation and analysis primitives.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    MagicMismatch { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("truncated payload: {0}")]
    Truncated(String),

    #[error("record count mismatch: header says {header}, payload holds {payload}")]
    CountMismatch { header: u64, payload: u64 },

    #[error("event stream is not sorted by timestamp (first violation at record {index})")]
    UnsortedEvents { index: usize },

    #[error("event at record {index} lies outside the {nx}x{ny} grid")]
    EventOutOfGrid { index: usize, nx: usize, ny: usize },

    #[error("pixel pitch {0} m is not representable in whole nanometers")]
    PitchNotRepresentable(f64),

    #[error("degenerate density: total mass is zero")]
    DegenerateDensity,

    #[error("undefined ratio: zero mean difference and zero variance in reference region")]
    UndefinedRatio,

    #[error("missing plane: retrieval requires an image at z = {0} m")]
    MissingPlane(f64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
