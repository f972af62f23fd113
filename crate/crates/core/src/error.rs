use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize, usize),
        actual: (usize, usize, usize),
    },
    #[error("data length {actual} does not match grid voxel count {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("spectrum is not Hermitian (max relative deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error("spectrum has energy outside the support mask")]
    OffSupport,
    #[error("inverse transform left an imaginary residue of {ratio:.3e} relative to the real part")]
    ImaginaryResidue { ratio: f64 },
    #[error("invalid optics geometry: {0}")]
    InvalidGeometry(String),
    #[error("grid does not sample the optical band: {0}")]
    Nyquist(String),
    #[error("support mask is empty")]
    EmptyMask,
    #[error("invalid phantom: {0}")]
    InvalidPhantom(String),
    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),
    #[error("non-finite value during {phase} at outer iteration {outer}, inner iteration {inner}")]
    Diverged {
        phase: &'static str,
        outer: usize,
        inner: usize,
    },
    #[error("invalid patch layout: {0}")]
    InvalidLayout(String),
    #[error("stitch left voxel {0} with zero accumulated weight")]
    CoverageHole(usize),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("no peak found in profile")]
    NoPeak,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad magic {0:?}, expected \"VOL3\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("payload kind {found} does not match requested kind {expected}")]
    KindMismatch { expected: u16, found: u16 },
    #[error("unknown payload kind {0}")]
    UnknownKind(u16),
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("{0} bytes follow the declared payload")]
    TrailingBytes(u64),
    #[error("invalid payload: {0}")]
    BadPayload(String),
    #[error("payload of {bytes} bytes exceeds allocation cap of {cap} bytes")]
    TooLarge { bytes: u64, cap: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;
