use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grids differ: n={}, L={} vs n={}, L={}", left.0, left.1, right.0, right.1)]
    GridMismatch {
        left: (usize, f64),
        right: (usize, f64),
    },
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point {0:?} is not a grid point")]
    OffGrid([f64; 3]),
    #[error("spectral data is not Hermitian (relative defect {0:.3e})")]
    NotHermitian(f64),
    #[error("invalid symbol: {0}")]
    InvalidSymbol(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dyadic block index {index} outside -1..={max}")]
    BlockOutOfRange { index: i32, max: i32 },
    #[error("cutoff level M={m} must not exceed N={n}")]
    CutoffOrder { m: u32, n: u32 },
    #[error("quadrature did not reach tolerance {tol:.1e} (estimate {estimate:.3e})")]
    QuadratureNotConverged { tol: f64, estimate: f64 },
    #[error("trajectory blew up at t={time:.4} (sup-norm {norm:.3e})")]
    BlowUp { time: f64, norm: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("snapshot version or magic mismatch: {0}")]
    Version(String),
    #[error("snapshot checksum mismatch or truncated file")]
    Checksum,
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
