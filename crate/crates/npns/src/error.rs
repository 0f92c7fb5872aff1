use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {0}x{0} vs {1}x{1}")]
    GridMismatch(usize, usize),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("Hermitian symmetry violated (worst defect {defect:.3e} at mode ({kx},{ky}))")]
    HermitianViolation { kx: i64, ky: i64, defect: f64 },

    #[error("charge not neutral: |mean(rho)| = {0:.3e} exceeds 1e-10")]
    ChargeNotNeutral(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("CFL violation: dt = {dt:.3e} with max|u| = {umax:.3e}; advised dt <= {advised:.3e}")]
    CflViolation { dt: f64, umax: f64, advised: f64 },

    #[error("conversion process overflow: |eps * omega(t)| = {0:.3e} > 700; run rejected")]
    ZOverflow(f64),

    #[error("path excursion: z = {z:.3e} exceeds max_z_ratio = {limit:.3e} at t = {t:.4}")]
    ZExcursion { z: f64, limit: f64, t: f64 },

    #[error("invalid Wiener path window: t_min = {0}, t_max = {1} (need t_min <= 0 <= t_max)")]
    BadPathWindow(f64, f64),

    #[error("gauge mismatch: expected {expected}, got {got}")]
    GaugeMismatch {
        expected: &'static str,
        got: &'static str,
    },

    #[error("empty cloud")]
    EmptyCloud,

    #[error("insufficient path window: need [{need:.4}, 0], have [{have:.4}, ..]")]
    InsufficientWindow { need: f64, have: f64 },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("checksum mismatch for {path}: expected {expected}, got {got}")]
    ChecksumMismatch {
        path: String,
        expected: String,
        got: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing trajectory or diagnostics: {0}")]
    MissingData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("TOML parse error: {0}")]
    Toml(String),
}
