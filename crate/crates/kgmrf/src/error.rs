use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("jacobi eigensolver did not converge after {sweeps} sweeps (input norm {norm:.6e}, residual off-diagonal {off:.3e})")]
    NoConvergence { sweeps: usize, norm: f64, off: f64 },

    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    #[error("rotation angle {angle:.9} is too close to pi for a principal logarithm")]
    BranchCut { angle: f64 },

    #[error("matrix is not a rotation (orthogonality error {orth:.3e}, det {det:.6})")]
    NotRotation { orth: f64, det: f64 },

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("matrix is not on the orbit: eigenvalue mismatch {0:.3e}")]
    OffOrbit(f64),

    #[error("whitened covariance is numerically singular (min eigenvalue {0:.3e})")]
    SingularWhitening(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("pnm decode: {0}")]
    Pnm(String),

    #[error("groundtruth line {line}: {msg}")]
    Groundtruth { line: usize, msg: String },

    #[error("degenerate box: {0}")]
    DegenerateBox(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
