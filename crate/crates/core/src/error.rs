use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("number of subcarriers must be even and at least 4, got {0}")]
    InvalidSubcarrierCount(usize),
    #[error("unsupported overlapping factor {0} (supported: 2, 3, 4)")]
    UnsupportedOverlap(usize),
    #[error("filters disagree on the number of subcarriers ({0} vs {1})")]
    SubcarrierMismatch(usize, usize),
    #[error("DFT grid of {grid} points is too small (need at least {required})")]
    GridTooSmall { grid: usize, required: usize },
    #[error("PDP spectrum has a near-null at bin {bin} and no regularization was requested")]
    IllPosedDivision { bin: usize },
    #[error("invalid power delay profile: {0}")]
    InvalidPdp(String),
    #[error("composite pulse is zero at l = 0")]
    ZeroPeak,
    #[error("index {index} out of range 0..{bound}")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("signal too short: analysis of {symbols} symbols needs samples up to index {needed}, signal ends at {available}")]
    SignalTooShort { symbols: usize, needed: isize, available: isize },
    #[error("data grid is not real-valued (max |imag| = {0:e})")]
    NotReal(f64),
    #[error("noise variance must be nonnegative and finite, got {0}")]
    InvalidNoiseVariance(f64),
    #[error("channel matrix column {0} is all zero")]
    ZeroColumn(usize),
    #[error("channel Gram matrix is singular (condition number {0:e})")]
    Singular(f64),
    #[error("interference window too small: tail energy fraction {tail:e} exceeds {limit:e}")]
    WindowTooSmall { tail: f64, limit: f64 },
    #[error("cyclic prefix of {cp} samples is shorter than the channel memory of {memory} samples")]
    CyclicPrefixTooShort { cp: usize, memory: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
