use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("symbol index {index} outside sampled window of half-width {half_window}")]
    WindowExhausted { index: i64, half_window: usize },
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("degenerate Jacobian: {0}")]
    DegenerateJacobian(String),
    #[error("missing C2 bound for symbol {0}")]
    MissingC2Bound(usize),
    #[error("trivial leaf: unstable dimension is 0")]
    TrivialLeaf,
    #[error("graph transform diverged: {0}")]
    GraphTransformDiverged(String),
    #[error("point is off the leaf (distance {0:e})")]
    PointOffLeaf(f64),
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("conditioning atom has zero probability")]
    ZeroProbabilityAtom,
    #[error("disk too small: {0}")]
    DiskTooSmall(String),
    #[error("empty refined atom at n = {0}")]
    EmptyRefinedAtom(usize),
    #[error("unsupported measure: {0}")]
    UnsupportedMeasure(String),
    #[error("domain violation: {0}")]
    Domain(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
