use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid anisotropy: {0}")]
    InvalidAnisotropy(String),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("vector is not unit length (|v| = {0})")]
    NotUnit(f64),
    #[error("point is not on the Wulff boundary (gauge = {0})")]
    NotOnBoundary(f64),
    #[error("invalid triplet parameters: {0}")]
    InvalidTripletParams(String),
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("unbounded network needs a window for its length")]
    UnboundedWithoutWindow,
    #[error("segments are not parallel (angle {0:e} rad)")]
    NotParallel(f64),
    #[error("networks are not parallel: {0}")]
    NetworksNotParallel(String),
    #[error("incompatible heights at junction {junction}: residual {residual:e}")]
    IncompatibleHeights { junction: usize, residual: f64 },
    #[error("degenerate intersection: {0}")]
    DegenerateIntersection(String),
    #[error("segment {curve}:{segment} collapsed (signed length {length:e})")]
    SegmentCollapsed {
        curve: usize,
        segment: usize,
        length: f64,
    },
    #[error("network is not regular for its crystalline anisotropies: {0}")]
    NotRegular(String),
    #[error("minimization is not strictly convex: {0}")]
    NotStrictlyConvex(String),
    #[error("junction {0} is degenerate")]
    DegenerateJunction(usize),
    #[error("closed-form consistency check failed: {0}")]
    Consistency(String),
    #[error("wrong anisotropy kind: {0}")]
    WrongAnisotropyKind(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("junction solve did not converge at junction {junction} (residual {residual:e})")]
    JunctionSolve { junction: usize, residual: f64 },
    #[error("mismatched junction perturbation at junction {0}")]
    MismatchedPerturbation(usize),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
