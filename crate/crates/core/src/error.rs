use thiserror::Error;

use crate::codec::CodecError;

/// Errors surfaced by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("code distance must be even and at least 4, got {0}")]
    InvalidDistance(usize),

    #[error("vertex address {address} out of range for a volume of {volume}")]
    AddressOutOfRange { address: usize, volume: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matching requires an even number of defects, got {0}")]
    OddDefectCount(usize),

    #[error("brute-force matching refuses {0} defects (limit is {limit})", limit = crate::matching::BRUTE_FORCE_LIMIT)]
    TooManyDefects(usize),

    #[error("lattice of distance {d} is too small for radius {radius} (need d >= {needed})")]
    LatticeTooSmall { d: usize, radius: usize, needed: usize },

    #[error("no distance up to {d_max} reaches the target failure probability")]
    NoSolution { d_max: usize },

    #[error("could not construct a failing error for d = {d}")]
    ConstructionFailed { d: usize },

    #[error("internal invariant violated: {0}")]
    InvariantViolation(String),

    #[error(transparent)]
    Codec(#[from] CodecError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
