//! Error type shared by every module of the core crate.

use core::fmt;

/// Failure modes of the core routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter lies outside its admissible domain.
    ParameterDomain(&'static str),
    /// Spectral parameters in the wrong order (`u < v` is required).
    Ordering { lower: f64, upper: f64 },
    /// A coordinate outside the lattice.
    Index { x: i64, y: i64 },
    /// The grid does not satisfy the ice rule (count of violating vertices).
    Validation(usize),
    /// Geometry does not support the requested operation.
    Geometry(&'static str),
    /// A jump reached the right edge of a window with no free exit.
    Overflow { row: usize },
    /// Requested object would exceed a size cap.
    Resource(&'static str),
    /// Thinning clock rate exceeded by an actual rate.
    Envelope { rate: f64, envelope: f64 },
    /// Numerical step violates a stability constraint.
    Step(&'static str),
    /// An internal consistency check failed.
    Consistency(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ParameterDomain(m) => write!(f, "parameter out of domain: {m}"),
            Error::Ordering { lower, upper } => {
                write!(f, "spectral parameters must satisfy u < v, got u={lower}, v={upper}")
            }
            Error::Index { x, y } => write!(f, "coordinate ({x},{y}) outside lattice"),
            Error::Validation(n) => write!(f, "grid has {n} ice-rule violations"),
            Error::Geometry(m) => write!(f, "unsupported geometry: {m}"),
            Error::Overflow { row } => write!(f, "jump in row {row} ran past the window edge"),
            Error::Resource(m) => write!(f, "resource cap exceeded: {m}"),
            Error::Envelope { rate, envelope } => {
                write!(f, "rate {rate} exceeds clock envelope {envelope}")
            }
            Error::Step(m) => write!(f, "step rejected: {m}"),
            Error::Consistency(m) => write!(f, "consistency failure: {m}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
