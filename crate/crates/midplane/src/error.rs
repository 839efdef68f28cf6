//! Error types shared across the crate.

use std::fmt;

/// A single landmark-set invariant violation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Two entries share the same name.
    DuplicateName(String),
    /// Two points lie within the coincidence tolerance of each other.
    Coincident(String, String),
    /// A coordinate is NaN or infinite.
    NonFiniteCoordinate(String),
    /// The set contains no landmark pairs.
    NoPairs,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateName(name) => write!(f, "duplicate landmark name {name:?}"),
            Violation::Coincident(a, b) => write!(f, "coincident landmarks {a:?} and {b:?}"),
            Violation::NonFiniteCoordinate(name) => {
                write!(f, "non-finite coordinate on landmark {name:?}")
            }
            Violation::NoPairs => write!(f, "no pairs: at least one left/right pair is required"),
        }
    }
}

/// All invariant violations found while validating a landmark set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationErrors(pub Vec<Violation>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid landmark set: {0}")]
    InvalidSet(ValidationErrors),

    #[error("degenerate distance between {a:?} and {b:?} ({distance_mm} mm)")]
    DegenerateDistance {
        a: String,
        b: String,
        distance_mm: f64,
    },

    #[error("system too small: no landmark unit can be dropped")]
    SystemTooSmall,

    #[error("insufficient scores: need at least 3 for distribution statistics, got {0}")]
    InsufficientScores(usize),

    #[error("min_points must be at least 4, got {0}")]
    MinPointsTooSmall(usize),

    #[error("coincident pair {0:?}: right and left members overlap")]
    CoincidentPair(String),

    #[error("zero-length plane normal")]
    ZeroNormal,

    #[error("pair direction {0:?} lies in the candidate plane; the angle gradient is undefined")]
    InPlanePairDirection(String),

    #[error("degenerate landmark configuration: the smallest eigenvalue of the quadratic form is not simple")]
    DegenerateConfiguration,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("landmark {0:?} not found")]
    MissingLandmark(String),

    #[error("weight vector for {family} has length {got}, expected {expected}")]
    WeightLength {
        family: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("invalid weight for {family}: weights must be finite and non-negative")]
    InvalidWeight { family: &'static str },

    #[error("all point weights are zero; the plane offset is undetermined")]
    AllPointWeightsZero,

    #[error("gamma must be finite and non-negative, got {0}")]
    InvalidGamma(f64),
}
